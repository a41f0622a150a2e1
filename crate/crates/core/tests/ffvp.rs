use fracdiff::ffvp::*;
use fracdiff::fivp::*;
use fracdiff::kernels::{backward_multiplier, Orders, OrdersDomain, TimeGrid};
use fracdiff::mlf::{gamma, ml};
use fracdiff::spectrum::{SpectralField, SpectralOperator};
use fracdiff::FdError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn decaying(op: &Arc<SpectralOperator>, p: i32) -> SpectralField {
    SpectralField::new(op.clone(), (0..op.n()).map(|k| 1.0 / (1.0 + k as f64).powi(p)).collect()).unwrap()
}

fn half_space(o: &Orders) -> WeightedSpace {
    WeightedSpace::new(o, 0.0, 0.3, 0.0).unwrap()
}

#[test]
fn roundtrip_recovers_forward_trajectory() {
    let o = Orders::new(0.3, 1.0).unwrap();
    let op = SpectralOperator::dirichlet_laplacian(32, 64).unwrap();
    let zeta = decaying(&op, 2);
    let source = SourceSpec::pointwise(ScalarMap::Sin { amplitude: 0.1 }, 0.1).unwrap();
    let grid = TimeGrid::graded(1.0, 256, 0.3).unwrap();
    let policy = PicardPolicy::default();
    let fwd = solve_fivp(&o, &zeta, &source, &grid, &policy).unwrap();
    let space = half_space(&o);
    let phi = fwd.last();
    let sol = solve_ffvp(&o, phi, &source, &grid, &space, &policy, false).unwrap();
    assert!(sol.certified && sol.constants.contraction_factor < 1.0);
    let mut worst: f64 = 0.0;
    for (f, &t) in sol.trajectory.fields().iter().zip(sol.trajectory.times()) {
        if t >= 0.1 {
            let j = grid.nodes().iter().position(|&x| x == t).unwrap();
            worst = worst.max(f.sub(fwd.at(j)).unwrap().norm());
        }
    }
    assert!(worst < 1e-3, "{worst}");
    let cert = sol.certificate.unwrap();
    assert!(sol.weighted_norm <= 1.05 * cert, "{} vs {cert}", sol.weighted_norm);
    assert!(sol.trajectory.last().sub(phi).unwrap().norm() <= policy.tol * phi.norm());
    let r = backward_residual(&o, phi, &source, &space, &sol.trajectory).unwrap();
    assert!(r <= policy.tol, "{r}");
}

#[test]
fn linear_homogeneous_closed_form() {
    let o = Orders::new(0.4, 1.5).unwrap();
    let op = SpectralOperator::dirichlet_laplacian(6, 12).unwrap();
    let phi = decaying(&op, 1);
    let grid = TimeGrid::graded(1.0, 16, 0.4).unwrap();
    let space = WeightedSpace::new(&o, 0.5, 0.4, 0.0).unwrap();
    let sol = solve_ffvp(&o, &phi, &SourceSpec::zero(), &grid, &space, &PicardPolicy::default(), false).unwrap();
    assert_eq!(sol.trajectory.start(), 1);
    assert_eq!(sol.trajectory.times().len(), 16);
    for (f, &t) in sol.trajectory.fields().iter().zip(sol.trajectory.times()) {
        for k in 0..6 {
            let l = op.eigenvalues()[k].powf(1.5);
            let want = ml(0.4, 1.0, -l * t.powf(0.4)).unwrap() / ml(0.4, 1.0, -l).unwrap() * phi.coeffs()[k];
            assert!((f.coeffs()[k] - want).abs() <= 1e-13 * want.abs(), "t={t} k={k}");
        }
    }
}

#[test]
fn constants_examples() {
    let o = Orders::new(0.3, 1.0).unwrap();
    let op = SpectralOperator::dirichlet_laplacian(8, 16).unwrap();
    let space = half_space(&o);
    let c = compute_constants(&o, &op, &space, 1.0, &SourceSpec::zero()).unwrap();
    assert!((c.e0 - gamma(0.4).unwrap() / gamma(0.7).unwrap()).abs() < 1e-14);
    assert_eq!(c.contraction_factor, 0.0);
    assert_eq!(c.theta_t, 0.0);
    let sin = SourceSpec::pointwise(ScalarMap::Sin { amplitude: 0.5 }, 0.5).unwrap();
    assert_eq!(compute_constants(&o, &op, &space, 1.0, &sin).unwrap().theta_t, 0.0);
    let want_k0 = 1.0 / (op.theta().powf(-0.5) * c.e0.sqrt() * c.e);
    assert!((c.k0 - want_k0).abs() < 1e-12 * want_k0);
}

#[test]
fn theta_for_constant_source() {
    // f(t, 0) = a phi_1 constant: Theta(t) = a^2 t^alpha / alpha
    let o = Orders::new(0.3, 1.0).unwrap();
    let op = SpectralOperator::explicit_diagonal(vec![2.0, 5.0]).unwrap();
    let space = half_space(&o);
    let src = SourceSpec::zero().with_forcing(0.0, vec![1.5, 0.0]);
    let th = theta_alpha(&o, &op, &src, 0.7).unwrap();
    assert!((th - 2.25 * 0.7f64.powf(0.3) / 0.3).abs() < 1e-12);
    let sup = theta_sup(&o, &op, &src, &space, 1.0).unwrap();
    assert!((sup - 2.25 / 0.3).abs() < 1e-12);
}

#[test]
fn certificate_examples() {
    let o = Orders::new(0.3, 1.0).unwrap();
    let op = SpectralOperator::dirichlet_laplacian(8, 16).unwrap();
    let space = WeightedSpace::new(&o, 0.25, 0.35, 0.0).unwrap();
    let zero_phi = SpectralField::zeros(op.clone());
    let c = compute_constants(&o, &op, &space, 2.0, &SourceSpec::zero()).unwrap();
    assert_eq!(upper_bound_certificate(&c, &o, &zero_phi, &space).unwrap(), 0.0);
    let grid = TimeGrid::graded(2.0, 16, 0.3).unwrap();
    let sol = solve_ffvp(&o, &zero_phi, &SourceSpec::zero(), &grid, &space, &PicardPolicy::default(), false).unwrap();
    assert!(sol.trajectory.fields().iter().all(|f| f.coeffs().iter().all(|&x| x == 0.0)));
    let phi = decaying(&op, 2);
    let want = c.e * 2f64.powf(0.35) * phi.sobolev_norm(0.25);
    assert!((upper_bound_certificate(&c, &o, &phi, &space).unwrap() - want).abs() < 1e-13 * want);
    let big = FfvpConstants { l: 1.2, ..c };
    assert!(matches!(upper_bound_certificate(&big, &o, &phi, &space), Err(FdError::CertificateUnavailable(_))));
}

#[test]
fn certificate_bounds_forced_solution() {
    let o = Orders::new(0.3, 1.0).unwrap();
    let op = SpectralOperator::dirichlet_laplacian(8, 16).unwrap();
    let space = WeightedSpace::new(&o, 0.2, 0.3, 0.1).unwrap();
    let src = SourceSpec::pointwise(ScalarMap::Affine { slope: 0.3, offset: 0.2 }, 0.3)
        .unwrap()
        .with_nu(0.1)
        .with_forcing(0.5, (0..8).map(|k| 0.1 / (1.0 + k as f64)).collect());
    let grid = TimeGrid::graded(1.0, 128, 0.3).unwrap();
    let sol = solve_ffvp(&o, &decaying(&op, 2), &src, &grid, &space, &PicardPolicy::default(), false).unwrap();
    assert!(sol.constants.theta_t > 0.0);
    let cert = sol.certificate.unwrap();
    assert!(sol.weighted_norm <= 1.05 * cert, "{} vs {cert}", sol.weighted_norm);
}

#[test]
fn space_constraints_reported_by_name() {
    let o = Orders::new(0.6, 1.0).unwrap();
    match WeightedSpace::new(&o, 0.0, 0.6, 0.0) {
        Err(FdError::ConstraintViolations(v)) => assert_eq!(v, vec!["nu_not_below_half_minus_rho"]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn contraction_budget_enforced_unless_forced() {
    let o = Orders::new(0.3, 1.0).unwrap();
    let op = SpectralOperator::explicit_diagonal(vec![1.0, 2.0]).unwrap();
    let phi = SpectralField::new(op.clone(), vec![1.0, 0.5]).unwrap();
    let grid = TimeGrid::graded(1.0, 32, 0.3).unwrap();
    let space = half_space(&o);
    let src = SourceSpec::linear(3.0);
    let p = PicardPolicy::default();
    assert!(matches!(solve_ffvp(&o, &phi, &src, &grid, &space, &p, false), Err(FdError::ContractionBudget { .. })));
    match solve_ffvp(&o, &phi, &src, &grid, &space, &p, true) {
        Ok(sol) => assert!(!sol.certified && sol.certificate.is_none()),
        Err(e) => assert!(matches!(e, FdError::DivergingIteration { .. } | FdError::IterationFailure { .. })),
    }
}

#[test]
fn diverging_iteration_detected() {
    let o = Orders::new(0.3, 1.0).unwrap();
    let op = SpectralOperator::explicit_diagonal(vec![1.0]).unwrap();
    let phi = SpectralField::new(op, vec![1.0]).unwrap();
    let grid = TimeGrid::graded(1.0, 32, 0.3).unwrap();
    let space = half_space(&o);
    let src = SourceSpec::linear(-40.0);
    let err = solve_ffvp(&o, &phi, &src, &grid, &space, &PicardPolicy::default(), true).unwrap_err();
    match err {
        FdError::DivergingIteration { residuals, .. } => {
            let n = residuals.len();
            assert!(residuals[n - 1] > residuals[n - 2] && residuals[n - 2] > residuals[n - 3]);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn mode_overflow_lists_modes() {
    let o = Orders::new(1.0, 1.0).unwrap();
    let op = SpectralOperator::dirichlet_laplacian(16, 32).unwrap();
    let phi = decaying(&op, 2);
    let grid = TimeGrid::graded(1.0, 8, 1.0).unwrap();
    let space = WeightedSpace { s: 0.0, rho: 0.0, nu: 0.0 };
    let c = compute_constants_with_e(&o, &op, &space, 1.0, &SourceSpec::zero(), 1.0).unwrap();
    match solve_ffvp_with(&o, &phi, &SourceSpec::zero(), &grid, &space, &PicardPolicy::default(), false, c) {
        Err(FdError::ConstraintViolations(v)) => assert!(v.contains(&"rho_below_alpha".to_string())),
        other => panic!("{other:?}"),
    }
    let o = Orders::new(0.45, 1.0).unwrap();
    let space = WeightedSpace::new(&o, 0.0, 0.45, 0.0).unwrap();
    let op = SpectralOperator::explicit_diagonal(vec![1.0, 10.0, 1e308, 1.5e308]).unwrap();
    let phi = SpectralField::new(op.clone(), vec![1.0; 4]).unwrap();
    let c = compute_constants_with_e(&o, &op, &space, 1.0, &SourceSpec::zero(), 1.0).unwrap();
    match solve_ffvp_with(&o, &phi, &SourceSpec::zero(), &grid, &space, &PicardPolicy::default(), false, c) {
        Err(FdError::ModeOverflow { usable_modes, modes }) => {
            assert_eq!(usable_modes, 2);
            assert_eq!(modes, vec![3, 4]);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn perturbation_examples() {
    let o = Orders::new(0.3, 1.0).unwrap();
    let op = SpectralOperator::explicit_diagonal(vec![4.0]).unwrap();
    let phi = SpectralField::new(op.clone(), vec![1.0]).unwrap();
    let grid = TimeGrid::graded(1.0, 32, 0.3).unwrap();
    let space = half_space(&o);
    let p = PicardPolicy::default();
    let zero = SpectralField::zeros(op.clone());
    assert_eq!(perturbation_response(&o, &phi, &zero, &SourceSpec::zero(), &grid, &space, &p, 0.1).unwrap(), 0.0);
    let d = SpectralField::new(op.clone(), vec![1e-3]).unwrap();
    let t_min = grid.nodes()[20];
    let r = perturbation_response(&o, &phi, &d, &SourceSpec::zero(), &grid, &space, &p, t_min).unwrap();
    let want = backward_multiplier(&o, 4.0, t_min, 1.0).unwrap();
    assert!((r - want).abs() < 1e-12 * want);
}

#[test]
fn perturbation_nonlinear_bound() {
    let o = Orders::new(0.3, 1.0).unwrap();
    let op = SpectralOperator::dirichlet_laplacian(8, 16).unwrap();
    let phi = decaying(&op, 2);
    let grid = TimeGrid::graded(1.0, 64, 0.3).unwrap();
    let space = half_space(&o);
    let src = SourceSpec::pointwise(ScalarMap::Tanh { amplitude: 0.3 }, 0.3).unwrap();
    let c = compute_constants(&o, &op, &space, 1.0, &src).unwrap();
    let km = c.k0 / (2f64.sqrt() * (1.0 + 1.0 / c.e));
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let dphi = SpectralField::new(op.clone(), (0..8).map(|_| rng.gen_range(-1e-2..1e-2)).collect()).unwrap();
    let t_min = 0.1;
    let r = perturbation_response(&o, &phi, &dphi, &src, &grid, &space, &PicardPolicy::default(), t_min).unwrap();
    let bound = c.e * (1.0 / t_min).powf(0.3) / (1.0 - c.kappa / km);
    assert!(r <= 1.1 * bound, "{r} vs {bound}");
}

#[test]
fn k_m_is_minimum_over_box() {
    let op = SpectralOperator::dirichlet_laplacian(8, 16).unwrap();
    let d = OrdersDomain::new(0.2, 0.3, 0.8, 1.2).unwrap();
    let km = k_m(&d, &op, 0.0, 0.3, 0.0, 1.0).unwrap();
    assert!(km > 0.0 && km.is_finite());
    for (a, b) in [(0.2, 0.8), (0.3, 1.2), (0.25, 1.0)] {
        let o = Orders::new(a, b).unwrap();
        let space = WeightedSpace { s: 0.0, rho: 0.3, nu: 0.0 };
        let c = compute_constants(&o, &op, &space, 1.0, &SourceSpec::zero()).unwrap();
        let here = c.k0 / (2f64.sqrt() * (1.0 + 1.0 / c.e));
        assert!(km <= here * 1.02, "({a},{b}): {km} > {here}");
    }
}

/// sup of tau^rho ||w(tau)||_s over the piecewise-linear interpolant, with the
/// first cell held at w(t_1).
fn interpolant_weighted_norm(space: &WeightedSpace, lam: &[f64], nodes: &[f64], w: &[Vec<f64>]) -> f64 {
    let mut best: f64 = 0.0;
    let norm = |c: &[f64]| fracdiff::spectrum::sobolev_norm_raw(lam, c, space.s);
    best = best.max(nodes[1].powf(space.rho) * norm(&w[1]));
    for j in 1..nodes.len() - 1 {
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            let t = nodes[j] + x * (nodes[j + 1] - nodes[j]);
            let c: Vec<f64> = w[j].iter().zip(&w[j + 1]).map(|(a, b)| a + x * (b - a)).collect();
            best = best.max(t.powf(space.rho) * norm(&c));
        }
    }
    best
}

fn random_weighted(rng: &mut ChaCha8Rng, nodes: &[f64], n: usize, rho: f64) -> Vec<Vec<f64>> {
    let p = rng.gen_range(0.0..1.0) * rho;
    nodes
        .iter()
        .map(|&t| {
            let scale = if t > 0.0 { t.powf(-p) } else { 0.0 };
            (0..n).map(|_| rng.gen_range(-1.0..1.0) * scale).collect()
        })
        .collect()
}

#[test]
fn q_lipschitz_estimate() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let op = SpectralOperator::dirichlet_laplacian(8, 16).unwrap();
    let lam = op.eigenvalues().to_vec();
    for case in 0..6 {
        let alpha: f64 = rng.gen_range(0.2..0.45);
        let rho: f64 = rng.gen_range(alpha..0.48);
        let nu = rng.gen_range(0.0..(0.5 - rho).min(alpha / 2.0)) * 0.9;
        let o = Orders::new(alpha, rng.gen_range(0.8..1.6)).unwrap();
        let s = rng.gen_range(0.0..o.beta / 2.0);
        let space = WeightedSpace::new(&o, s, rho, nu).unwrap();
        let src = if case % 2 == 0 {
            SourceSpec::linear(rng.gen_range(0.1..2.0)).with_nu(nu)
        } else {
            SourceSpec::pointwise(ScalarMap::Sin { amplitude: 1.5 }, 1.5).unwrap().with_nu(nu)
        };
        let grid = TimeGrid::graded(1.0, 64, alpha).unwrap();
        let q = VolterraQ::new(&o, &op, &src, &grid).unwrap();
        let t = grid.nodes();
        let w1 = random_weighted(&mut rng, t, 8, rho);
        let w2 = random_weighted(&mut rng, t, 8, rho);
        let diff: Vec<Vec<f64>> = w1.iter().zip(&w2).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect()).collect();
        let dn = interpolant_weighted_norm(&space, &lam, t, &diff);
        let (q1, q2) = (q.apply(&w1).unwrap(), q.apply(&w2).unwrap());
        let e0 = e0_constant(&o, &space).unwrap();
        let kappa = src.kappa_at(s, op.theta());
        for j in 1..t.len() {
            let d: Vec<f64> = q1[j].iter().zip(&q2[j]).map(|(a, b)| a - b).collect();
            let lhs = fracdiff::spectrum::sobolev_norm_raw(&lam, &d, s);
            let rhs = kappa * op.theta().powf(s - o.beta / 2.0) * e0.sqrt() * dn * t[j].powf(alpha / 2.0 - rho - nu);
            assert!(lhs <= 1.05 * rhs + 1e-10, "case {case} node {j}: {lhs} > {rhs}");
        }
    }
}

#[test]
fn q_growth_estimate() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let op = SpectralOperator::dirichlet_laplacian(8, 16).unwrap();
    let lam = op.eigenvalues().to_vec();
    for case in 0..6 {
        let alpha: f64 = rng.gen_range(0.2..0.45);
        let rho: f64 = rng.gen_range(alpha..0.48);
        let nu = rng.gen_range(0.0..(0.5 - rho).min(alpha / 2.0)) * 0.9;
        let o = Orders::new(alpha, 1.0).unwrap();
        let s = rng.gen_range(0.0..0.5);
        let space = WeightedSpace::new(&o, s, rho, nu).unwrap();
        let src = SourceSpec::pointwise(ScalarMap::Affine { slope: 1.2, offset: 0.4 }, 1.2)
            .unwrap()
            .with_nu(nu)
            .with_forcing(rng.gen_range(-0.2..1.0), (0..8).map(|_| rng.gen_range(-0.3..0.3)).collect());
        let grid = TimeGrid::graded(1.0, 64, alpha).unwrap();
        let q = VolterraQ::new(&o, &op, &src, &grid).unwrap();
        let t = grid.nodes();
        let w = random_weighted(&mut rng, t, 8, rho);
        let wn = interpolant_weighted_norm(&space, &lam, t, &w);
        let qw = q.apply(&w).unwrap();
        let e0 = e0_constant(&o, &space).unwrap();
        let kappa = src.kappa_at(s, op.theta());
        for j in 1..t.len() {
            let lhs = fracdiff::spectrum::sobolev_norm_raw(&lam, &qw[j], s).powi(2);
            let th = theta_alpha(&o, &op, &src, t[j]).unwrap();
            let rhs = 2.0
                * op.theta().powf(2.0 * s - 1.0)
                * (th / gamma(alpha).unwrap() + kappa * kappa * e0 * wn * wn * t[j].powf(alpha - 2.0 * rho - 2.0 * nu));
            assert!(lhs <= 1.05 * rhs + 1e-10, "case {case} node {j}: {lhs} > {rhs}");
        }
    }
}

#[test]
fn residuals_contract_monotonically() {
    let o = Orders::new(0.3, 1.0).unwrap();
    let op = SpectralOperator::dirichlet_laplacian(8, 16).unwrap();
    let phi = decaying(&op, 1);
    let grid = TimeGrid::graded(1.0, 64, 0.3).unwrap();
    let space = half_space(&o);
    let src = SourceSpec::linear(-0.6);
    let p = PicardPolicy { tol: 1e-14, ..PicardPolicy::default() };
    let sol = solve_ffvp(&o, &phi, &src, &grid, &space, &p, false).unwrap();
    let r = &sol.residuals;
    assert!(r.len() >= 6, "{r:?}");
    let cf = sol.constants.contraction_factor;
    for w in r[r.len() - 6..].windows(2) {
        assert!(w[1] <= (cf + 0.05) * w[0], "{r:?} with factor {cf}");
    }
}
