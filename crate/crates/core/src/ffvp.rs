//! Backward problem: fixed point of
//! u(t) = P(t) [phi - Q(u)(T)] + Q(u)(t), P(t) = E_a(-A^b t^a) E_a(-A^b T^a)^{-1},
//! in the weighted space C_{s,rho}(T).

use crate::error::{FdError, Result};
use crate::fivp::{PicardPolicy, SourceSpec, Trajectory};
use crate::kernels::{backward_multiplier, convolve_q, estimate_e_constant, Orders, OrdersDomain, ProductWeights, TimeGrid};
use crate::mlf::{beta as beta_fn, gamma};
use crate::spectrum::{sobolev_norm_raw, SpectralField, SpectralOperator};
use rayon::prelude::*;
use std::sync::Arc;

/// Weighted space C_{s,rho}(T) with norm sup_t t^rho ||w(t)||_s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedSpace {
    pub s: f64,
    pub rho: f64,
    pub nu: f64,
}

impl WeightedSpace {
    pub fn new(orders: &Orders, s: f64, rho: f64, nu: f64) -> Result<Self> {
        let v = Self::violations(orders, s, rho, nu);
        if v.is_empty() {
            Ok(WeightedSpace { s, rho, nu })
        } else {
            Err(FdError::ConstraintViolations(v))
        }
    }

    pub fn violations(orders: &Orders, s: f64, rho: f64, nu: f64) -> Vec<String> {
        let mut v = Vec::new();
        if !(s >= 0.0 && s <= orders.beta / 2.0) {
            v.push("s_outside_zero_to_beta_half".to_string());
        }
        if !(rho >= orders.alpha) {
            v.push("rho_below_alpha".to_string());
        }
        if !(nu >= 0.0) {
            v.push("nu_negative".to_string());
        }
        if !(nu < 0.5 - rho) {
            v.push("nu_not_below_half_minus_rho".to_string());
        }
        if !(nu <= orders.alpha / 2.0) {
            v.push("nu_exceeds_alpha_half".to_string());
        }
        v
    }

    /// sup_j t_j^rho ||w(t_j)||_s over the given nodes.
    pub fn weighted_norm(&self, eigenvalues: &[f64], times: &[f64], coeffs: &[Vec<f64>]) -> f64 {
        times
            .iter()
            .zip(coeffs)
            .map(|(&t, c)| t.powf(self.rho) * sobolev_norm_raw(eigenvalues, c, self.s))
            .fold(0.0, f64::max)
    }

    pub fn trajectory_norm(&self, traj: &Trajectory) -> f64 {
        let c: Vec<Vec<f64>> = traj.fields().iter().map(|f| f.coeffs().to_vec()).collect();
        self.weighted_norm(traj.op().eigenvalues(), traj.times(), &c)
    }
}

/// Contraction budget of the backward map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FfvpConstants {
    pub e0: f64,
    pub e: f64,
    pub k0: f64,
    /// Lipschitz constant of the source from D(A^s) to H
    pub kappa: f64,
    pub contraction_factor: f64,
    pub l: f64,
    pub theta_t: f64,
    pub horizon: f64,
    pub theta: f64,
}

/// Gamma(1-2rho-2nu) / Gamma(1+alpha-2rho-2nu).
pub fn e0_constant(orders: &Orders, space: &WeightedSpace) -> Result<f64> {
    let x = 1.0 - 2.0 * space.rho - 2.0 * space.nu;
    if !(x > 0.0) {
        return Err(FdError::Configuration(format!("Beta argument 1-2rho-2nu = {x} must be positive")));
    }
    Ok(gamma(x)? / gamma(x + orders.alpha)?)
}

/// ||f(t, 0)||^2 written as sum_i c_i t^{p_i}.
fn source_at_zero_powers(op: &SpectralOperator, source: &SourceSpec) -> Result<Vec<(f64, f64)>> {
    let n0 = source.nonlinear(op, &vec![0.0; op.n()], None)?;
    // per mode: list of (coefficient, exponent)
    let mut terms: Vec<Vec<(f64, f64)>> = vec![Vec::new(); op.n()];
    for (k, &c) in n0.iter().enumerate() {
        if c != 0.0 {
            terms[k].push((c, -source.nu));
        }
    }
    for h in &source.forcing {
        for (k, &c) in h.coeffs.iter().enumerate() {
            if c != 0.0 {
                terms[k].push((c, h.q));
            }
        }
    }
    let mut out = Vec::new();
    for mode in &terms {
        for &(a, p) in mode {
            for &(b, q) in mode {
                out.push((a * b, p + q));
            }
        }
    }
    Ok(out)
}

/// Theta_alpha(t) = int_0^t (t-tau)^{a-1} ||f(tau, 0)||^2 dtau, term by term
/// with int_0^t (t-tau)^{a-1} tau^p dtau = B(a, p+1) t^{a+p}.
pub fn theta_alpha(orders: &Orders, op: &SpectralOperator, source: &SourceSpec, t: f64) -> Result<f64> {
    let terms = source_at_zero_powers(op, source)?;
    let a = orders.alpha;
    let mut acc = 0.0;
    for (c, p) in terms {
        if !(p > -1.0) {
            return Err(FdError::Configuration(format!(
                "||f(t,0)||^2 contains t^{p}; Theta_alpha is infinite"
            )));
        }
        acc += c * beta_fn(a, p + 1.0)? * t.powf(a + p);
    }
    Ok(acc.max(0.0))
}

/// sup_{t in (0,T]} t^{2 rho} Theta_alpha(t), on 2000 log-spaced times down to T 1e-12.
pub fn theta_sup(orders: &Orders, op: &SpectralOperator, source: &SourceSpec, space: &WeightedSpace, horizon: f64) -> Result<f64> {
    let terms = source_at_zero_powers(op, source)?;
    if terms.is_empty() {
        return Ok(0.0);
    }
    let n = 2000;
    let mut best: f64 = 0.0;
    for i in 0..n {
        let t = horizon * 10f64.powf(-12.0 * (1.0 - i as f64 / (n - 1) as f64));
        best = best.max(t.powf(2.0 * space.rho) * theta_alpha(orders, op, source, t)?);
    }
    Ok(best)
}

pub fn compute_constants(
    orders: &Orders,
    op: &SpectralOperator,
    space: &WeightedSpace,
    horizon: f64,
    source: &SourceSpec,
) -> Result<FfvpConstants> {
    let e = estimate_e_constant(orders, op, horizon, 200)?;
    compute_constants_with_e(orders, op, space, horizon, source, e)
}

/// Same as `compute_constants` with a given value of E.
pub fn compute_constants_with_e(
    orders: &Orders,
    op: &SpectralOperator,
    space: &WeightedSpace,
    horizon: f64,
    source: &SourceSpec,
    e: f64,
) -> Result<FfvpConstants> {
    let e0 = e0_constant(orders, space)?;
    let theta = op.theta();
    let k0 = 1.0 / (theta.powf(space.s - orders.beta / 2.0) * e0.sqrt() * e * horizon.powf(orders.alpha / 2.0 - space.nu));
    let kappa = source.kappa_at(space.s, theta);
    let contraction_factor = kappa * (1.0 + 1.0 / e) / k0;
    let theta_t = theta_sup(orders, op, source, space, horizon)?;
    Ok(FfvpConstants {
        e0,
        e,
        k0,
        kappa,
        contraction_factor,
        l: 2f64.sqrt() * contraction_factor,
        theta_t,
        horizon,
        theta,
    })
}

/// (1-L)^{-1} (E T^rho ||phi||_s + sqrt2 (1+E) theta^{s-b/2} (Theta_T / Gamma(a))^{1/2}).
pub fn upper_bound_certificate(
    constants: &FfvpConstants,
    orders: &Orders,
    phi: &SpectralField,
    space: &WeightedSpace,
) -> Result<f64> {
    if !(constants.l < 1.0) {
        return Err(FdError::CertificateUnavailable(constants.l));
    }
    let c = constants;
    let data = c.e * c.horizon.powf(space.rho) * phi.sobolev_norm(space.s);
    let src = 2f64.sqrt()
        * (1.0 + c.e)
        * c.theta.powf(space.s - orders.beta / 2.0)
        * (c.theta_t / gamma(orders.alpha)?).sqrt();
    Ok((data + src) / (1.0 - c.l))
}

/// Q(u)(t_j) = int_0^{t_j} K(A, t_j, tau) f(tau, u(tau)) dtau on a grid, with
/// the first cell using f at t_1 only.
pub struct VolterraQ<'a> {
    source: &'a SourceSpec,
    op: Arc<SpectralOperator>,
    weights: Option<ProductWeights>,
    forcing: Vec<Vec<f64>>,
}

impl<'a> VolterraQ<'a> {
    pub fn new(orders: &Orders, op: &Arc<SpectralOperator>, source: &'a SourceSpec, grid: &TimeGrid) -> Result<Self> {
        let weights = if source.is_zero_nonlinearity() {
            None
        } else {
            Some(ProductWeights::new(orders, op, grid, source.nu, true)?)
        };
        let forcing = grid
            .nodes()
            .par_iter()
            .map(|&t| if t == 0.0 { Ok(vec![0.0; op.n()]) } else { source.forcing_convolution(orders, op, t) })
            .collect::<Result<Vec<_>>>()?;
        Ok(VolterraQ { source, op: op.clone(), weights, forcing })
    }

    /// `u[n]` holds coefficients at node n (node 0 is ignored).
    pub fn apply(&self, u: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let m = self.forcing.len();
        let nl: Vec<Vec<f64>> = match &self.weights {
            Some(_) => (0..m)
                .into_par_iter()
                .map(|n| if n == 0 { Ok(vec![0.0; self.op.n()]) } else { self.source.nonlinear(&self.op, &u[n], None) })
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        (0..m)
            .into_par_iter()
            .map(|j| {
                let mut out = self.forcing[j].clone();
                if let (Some(w), true) = (&self.weights, j > 0) {
                    for (o, q) in out.iter_mut().zip(convolve_q(w, &nl, j)?) {
                        *o += q;
                    }
                }
                Ok(out)
            })
            .collect()
    }
}

/// Per-node backward multipliers; overflowing modes are reported together.
fn multipliers(orders: &Orders, op: &SpectralOperator, grid: &TimeGrid) -> Result<Vec<Vec<f64>>> {
    let t = grid.nodes();
    let horizon = grid.horizon();
    let mut bad = Vec::new();
    for (k, &l) in op.eigenvalues().iter().enumerate() {
        if backward_multiplier(orders, l, t[1], horizon).is_err() {
            bad.push(k + 1);
        }
    }
    if !bad.is_empty() {
        return Err(FdError::ModeOverflow { usable_modes: bad[0] - 1, modes: bad });
    }
    t.par_iter()
        .map(|&tj| {
            if tj == 0.0 {
                return Ok(vec![f64::NAN; op.n()]);
            }
            op.eigenvalues().iter().map(|&l| backward_multiplier(orders, l, tj, horizon)).collect()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FfvpSolution {
    /// Trajectory on t_1..t_M.
    pub trajectory: Trajectory,
    pub constants: FfvpConstants,
    /// false when solved with `force` despite contraction_factor >= 1
    pub certified: bool,
    /// weighted residuals sup_j t_j^rho ||u^{n+1} - u^n||_s per sweep
    pub residuals: Vec<f64>,
    pub weighted_norm: f64,
    pub certificate: Option<f64>,
}

/// Solves the backward problem by Picard iteration from u0 = P(t) phi.
pub fn solve_ffvp(
    orders: &Orders,
    phi: &SpectralField,
    source: &SourceSpec,
    grid: &TimeGrid,
    space: &WeightedSpace,
    policy: &PicardPolicy,
    force: bool,
) -> Result<FfvpSolution> {
    let op = phi.op().clone();
    let constants = compute_constants(orders, &op, space, grid.horizon(), source)?;
    solve_ffvp_with(orders, phi, source, grid, space, policy, force, constants)
}

#[allow(clippy::too_many_arguments)]
pub fn solve_ffvp_with(
    orders: &Orders,
    phi: &SpectralField,
    source: &SourceSpec,
    grid: &TimeGrid,
    space: &WeightedSpace,
    policy: &PicardPolicy,
    force: bool,
    constants: FfvpConstants,
) -> Result<FfvpSolution> {
    policy.validate()?;
    let mut v = WeightedSpace::violations(orders, space.s, space.rho, space.nu);
    if source.nu != space.nu {
        v.push("source_nu_differs_from_space_nu".to_string());
    }
    for (i, h) in source.forcing.iter().enumerate() {
        if h.coeffs.len() != phi.op().n() {
            v.push(format!("forcing_{i}_length_mismatch"));
        }
        if !(h.q > -1.0) {
            v.push(format!("forcing_{i}_exponent_not_above_minus_one"));
        }
    }
    if !v.is_empty() {
        return Err(FdError::ConstraintViolations(v));
    }
    let certified = constants.contraction_factor < 1.0;
    if !certified && !force {
        return Err(FdError::ContractionBudget { factor: constants.contraction_factor });
    }
    let op = phi.op().clone();
    let lam = op.eigenvalues().to_vec();
    let mult = multipliers(orders, &op, grid)?;
    let q_op = VolterraQ::new(orders, &op, source, grid)?;
    let m = grid.steps();
    let times = &grid.nodes()[1..];

    // u[n] for n = 0..=M, node 0 unused
    let build = |q: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let g: Vec<f64> = phi.coeffs().iter().zip(&q[m]).map(|(p, qt)| p - qt).collect();
        (0..=m)
            .map(|j| {
                if j == 0 {
                    return vec![0.0; op.n()];
                }
                (0..op.n()).map(|k| mult[j][k] * g[k] + q[j][k]).collect()
            })
            .collect()
    };
    let mut u: Vec<Vec<f64>> = (0..=m)
        .map(|j| if j == 0 { vec![0.0; op.n()] } else { (0..op.n()).map(|k| mult[j][k] * phi.coeffs()[k]).collect() })
        .collect();
    let mut residuals = Vec::new();
    let mut growth = 0usize;
    let mut done = None;
    if source.is_zero_nonlinearity() && source.forcing.is_empty() {
        done = Some(0);
        residuals.push(0.0);
    } else {
        for it in 1..=policy.max_iters {
            let next = build(&q_op.apply(&u)?);
            let diff: Vec<Vec<f64>> = next[1..]
                .iter()
                .zip(&u[1..])
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect();
            let r = space.weighted_norm(&lam, times, &diff);
            if !r.is_finite() {
                return Err(FdError::DivergingIteration { sweeps: it, residuals });
            }
            if let Some(&prev) = residuals.last() {
                growth = if r > prev { growth + 1 } else { 0 };
            }
            residuals.push(r);
            if r <= policy.tol {
                done = Some(it);
                break;
            }
            if growth >= 3 {
                return Err(FdError::DivergingIteration { sweeps: it, residuals });
            }
            u = next;
        }
    }
    let iterations = match done {
        Some(i) => i,
        None => return Err(FdError::IterationFailure { residuals }),
    };
    let fields = u
        .into_iter()
        .skip(1)
        .map(|c| SpectralField::new(op.clone(), c))
        .collect::<Result<Vec<_>>>()?;
    let mut trajectory = Trajectory::starting_at(grid.clone(), 1, fields, *orders, source.label())?;
    trajectory.set_convergence(iterations, *residuals.last().unwrap());
    let weighted_norm = space.trajectory_norm(&trajectory);
    let certificate = upper_bound_certificate(&constants, orders, phi, space).ok();
    Ok(FfvpSolution { trajectory, constants, certified, residuals, weighted_norm, certificate })
}

/// Weighted fixed-point residual sup_j t_j^rho ||u(t_j) - Q(u)(t_j)||_s, recomputed.
pub fn backward_residual(
    orders: &Orders,
    phi: &SpectralField,
    source: &SourceSpec,
    space: &WeightedSpace,
    traj: &Trajectory,
) -> Result<f64> {
    let op = phi.op().clone();
    let grid = traj.grid();
    let m = grid.steps();
    let mult = multipliers(orders, &op, grid)?;
    let q_op = VolterraQ::new(orders, &op, source, grid)?;
    let mut u = vec![vec![0.0; op.n()]];
    u.extend(traj.fields().iter().map(|f| f.coeffs().to_vec()));
    let q = q_op.apply(&u)?;
    let g: Vec<f64> = phi.coeffs().iter().zip(&q[m]).map(|(p, qt)| p - qt).collect();
    let diff: Vec<Vec<f64>> = (1..=m)
        .map(|j| (0..op.n()).map(|k| u[j][k] - mult[j][k] * g[k] - q[j][k]).collect())
        .collect();
    Ok(space.weighted_norm(op.eigenvalues(), &grid.nodes()[1..], &diff))
}

/// sup over t_j >= t_min of ||u_{phi+dphi}(t_j) - u_phi(t_j)||_s / ||dphi||_s.
#[allow(clippy::too_many_arguments)]
pub fn perturbation_response(
    orders: &Orders,
    phi: &SpectralField,
    dphi: &SpectralField,
    source: &SourceSpec,
    grid: &TimeGrid,
    space: &WeightedSpace,
    policy: &PicardPolicy,
    t_min: f64,
) -> Result<f64> {
    if !(t_min > 0.0) {
        return Err(FdError::Domain(format!("t_min = {t_min} must be positive")));
    }
    let dn = dphi.sobolev_norm(space.s);
    if dn == 0.0 {
        return Ok(0.0);
    }
    let constants = compute_constants(orders, phi.op(), space, grid.horizon(), source)?;
    let a = solve_ffvp_with(orders, phi, source, grid, space, policy, false, constants)?;
    let b = solve_ffvp_with(orders, &phi.add(dphi)?, source, grid, space, policy, false, constants)?;
    let mut worst: f64 = 0.0;
    for ((fa, fb), &t) in a.trajectory.fields().iter().zip(b.trajectory.fields()).zip(a.trajectory.times()) {
        if t >= t_min {
            worst = worst.max(fb.sub(fa)?.sobolev_norm(space.s));
        }
    }
    Ok(worst / dn)
}

/// K_m = min over the order box of K0 / (sqrt2 (1 + 1/E)), on a 32 x 32 grid.
pub fn k_m(
    domain: &OrdersDomain,
    op: &SpectralOperator,
    s: f64,
    rho: f64,
    nu: f64,
    horizon: f64,
) -> Result<f64> {
    let n = 32;
    let pts: Vec<(f64, f64)> = (0..n)
        .flat_map(|i| {
            (0..n).map(move |j| {
                let a = domain.alpha_lo + (domain.alpha_hi - domain.alpha_lo) * i as f64 / (n - 1) as f64;
                let b = domain.beta_lo + (domain.beta_hi - domain.beta_lo) * j as f64 / (n - 1) as f64;
                (a, b)
            })
        })
        .collect();
    let vals = pts
        .par_iter()
        .map(|&(a, b)| {
            let o = Orders::extended(a, b)?;
            let space = WeightedSpace { s, rho, nu };
            let e = estimate_e_constant(&o, op, horizon, 100)?;
            let e0 = e0_constant(&o, &space)?;
            let k0 = 1.0 / (op.theta().powf(s - b / 2.0) * e0.sqrt() * e * horizon.powf(a / 2.0 - nu));
            Ok(k0 / (2f64.sqrt() * (1.0 + 1.0 / e)))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(vals.into_iter().fold(f64::INFINITY, f64::min))
}
