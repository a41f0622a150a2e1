//! Ill-posedness demo, the t_eps regularization rule and order-stability
//! rate experiments.

use crate::error::{FdError, Result};
use crate::ffvp::{solve_ffvp, WeightedSpace};
use crate::fivp::{solve_fivp, PicardPolicy, SourceSpec, Trajectory};
use crate::kernels::{Orders, OrdersDomain, TimeGrid};
use crate::mlf::{evaluator, gamma};
use crate::spectrum::{SpectralField, SpectralOperator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::sync::Arc;

/// Regularity exponents and the Hölder rates built from them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateParams {
    pub r1: f64,
    pub r2: f64,
    pub r: f64,
    /// norm index of the forward comparison
    pub s: f64,
    /// Hölder exponent of the truth at t = 0
    pub rho: f64,
    pub alpha_hi: f64,
    pub beta_hi: f64,
}

impl RateParams {
    pub fn new(r1: f64, r2: f64, r: f64, s: f64, rho: f64, domain: &OrdersDomain) -> Result<Self> {
        let p = RateParams { r1, r2, r, s, rho, alpha_hi: domain.alpha_hi, beta_hi: domain.beta_hi };
        let v = p.violations();
        if v.is_empty() {
            Ok(p)
        } else {
            Err(FdError::ConstraintViolations(v))
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, x) in [("r1", self.r1), ("r2", self.r2), ("r", self.r), ("rho", self.rho)] {
            if !(x > 0.0) || !x.is_finite() {
                v.push(format!("{name}_not_positive"));
            }
        }
        if !(self.s >= 0.0) {
            v.push("s_negative".into());
        }
        if v.is_empty() {
            if !(self.gamma2() > 0.0) {
                v.push("gamma2_not_positive".into());
            }
            for (name, e) in [
                ("fivp_exponent", self.fivp_exponent()),
                ("ffvp_exponent", self.ffvp_exponent()),
                ("reg_exponent", self.reg_exponent()),
            ] {
                if !(e > 0.0 && e <= 0.5) {
                    v.push(format!("{name}_outside_zero_to_half"));
                }
            }
        }
        v
    }

    pub fn gamma1(&self) -> f64 {
        (self.beta_hi + 2.0 * (self.s - self.r1)).max(2.0 * (self.s - self.r2)).max(0.0)
    }

    pub fn gamma2(&self) -> f64 {
        (self.beta_hi + 2.0 * (self.r1 - self.s)).min(2.0 * self.r2)
    }

    pub fn fivp_exponent(&self) -> f64 {
        let (g1, g2) = (self.gamma1(), self.gamma2());
        g2 / (2.0 * (g1 + g2 + 2.0))
    }

    pub fn ffvp_exponent(&self) -> f64 {
        self.r / (2.0 * (self.r + 2.0 * self.beta_hi + 1.0))
    }

    pub fn reg_exponent(&self) -> f64 {
        self.r * self.rho / (2.0 * (self.alpha_hi + self.rho) * (self.r + 2.0 * self.beta_hi + 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DataNoise {
    None,
    /// seeded coefficient noise rescaled to norm exactly eps
    Scaled { seed: u64 },
}

/// Order perturbations (alpha + d_a eps, beta + d_b eps) with |d_a| + |d_b| = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationPlan {
    pub base: Orders,
    pub domain: OrdersDomain,
    pub eps: Vec<f64>,
    pub direction: (f64, f64),
    pub noise: DataNoise,
}

impl PerturbationPlan {
    pub fn new(base: Orders, domain: OrdersDomain) -> Self {
        PerturbationPlan { base, domain, eps: default_eps(), direction: (0.5, 0.5), noise: DataNoise::None }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.eps.len() < 4 {
            v.push("need_at_least_4_points_for_slope_fit".into());
        }
        if self.eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            v.push("eps_outside_zero_one".into());
        }
        let (da, db) = self.direction;
        if !((da.abs() + db.abs() - 1.0).abs() < 1e-12) {
            v.push("direction_not_unit_l1".into());
        }
        if !self.domain.contains(&self.base) {
            v.push("base_orders_outside_domain".into());
        } else if self.eps.iter().any(|&e| self.perturbed(e).map_or(true, |o| !self.domain.contains(&o))) {
            v.push("perturbed_orders_outside_domain".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(FdError::ConstraintViolations(v))
        }
    }

    pub fn perturbed(&self, eps: f64) -> Result<Orders> {
        Orders::new(self.base.alpha + self.direction.0 * eps, self.base.beta + self.direction.1 * eps)
    }
}

/// Seven log-spaced magnitudes from 1e-1 to 1e-4.
pub fn default_eps() -> Vec<f64> {
    (0..7).map(|i| 10f64.powf(-1.0 - 0.5 * i as f64)).collect()
}

/// Coefficient noise with ||delta||_index = eps exactly; stream `i` of a
/// ChaCha8 generator seeded with `seed`.
pub fn scaled_noise(op: &Arc<SpectralOperator>, seed: u64, stream: u64, index: f64, eps: f64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let raw: Vec<f64> = (0..op.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let f = SpectralField::new(op.clone(), raw).expect("noise length matches operator");
    let n = f.sobolev_norm(index);
    if n > 0.0 {
        f.scale(eps / n)
    } else {
        f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IllposedRow {
    pub n: usize,
    pub lambda: f64,
    pub beta_n: f64,
    pub phi_norm: f64,
    pub fixed_norm: f64,
    pub perturbed_norm: f64,
    /// lambda^{beta_n - beta}
    pub identity_lhs: f64,
    /// ln^2 lambda
    pub identity_rhs: f64,
    /// recovered norm overflowed; the reported value is a lower bound
    pub overflow: bool,
}

/// Data Phi_n = phi_n / (lambda_n^beta ln lambda_n) vanish while the backward
/// solutions at the perturbed orders beta_n = beta + 2 ln ln lambda_n / ln lambda_n
/// grow. Mode indices are 1-based.
pub fn illposed_demo(orders: &Orders, op: &SpectralOperator, horizon: f64, modes: &[usize]) -> Result<Vec<IllposedRow>> {
    let e = evaluator(orders.alpha, 1.0)?;
    let ta = horizon.powf(orders.alpha);
    let mut rows = Vec::with_capacity(modes.len());
    for &n in modes {
        if n == 0 || n > op.n() {
            return Err(FdError::Domain(format!("mode {n} outside 1..={}", op.n())));
        }
        let lambda = op.eigenvalues()[n - 1];
        if !(lambda > std::f64::consts::E) {
            return Err(FdError::Domain(format!("illposed demo needs lambda_n > e, got {lambda} at n={n}")));
        }
        let ln = lambda.ln();
        let beta_n = orders.beta + 2.0 * ln.ln() / ln;
        let phi_norm = 1.0 / (lambda.powf(orders.beta) * ln);
        let mut overflow = false;
        let mut recover = |b: f64| -> Result<f64> {
            let d = e.eval(-lambda.powf(b) * ta)?;
            if d > f64::MIN_POSITIVE && (phi_norm / d).is_finite() {
                Ok(phi_norm / d)
            } else {
                overflow = true;
                Ok(phi_norm / f64::MIN_POSITIVE)
            }
        };
        let fixed_norm = recover(orders.beta)?;
        let perturbed_norm = recover(beta_n)?;
        rows.push(IllposedRow {
            n,
            lambda,
            beta_n,
            phi_norm,
            fixed_norm,
            perturbed_norm,
            identity_lhs: ((beta_n - orders.beta) * ln).exp(),
            identity_rhs: ln * ln,
            overflow,
        });
    }
    Ok(rows)
}

/// t_eps = eps^{r / (2 (alpha^* + rho)(r + 2 beta^* + 1))}
pub fn choose_t_eps(eps: f64, r: f64, rho: f64, alpha_hi: f64, beta_hi: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(FdError::Domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    Ok(eps.powf(r / (2.0 * (alpha_hi + rho) * (r + 2.0 * beta_hi + 1.0))))
}

/// Clamp t to the smallest positive node; the flag reports clamping.
pub fn clamp_to_grid(t: f64, grid: &TimeGrid) -> (f64, bool) {
    let t1 = grid.nodes()[1];
    if t < t1 {
        (t1, true)
    } else {
        (t.min(grid.horizon()), false)
    }
}

/// Piecewise-linear value of a trajectory at t.
pub fn interpolate(traj: &Trajectory, t: f64) -> Result<SpectralField> {
    let times = traj.times();
    if !(t >= times[0] && t <= *times.last().unwrap()) {
        return Err(FdError::Domain(format!("t={t} outside [{}, {}]", times[0], times.last().unwrap())));
    }
    let j = times.partition_point(|&x| x <= t).min(times.len() - 1).max(1);
    let (a, b) = (times[j - 1], times[j]);
    let x = (t - a) / (b - a);
    traj.at(j - 1).scale(1.0 - x).add(&traj.at(j).scale(x))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegReport {
    pub t_eps: f64,
    pub clamped: bool,
    pub exponent: f64,
    /// ||u_eps(t_eps) - u(0)||_sigma when the truth is known
    pub error: Option<f64>,
}

/// Backward solve from (phi_eps, alpha_eps, beta_eps) and read u(t_eps) as the
/// approximation of u(0).
#[allow(clippy::too_many_arguments)]
pub fn regularized_initial(
    phi_eps: &SpectralField,
    orders_eps: &Orders,
    eps: f64,
    rate: &RateParams,
    source: &SourceSpec,
    grid: &TimeGrid,
    space: &WeightedSpace,
    policy: &PicardPolicy,
    truth: Option<(&SpectralField, f64)>,
) -> Result<(SpectralField, RegReport)> {
    let t = choose_t_eps(eps, rate.r, rate.rho, rate.alpha_hi, rate.beta_hi)?;
    let (t_eps, clamped) = clamp_to_grid(t, grid);
    let sol = solve_ffvp(orders_eps, phi_eps, source, grid, space, policy, false)?;
    let u = interpolate(&sol.trajectory, t_eps)?;
    let error = match truth {
        Some((u0, sigma)) => Some(u.sub(u0)?.sobolev_norm(sigma)),
        None => None,
    };
    Ok((u, RegReport { t_eps, clamped, exponent: rate.reg_exponent(), error }))
}

/// Least-squares fit of log10 y = a + b log10 x over positive pairs; returns (a, b).
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.log10(), y.log10()))
        .collect();
    if pts.len() < 2 {
        return Err(FdError::InsufficientData(format!("slope fit needs 2 positive points, got {}", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(FdError::InsufficientData("slope fit needs distinct abscissae".into()));
    }
    let b = sxy / sxx;
    Ok((my - b * mx, b))
}

/// Fit ||u(t) - u(0)||_gamma ~ E t^rho over nodes in [window.0, window.1].
/// A constant trajectory gives (0, inf).
pub fn holder_class_check(traj: &Trajectory, gamma_index: f64, window: (f64, f64)) -> Result<(f64, f64)> {
    if traj.start() != 0 {
        return Err(FdError::Domain("Hölder check needs the value at t = 0".into()));
    }
    let u0 = traj.at(0);
    let mut ts = Vec::new();
    let mut ds = Vec::new();
    for (f, &t) in traj.fields().iter().zip(traj.times()) {
        if t > 0.0 && t >= window.0 && t <= window.1 {
            ts.push(t);
            ds.push(f.sub(u0)?.sobolev_norm(gamma_index));
        }
    }
    if ts.len() < 4 {
        return Err(FdError::InsufficientData(format!("Hölder fit needs 4 nodes in window, got {}", ts.len())));
    }
    if ds.iter().all(|&d| d == 0.0) {
        return Ok((0.0, f64::INFINITY));
    }
    let (a, b) = loglog_fit(&ts, &ds)?;
    Ok((10f64.powf(a), b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub eps: f64,
    pub err: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    pub slope: f64,
    pub theory: f64,
    /// errors nonincreasing as eps decreases, up to 5%
    pub monotone: bool,
    /// final error below a tenth of the first
    pub decayed: bool,
    pub pass: bool,
}

impl RateReport {
    fn assemble(mut rows: Vec<RateRow>, theory: f64, need_decay: bool) -> Self {
        rows.sort_by(|a, b| b.eps.total_cmp(&a.eps));
        let ok: Vec<&RateRow> = rows.iter().filter(|r| r.err.is_some()).collect();
        let complete = ok.len() == rows.len();
        let errs: Vec<f64> = ok.iter().map(|r| r.err.unwrap()).collect();
        let eps: Vec<f64> = ok.iter().map(|r| r.eps).collect();
        let slope = loglog_fit(&eps, &errs).map(|(_, b)| b).unwrap_or(f64::NAN);
        let monotone = errs.windows(2).all(|w| w[1] <= 1.05 * w[0]);
        let decayed = match (errs.first(), errs.last()) {
            (Some(&a), Some(&b)) => b < a / 10.0,
            _ => false,
        };
        let pass = complete && monotone && slope >= theory - 0.1 && (!need_decay || decayed);
        RateReport { rows, slope, theory, monotone, decayed, pass }
    }

    /// Rows `eps,err,log10_eps,log10_err` in full precision; failed rows
    /// carry NaN.
    pub fn csv(&self) -> String {
        let mut out = String::from("eps,err,log10_eps,log10_err\n");
        for r in &self.rows {
            let e = r.err.unwrap_or(f64::NAN);
            out.push_str(&format!("{:.16e},{:.16e},{:.16e},{:.16e}\n", r.eps, e, r.eps.log10(), e.log10()));
        }
        out
    }

    pub fn verdict(&self) -> String {
        format!("SLOPE={:.6} THEORY={:.6} {}", self.slope, self.theory, if self.pass { "PASS" } else { "FAIL" })
    }
}

fn row(eps: f64, r: Result<f64>) -> RateRow {
    match r {
        Ok(e) => RateRow { eps, err: Some(e), failure: None },
        Err(e) => RateRow { eps, err: None, failure: Some(e.to_string()) },
    }
}

/// max_j ||u_k(t_j) - u(t_j)||_s between the base solve and solves at the
/// perturbed orders, data unperturbed unless the plan adds noise (norm s).
pub fn fivp_order_stability(
    plan: &PerturbationPlan,
    zeta: &SpectralField,
    source: &SourceSpec,
    grid: &TimeGrid,
    policy: &PicardPolicy,
    rate: &RateParams,
) -> Result<RateReport> {
    plan.validate()?;
    let base = solve_fivp(&plan.base, zeta, source, grid, policy)?;
    let rows: Vec<RateRow> = plan
        .eps
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| {
            let r = (|| {
                let o = plan.perturbed(eps)?;
                let z = match plan.noise {
                    DataNoise::None => zeta.clone(),
                    DataNoise::Scaled { seed } => zeta.add(&scaled_noise(zeta.op(), seed, i as u64, rate.s, eps))?,
                };
                let u = solve_fivp(&o, &z, source, grid, policy)?;
                u.max_distance(&base, rate.s)
            })();
            row(eps, r)
        })
        .collect();
    Ok(RateReport::assemble(rows, rate.fivp_exponent(), false))
}

/// |||u_k - u|||_{min(beta/2, beta_k/2), rho} between backward solves; noise
/// is measured in the (beta^*/2 + r)-norm.
#[allow(clippy::too_many_arguments)]
pub fn ffvp_order_stability(
    plan: &PerturbationPlan,
    phi: &SpectralField,
    source: &SourceSpec,
    grid: &TimeGrid,
    space: &WeightedSpace,
    policy: &PicardPolicy,
    rate: &RateParams,
) -> Result<RateReport> {
    plan.validate()?;
    let base = solve_ffvp(&plan.base, phi, source, grid, space, policy, false)?.trajectory;
    let rows: Vec<RateRow> = plan
        .eps
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| {
            let r = (|| {
                let o = plan.perturbed(eps)?;
                let p = match plan.noise {
                    DataNoise::None => phi.clone(),
                    DataNoise::Scaled { seed } => {
                        phi.add(&scaled_noise(phi.op(), seed, i as u64, rate.beta_hi / 2.0 + rate.r, eps))?
                    }
                };
                let u = solve_ffvp(&o, &p, source, grid, space, policy, false)?.trajectory;
                let s = plan.base.beta.min(o.beta) / 2.0;
                let norm = WeightedSpace { s, ..*space };
                let diff: Vec<Vec<f64>> = u
                    .fields()
                    .iter()
                    .zip(base.fields())
                    .map(|(a, b)| a.coeffs().iter().zip(b.coeffs()).map(|(x, y)| x - y).collect())
                    .collect();
                Ok(norm.weighted_norm(phi.op().eigenvalues(), base.times(), &diff))
            })();
            row(eps, r)
        })
        .collect();
    Ok(RateReport::assemble(rows, rate.ffvp_exponent(), false))
}

/// Source for which u(t) = zeta + t^p w solves the forward problem with the
/// linear nonlinearity N(u) = c u: h(t) = (A^beta - c) zeta
/// + Gamma(p+1)/Gamma(p+1-alpha) t^{p-alpha} w + (A^beta - c) t^p w.
pub fn manufactured_source(orders: &Orders, c: f64, zeta: &SpectralField, w: &SpectralField, p: f64) -> Result<SourceSpec> {
    if !(p > 0.0) {
        return Err(FdError::Domain(format!("manufactured exponent p={p} must be positive")));
    }
    let shift = |f: &SpectralField| -> Vec<f64> {
        let a = f.apply_power(orders.beta);
        a.coeffs().iter().zip(f.coeffs()).map(|(x, y)| x - c * y).collect()
    };
    let g = gamma(p + 1.0)? / gamma(p + 1.0 - orders.alpha)?;
    Ok(SourceSpec::linear(c)
        .with_forcing(0.0, shift(zeta))
        .with_forcing(p - orders.alpha, w.scale(g).into_coeffs())
        .with_forcing(p, shift(w)))
}

/// Exact manufactured solution zeta + t^p w.
pub fn manufactured_truth(zeta: &SpectralField, w: &SpectralField, p: f64, t: f64) -> Result<SpectralField> {
    zeta.add(&w.scale(t.powf(p)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegExperiment {
    pub report: RateReport,
    /// (E, rho) fitted on the truth
    pub holder: (f64, f64),
    pub rate: RateParams,
    /// one entry per eps, aligned with report.rows
    pub details: Vec<Option<RegReport>>,
}

/// Regularization rate on a synthetic truth: forward solve from zeta, noisy
/// final data with ||delta||_{beta^*/2 + r} = eps, perturbed orders, and the
/// error ||u_eps(t_eps) - zeta||_sigma. rho comes from the Hölder fit over
/// `window`.
#[allow(clippy::too_many_arguments)]
pub fn regularization_rate(
    plan: &PerturbationPlan,
    zeta: &SpectralField,
    source: &SourceSpec,
    grid: &TimeGrid,
    space: &WeightedSpace,
    policy: &PicardPolicy,
    r: f64,
    sigma: f64,
    window: (f64, f64),
) -> Result<RegExperiment> {
    plan.validate()?;
    let truth = solve_fivp(&plan.base, zeta, source, grid, policy)?;
    let holder = holder_class_check(&truth, sigma, window)?;
    if !holder.1.is_finite() {
        return Err(FdError::InsufficientData("truth is constant in time; no Hölder rate to test".into()));
    }
    let rate = RateParams::new(r, r, r, sigma, holder.1, &plan.domain)?;
    let phi = truth.last();
    let seed = match plan.noise {
        DataNoise::Scaled { seed } => Some(seed),
        DataNoise::None => None,
    };
    let results: Vec<(RateRow, Option<RegReport>)> = plan
        .eps
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| {
            let res = (|| {
                let o = plan.perturbed(eps)?;
                let p = match seed {
                    Some(s) => phi.add(&scaled_noise(phi.op(), s, i as u64, rate.beta_hi / 2.0 + r, eps))?,
                    None => phi.clone(),
                };
                let (_, rep) = regularized_initial(&p, &o, eps, &rate, source, grid, space, policy, Some((zeta, sigma)))?;
                Ok(rep)
            })();
            match res {
                Ok(rep) => (row(eps, Ok(rep.error.unwrap())), Some(rep)),
                Err(e) => (row(eps, Err(e)), None),
            }
        })
        .collect();
    let mut pairs = results;
    pairs.sort_by(|a, b| b.0.eps.total_cmp(&a.0.eps));
    let details = pairs.iter().map(|p| p.1.clone()).collect();
    let report = RateReport::assemble(pairs.into_iter().map(|p| p.0).collect(), rate.reg_exponent(), true);
    Ok(RegExperiment { report, holder, rate, details })
}
