//! Propagator E_a(-t^a A^b), convolution kernel, backward multiplier and
//! product-integration weights for the weakly singular Volterra term.

use crate::error::{FdError, Result};
use crate::mlf::{evaluator, gamma, MittagLeffler};
use crate::spectrum::{SpectralField, SpectralOperator};
use rayon::prelude::*;
use std::sync::Arc;

/// Fractional pair (alpha, beta).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orders {
    pub alpha: f64,
    pub beta: f64,
}

impl Orders {
    /// Orders accepted by the solvers: 0 < alpha <= 1, beta > 0.
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(FdError::Domain(format!("alpha={alpha} outside (0, 1]")));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(FdError::Domain(format!("beta={beta} must be positive")));
        }
        Ok(Orders { alpha, beta })
    }

    /// Orders for the continuity machinery only: 0 < alpha < 2.
    pub fn extended(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) || !(beta > 0.0) {
            return Err(FdError::Domain(format!("orders ({alpha}, {beta}) outside (0,2) x (0,inf)")));
        }
        Ok(Orders { alpha, beta })
    }
}

/// Admissible box for perturbed orders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrdersDomain {
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub beta_lo: f64,
    pub beta_hi: f64,
}

impl OrdersDomain {
    pub fn new(alpha_lo: f64, alpha_hi: f64, beta_lo: f64, beta_hi: f64) -> Result<Self> {
        let d = OrdersDomain { alpha_lo, alpha_hi, beta_lo, beta_hi };
        let v = d.violations();
        if v.is_empty() {
            Ok(d)
        } else {
            Err(FdError::ConstraintViolations(v))
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.alpha_lo > 0.0 && self.alpha_lo < self.alpha_hi) {
            v.push("alpha_box_not_increasing".to_string());
        }
        if !(self.alpha_hi < 2.0) {
            v.push("alpha_hi_not_below_two".to_string());
        }
        if !(self.alpha_hi < 2.0 * self.alpha_lo) {
            v.push("alpha_hi_exceeds_twice_alpha_lo".to_string());
        }
        if !(self.beta_lo > 0.0 && self.beta_lo < self.beta_hi) {
            v.push("beta_box_not_increasing".to_string());
        }
        v
    }

    pub fn contains(&self, o: &Orders) -> bool {
        o.alpha >= self.alpha_lo && o.alpha <= self.alpha_hi && o.beta >= self.beta_lo && o.beta <= self.beta_hi
    }
}

/// Graded mesh t_j = T (j/M)^gamma.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    gamma_mesh: f64,
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn new(horizon: f64, m: usize, gamma_mesh: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(FdError::Configuration(format!("horizon {horizon} must be positive")));
        }
        if m < 1 {
            return Err(FdError::Configuration("grid needs at least one step".into()));
        }
        if !(gamma_mesh >= 1.0) {
            return Err(FdError::Configuration(format!("grading exponent {gamma_mesh} must be >= 1")));
        }
        let mut nodes: Vec<f64> = (0..=m).map(|j| horizon * (j as f64 / m as f64).powf(gamma_mesh)).collect();
        nodes[m] = horizon;
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(FdError::Configuration("grid nodes are not strictly increasing".into()));
        }
        Ok(TimeGrid { horizon, gamma_mesh, nodes })
    }

    /// Grid with the default grading min(2/alpha, 4).
    pub fn graded(horizon: f64, m: usize, alpha: f64) -> Result<Self> {
        Self::new(horizon, m, default_grading(alpha))
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn gamma_mesh(&self) -> f64 {
        self.gamma_mesh
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
}

pub fn default_grading(alpha: f64) -> f64 {
    (2.0 / alpha).clamp(1.0, 4.0)
}

fn lambda_beta(orders: &Orders, lambda: f64) -> f64 {
    if orders.beta == 1.0 {
        lambda
    } else {
        lambda.powf(orders.beta)
    }
}

/// E_alpha(-lambda^beta t^alpha) for every eigenvalue.
pub fn propagator_coeffs(orders: &Orders, eigenvalues: &[f64], t: f64) -> Result<Vec<f64>> {
    if t == 0.0 {
        return Ok(vec![1.0; eigenvalues.len()]);
    }
    let e = evaluator(orders.alpha, 1.0)?;
    let ta = t.powf(orders.alpha);
    eigenvalues.iter().map(|&l| e.eval(-lambda_beta(orders, l) * ta)).collect()
}

/// E_alpha(-t^alpha A^beta) w.
pub fn propagate(orders: &Orders, t: f64, w: &SpectralField) -> Result<SpectralField> {
    if !(t >= 0.0) {
        return Err(FdError::Domain(format!("propagation time {t} must be nonnegative")));
    }
    let m = propagator_coeffs(orders, w.op().eigenvalues(), t)?;
    let c = w.coeffs().iter().zip(&m).map(|(c, m)| c * m).collect();
    SpectralField::new(w.op().clone(), c)
}

/// (t - tau)^{alpha-1} E_{alpha,alpha}(-lambda^beta (t - tau)^alpha).
pub fn kernel_e(orders: &Orders, lambda: f64, t: f64, tau: f64) -> Result<f64> {
    if !(tau < t) {
        return Err(FdError::Domain(format!("kernel needs tau < t, got tau={tau}, t={t}")));
    }
    let s = t - tau;
    let a = orders.alpha;
    Ok(s.powf(a - 1.0) * evaluator(a, a)?.eval(-lambda_beta(orders, lambda) * s.powf(a))?)
}

/// Integral of the kernel over [t1, t2] with target t2, i.e.
/// (1 - E_alpha(-lambda^beta (t2-t1)^alpha)) / lambda^beta, evaluated as
/// (t2-t1)^alpha E_{alpha,alpha+1}(-lambda^beta (t2-t1)^alpha) to avoid cancellation.
pub fn kernel_integral_exact(orders: &Orders, lambda: f64, t1: f64, t2: f64) -> Result<f64> {
    if !(t1 < t2) {
        return Err(FdError::Domain(format!("kernel integral needs t1 < t2, got {t1}, {t2}")));
    }
    let a = orders.alpha;
    let sa = (t2 - t1).powf(a);
    Ok(sa * evaluator(a, a + 1.0)?.eval(-lambda_beta(orders, lambda) * sa)?)
}

/// E_alpha(-lambda^beta t^alpha) / E_alpha(-lambda^beta T^alpha).
pub fn backward_multiplier(orders: &Orders, lambda: f64, t: f64, horizon: f64) -> Result<f64> {
    if !(t > 0.0 && t <= horizon) {
        return Err(FdError::Domain(format!("backward multiplier needs 0 < t <= T, got t={t}, T={horizon}")));
    }
    let e = evaluator(orders.alpha, 1.0)?;
    let c = lambda_beta(orders, lambda);
    let den = e.eval(-c * horizon.powf(orders.alpha))?;
    if !(den > f64::MIN_POSITIVE) {
        return Err(FdError::AmplificationOverflow { lambda, horizon });
    }
    let num = e.eval(-c * t.powf(orders.alpha))?;
    let v = num / den;
    if !v.is_finite() {
        return Err(FdError::AmplificationOverflow { lambda, horizon });
    }
    Ok(v)
}

/// Working value of the constant E with P(t) (t/T)^alpha <= E, sampled on
/// n_samples log-spaced eigenvalues in [theta, lambda_N] crossed with
/// n_samples log-spaced times in (0, T], inflated by 5%.
pub fn estimate_e_constant(orders: &Orders, op: &SpectralOperator, horizon: f64, n_samples: usize) -> Result<f64> {
    if n_samples < 100 {
        return Err(FdError::Domain(format!("E-constant estimate needs >= 100 samples, got {n_samples}")));
    }
    let lo = op.theta();
    let hi = *op.eigenvalues().last().unwrap();
    let lambdas: Vec<f64> = if hi > lo {
        (0..n_samples).map(|i| lo * (hi / lo).powf(i as f64 / (n_samples - 1) as f64)).collect()
    } else {
        vec![lo]
    };
    let t_min = horizon * 1e-8;
    let times: Vec<f64> =
        (0..n_samples).map(|i| t_min * (horizon / t_min).powf(i as f64 / (n_samples - 1) as f64)).collect();
    estimate_e_constant_on(orders, &lambdas, &times, horizon)
}

/// Same estimate over explicit sample lists. With y = lambda^beta t^alpha and
/// Y = lambda^beta T^alpha the sampled quantity is y E(-y) / (Y E(-Y)).
pub fn estimate_e_constant_on(orders: &Orders, lambdas: &[f64], times: &[f64], horizon: f64) -> Result<f64> {
    let a = orders.alpha;
    let e = evaluator(a, 1.0)?;
    let mut best: f64 = 0.0;
    // g(y) = y E_a(-y), evaluated once per sample
    let g = |y: f64| -> Result<f64> { Ok(y * e.eval(-y)?) };
    let mut ts: Vec<f64> = times.iter().copied().filter(|&t| t > 0.0 && t <= horizon).collect();
    ts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    if ts.is_empty() {
        return Err(FdError::Domain("no sample times in (0, T]".into()));
    }
    for &l in lambdas {
        let c = lambda_beta(orders, l);
        let yt = c * horizon.powf(a);
        let den = g(yt)?;
        if !(den > f64::MIN_POSITIVE) {
            return Err(FdError::AmplificationOverflow { lambda: l, horizon });
        }
        for &t in &ts {
            let v = if t == horizon { 1.0 } else { g(c * t.powf(a))? / den };
            best = best.max(v);
        }
    }
    Ok(1.05 * best)
}

/// W1(s) = s^a E_{a,a+1}(-c s^a), the antiderivative of the kernel.
fn w1(e1: &MittagLeffler, a: f64, c: f64, s: f64) -> Result<f64> {
    if s <= 0.0 {
        return Ok(0.0);
    }
    let sa = s.powf(a);
    Ok(sa * e1.eval(-c * sa)?)
}

/// W2(s) = s^{a+1} E_{a,a+2}(-c s^a), the antiderivative of W1.
fn w2(e2: &MittagLeffler, a: f64, c: f64, s: f64) -> Result<f64> {
    if s <= 0.0 {
        return Ok(0.0);
    }
    let sa = s.powf(a);
    Ok(s * sa * e2.eval(-c * sa)?)
}

const GL16: [(f64, f64); 8] = [
    (0.095_012_509_837_637_44, 0.189_450_610_455_068_5),
    (0.281_603_550_779_258_9, 0.182_603_415_044_923_6),
    (0.458_016_777_657_227_4, 0.169_156_519_395_002_5),
    (0.617_876_244_402_643_7, 0.149_595_988_816_576_7),
    (0.755_404_408_355_003_0, 0.124_628_971_255_533_9),
    (0.865_631_202_387_831_7, 0.095_158_511_682_492_78),
    (0.944_575_023_073_232_6, 0.062_253_523_938_647_89),
    (0.989_400_934_991_649_9, 0.027_152_459_411_754_09),
];

/// Product-integration weights of one mode for every target node.
///
/// Row j (target t_j) holds weights over nodes 0..=j so that
/// sum_n w_{j,n} G(t_n) approximates int_0^{t_j} K(t_j - tau) tau^{-nu} G(tau) dtau,
/// with G replaced by its piecewise-linear interpolant (times tau^{-nu}) and the
/// kernel moments taken exactly. With `one_sided` the first interval uses
/// G(t_1) alone and the exact moment of tau^{-nu}; node 0 then gets weight 0.
#[derive(Debug, Clone)]
pub struct ModeWeights {
    rows: Vec<f64>,
}

impl ModeWeights {
    fn offset(j: usize) -> usize {
        (j - 1) * (j + 2) / 2
    }

    /// Weights for target node j >= 1 (length j + 1).
    pub fn row(&self, j: usize) -> &[f64] {
        let o = Self::offset(j);
        &self.rows[o..o + j + 1]
    }
}

pub fn mode_weights(orders: &Orders, lambda: f64, grid: &TimeGrid, nu: f64, one_sided: bool) -> Result<ModeWeights> {
    let a = orders.alpha;
    let c = lambda_beta(orders, lambda);
    let e1 = evaluator(a, a + 1.0)?;
    let e2 = evaluator(a, a + 2.0)?;
    let t = grid.nodes();
    let m = grid.steps();
    let one_sided = one_sided || nu > 0.0;
    let mut rows = Vec::with_capacity(ModeWeights::offset(m + 1));
    // first-interval moments of tau^{-nu} for later targets
    let first = if one_sided { Some(first_interval_moment_setup(orders, c, nu)?) } else { None };
    let mut w1_at = vec![0.0; m + 1];
    let mut w2_at = vec![0.0; m + 1];
    for j in 1..=m {
        let tj = t[j];
        for i in 0..=j {
            w1_at[i] = w1(&e1, a, c, tj - t[i])?;
            w2_at[i] = w2(&e2, a, c, tj - t[i])?;
        }
        let start = rows.len();
        rows.resize(start + j + 1, 0.0);
        let row = &mut rows[start..];
        let i0 = if one_sided { 1 } else { 0 };
        for i in i0..j {
            let h = t[i + 1] - t[i];
            let m0 = w1_at[i] - w1_at[i + 1];
            let m1 = -h * w1_at[i + 1] + w2_at[i] - w2_at[i + 1];
            let right = m1 / h;
            row[i] += m0 - right;
            row[i + 1] += right;
        }
        if one_sided {
            if nu > 0.0 {
                for (n, w) in row.iter_mut().enumerate().skip(1) {
                    *w *= t[n].powf(-nu);
                }
            }
            let s = match &first {
                Some(f) => f.moment(t[1], tj)?,
                None => unreachable!(),
            };
            row[1] += s;
        }
    }
    Ok(ModeWeights { rows })
}

struct FirstMoment {
    alpha: f64,
    c: f64,
    nu: f64,
    exact: Arc<MittagLeffler>,
    kernel: Arc<MittagLeffler>,
    gamma_1mnu: f64,
}

fn first_interval_moment_setup(orders: &Orders, c: f64, nu: f64) -> Result<FirstMoment> {
    let a = orders.alpha;
    Ok(FirstMoment {
        alpha: a,
        c,
        nu,
        exact: evaluator(a, a + 1.0 - nu)?,
        kernel: evaluator(a, a)?,
        gamma_1mnu: gamma(1.0 - nu)?,
    })
}

impl FirstMoment {
    /// int_0^{t1} K(tj - tau) tau^{-nu} dtau
    fn moment(&self, t1: f64, tj: f64) -> Result<f64> {
        let a = self.alpha;
        if tj == t1 {
            let sa = t1.powf(a);
            return Ok(self.gamma_1mnu * t1.powf(a - self.nu) * self.exact.eval(-self.c * sa)?);
        }
        // tau = t1 v^{1/(1-nu)} turns tau^{-nu} dtau into t1^{1-nu}/(1-nu) dv
        let q = 1.0 / (1.0 - self.nu);
        let mut acc = 0.0;
        for &(x, w) in GL16.iter() {
            for v in [0.5 * (1.0 - x), 0.5 * (1.0 + x)] {
                let s = tj - t1 * v.powf(q);
                acc += w * s.powf(a - 1.0) * self.kernel.eval(-self.c * s.powf(a))?;
            }
        }
        Ok(0.5 * acc * t1.powf(1.0 - self.nu) * q)
    }
}

/// Weights for every mode of an operator, computed in parallel.
#[derive(Debug, Clone)]
pub struct ProductWeights {
    pub nu: f64,
    pub one_sided: bool,
    modes: Vec<ModeWeights>,
}

impl ProductWeights {
    pub fn new(orders: &Orders, op: &SpectralOperator, grid: &TimeGrid, nu: f64, one_sided: bool) -> Result<Self> {
        let m = grid.steps();
        let total = (m * (m + 3) / 2) as f64 * op.n() as f64;
        if total > 6e7 {
            return Err(FdError::Configuration(format!(
                "weight storage for M={m}, N={} exceeds the memory budget",
                op.n()
            )));
        }
        let modes = op
            .eigenvalues()
            .par_iter()
            .map(|&l| mode_weights(orders, l, grid, nu, one_sided))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProductWeights { nu, one_sided, modes })
    }

    pub fn mode(&self, k: usize) -> &ModeWeights {
        &self.modes[k]
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }
}

/// Product-integration approximation of int_0^{t_j} K(A, t_j, tau) F(tau) dtau.
/// `samples[n][k]` is the coefficient of mode k at node n.
pub fn convolve_q(weights: &ProductWeights, samples: &[Vec<f64>], j_target: usize) -> Result<Vec<f64>> {
    if j_target == 0 {
        return Ok(vec![0.0; weights.n_modes()]);
    }
    if samples.len() <= j_target {
        return Err(FdError::Domain(format!(
            "convolution target {j_target} needs {} samples, got {}",
            j_target + 1,
            samples.len()
        )));
    }
    Ok((0..weights.n_modes())
        .map(|k| {
            let row = weights.mode(k).row(j_target);
            row.iter().enumerate().map(|(n, w)| w * samples[n][k]).sum()
        })
        .collect())
}

/// Exact convolution of the kernel with a power: int_0^t K(t - tau) tau^q dtau
/// = Gamma(q+1) t^{alpha+q} E_{alpha,alpha+q+1}(-lambda^beta t^alpha), q > -1.
pub fn kernel_power_moment(orders: &Orders, lambda: f64, t: f64, q: f64) -> Result<f64> {
    if !(q > -1.0) {
        return Err(FdError::Domain(format!("power exponent {q} must exceed -1")));
    }
    if t <= 0.0 {
        return Ok(0.0);
    }
    let a = orders.alpha;
    let e = evaluator(a, a + q + 1.0)?;
    Ok(gamma(q + 1.0)? * t.powf(a + q) * e.eval(-lambda_beta(orders, lambda) * t.powf(a))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_graded() {
        let g = TimeGrid::new(2.0, 4, 2.0).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.125, 0.5, 1.125, 2.0]);
        assert!(TimeGrid::new(1.0, 0, 1.0).is_err());
        assert!(TimeGrid::new(1.0, 4, 0.5).is_err());
        assert_eq!(default_grading(0.3), 4.0);
        assert_eq!(default_grading(1.0), 2.0);
    }

    #[test]
    fn domain_checks() {
        assert!(OrdersDomain::new(0.25, 0.35, 0.9, 1.1).is_ok());
        match OrdersDomain::new(0.2, 0.5, 1.0, 0.9) {
            Err(FdError::ConstraintViolations(v)) => {
                assert!(v.contains(&"alpha_hi_exceeds_twice_alpha_lo".to_string()));
                assert!(v.contains(&"beta_box_not_increasing".to_string()));
            }
            other => panic!("{other:?}"),
        }
        assert!(Orders::new(1.2, 1.0).is_err());
        assert!(Orders::extended(1.2, 1.0).is_ok());
    }

    #[test]
    fn exponential_limits() {
        let o = Orders::new(1.0, 1.0).unwrap();
        assert!((kernel_e(&o, 1.0, 1.0, 0.0).unwrap() - (-1f64).exp()).abs() < 1e-15);
        assert!((kernel_integral_exact(&o, 1.0, 0.0, 1.0).unwrap() - (1.0 - (-1f64).exp())).abs() < 1e-15);
        assert!((backward_multiplier(&o, 1.0, 1e-300, 1.0).unwrap() - 1f64.exp()).abs() < 1e-14);
        assert_eq!(backward_multiplier(&o, 3.0, 1.0, 1.0).unwrap(), 1.0);
        assert!(kernel_e(&o, 1.0, 1.0, 1.0).is_err());
        assert!(kernel_integral_exact(&o, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        let o = Orders::new(1.0, 1.0).unwrap();
        assert!(matches!(backward_multiplier(&o, 1e4, 0.5, 1.0), Err(FdError::AmplificationOverflow { .. })));
    }

    #[test]
    fn constant_density_reproduces_exact_integral() {
        let o = Orders::new(0.4, 1.0).unwrap();
        let g = TimeGrid::new(1.0, 16, 2.0).unwrap();
        let w = mode_weights(&o, 9.0, &g, 0.0, false).unwrap();
        for j in 1..=16 {
            let s: f64 = w.row(j).iter().sum();
            let exact = kernel_integral_exact(&o, 9.0, 0.0, g.nodes()[j]).unwrap();
            assert!((s - exact).abs() < 1e-14 * exact.max(1.0), "j={j}");
        }
    }

    #[test]
    fn singular_weights_integrate_power() {
        // G = 1 with tau^{-nu}: exact value from the power moment
        let o = Orders::new(0.6, 1.0).unwrap();
        let g = TimeGrid::new(1.0, 64, 3.0).unwrap();
        let nu = 0.25;
        let w = mode_weights(&o, 4.0, &g, nu, true).unwrap();
        // the interpolated singular factor is coarse on the first cells only
        for (j, tol) in [(2, 0.15), (16, 5e-3), (64, 5e-4)] {
            let s: f64 = w.row(j).iter().sum();
            let exact = kernel_power_moment(&o, 4.0, g.nodes()[j], -nu).unwrap();
            assert!((s - exact).abs() < tol * exact, "j={j}: {s} vs {exact}");
        }
        assert!((w.row(1)[1] - kernel_power_moment(&o, 4.0, g.nodes()[1], -nu).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn linear_density_exact_for_heat_kernel() {
        let o = Orders::new(1.0, 1.0).unwrap();
        let g = TimeGrid::new(1.0, 64, 2.0).unwrap();
        let w = mode_weights(&o, 1.0, &g, 0.0, false).unwrap();
        let s: f64 = w.row(64).iter().zip(g.nodes()).map(|(w, t)| w * t).sum();
        assert!((s - (-1f64).exp()).abs() < 1e-4);
    }
}
