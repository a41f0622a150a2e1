//! Forward problem: Picard iteration on the mild-solution equation
//! u(t) = E_a(-t^a A^b) zeta + int_0^t K(A, t, tau) f(tau, u(tau)) dtau.

use crate::error::{FdError, Result};
use crate::kernels::{convolve_q, kernel_power_moment, mode_weights, propagator_coeffs, Orders, ProductWeights, TimeGrid};
use crate::mlf::{beta as beta_fn, gamma, ml};
use crate::spectrum::{sobolev_norm_raw, SpectralField, SpectralOperator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt;
use std::sync::Arc;

/// Scalar nonlinearity applied pointwise in physical space.
#[derive(Clone)]
pub enum ScalarMap {
    /// amplitude * sin(u)
    Sin { amplitude: f64 },
    /// amplitude * tanh(u)
    Tanh { amplitude: f64 },
    /// u^2
    Square,
    /// slope * u + offset
    Affine { slope: f64, offset: f64 },
    Custom { label: String, map: Arc<dyn Fn(f64) -> f64 + Send + Sync> },
}

impl ScalarMap {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            ScalarMap::Sin { amplitude } => amplitude * u.sin(),
            ScalarMap::Tanh { amplitude } => amplitude * u.tanh(),
            ScalarMap::Square => u * u,
            ScalarMap::Affine { slope, offset } => slope * u + offset,
            ScalarMap::Custom { map, .. } => map(u),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ScalarMap::Sin { amplitude } => format!("{amplitude}*sin(u)"),
            ScalarMap::Tanh { amplitude } => format!("{amplitude}*tanh(u)"),
            ScalarMap::Square => "u^2".into(),
            ScalarMap::Affine { slope, offset } => format!("{slope}*u+{offset}"),
            ScalarMap::Custom { label, .. } => label.clone(),
        }
    }
}

impl fmt::Debug for ScalarMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarMap({})", self.label())
    }
}

#[derive(Debug, Clone)]
pub enum SourceKind {
    Zero,
    /// f(t, u) = c t^{-nu} u
    LinearDiagonal(f64),
    /// f(t, u) = t^{-nu} g(u)
    Pointwise { map: ScalarMap, lipschitz: f64 },
}

/// Additive forcing sum_k coeffs_k t^q phi_k, convolved with the kernel exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerForcing {
    pub q: f64,
    pub coeffs: Vec<f64>,
}

/// Source f(t, u) = t^{-nu} N(u) + h(t). `kappa` is the Lipschitz constant of N
/// from H to H; measured from D(A^s) it becomes kappa theta^{-s}.
#[derive(Debug, Clone)]
pub struct SourceSpec {
    pub kind: SourceKind,
    pub nu: f64,
    pub forcing: Vec<PowerForcing>,
    pub kappa: f64,
}

/// Radial truncation v -> R v / max(R, ||v||_s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub radius: f64,
    pub s: f64,
}

impl SourceSpec {
    pub fn zero() -> Self {
        SourceSpec { kind: SourceKind::Zero, nu: 0.0, forcing: Vec::new(), kappa: 0.0 }
    }

    pub fn linear(c: f64) -> Self {
        SourceSpec { kind: SourceKind::LinearDiagonal(c), nu: 0.0, forcing: Vec::new(), kappa: c.abs() }
    }

    /// Pointwise source with declared Lipschitz constant, spot-checked on 10^4
    /// seeded pairs in [-10, 10].
    pub fn pointwise(map: ScalarMap, lipschitz: f64) -> Result<Self> {
        if !(lipschitz >= 0.0) || !lipschitz.is_finite() {
            return Err(FdError::Configuration(format!("Lipschitz constant {lipschitz} must be finite and >= 0")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..10_000 {
            let a: f64 = rng.gen_range(-10.0..10.0);
            let b: f64 = rng.gen_range(-10.0..10.0);
            let lhs = (map.eval(a) - map.eval(b)).abs();
            if lhs > 1.01 * lipschitz * (a - b).abs() {
                return Err(FdError::ConstraintViolations(vec![format!(
                    "lipschitz_spot_check_failed: |g({a})-g({b})| = {lhs:e} exceeds 1.01*{lipschitz}*|a-b|"
                )]));
            }
        }
        Ok(SourceSpec { kind: SourceKind::Pointwise { map, lipschitz }, nu: 0.0, forcing: Vec::new(), kappa: lipschitz })
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    pub fn with_forcing(mut self, q: f64, coeffs: Vec<f64>) -> Self {
        self.forcing.push(PowerForcing { q, coeffs });
        self
    }

    pub fn label(&self) -> String {
        let base = match &self.kind {
            SourceKind::Zero => "zero".to_string(),
            SourceKind::LinearDiagonal(c) => format!("linear({c})"),
            SourceKind::Pointwise { map, .. } => format!("pointwise({})", map.label()),
        };
        format!("{base}; nu={}; forcing terms={}", self.nu, self.forcing.len())
    }

    pub fn is_zero_nonlinearity(&self) -> bool {
        matches!(self.kind, SourceKind::Zero)
    }

    /// Lipschitz constant from D(A^s) to H.
    pub fn kappa_at(&self, s: f64, theta: f64) -> f64 {
        self.kappa * theta.powf(-s)
    }

    /// Checks the forward-problem constraints; all violations are collected.
    pub fn validate(&self, orders: &Orders, op: &SpectralOperator) -> Result<()> {
        let mut v = Vec::new();
        if !(self.nu >= 0.0) {
            v.push("nu_negative".to_string());
        }
        if self.nu > orders.alpha / 2.0 {
            v.push("nu_exceeds_alpha_half".to_string());
        }
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            v.push("kappa_invalid".to_string());
        }
        for (i, h) in self.forcing.iter().enumerate() {
            if !(h.q > -1.0) {
                v.push(format!("forcing_{i}_exponent_not_above_minus_one"));
            }
            if h.coeffs.len() != op.n() {
                v.push(format!("forcing_{i}_length_mismatch"));
            }
        }
        if !v.is_empty() {
            return Err(FdError::ConstraintViolations(v));
        }
        if self.nu == orders.alpha / 2.0 && !self.is_zero_nonlinearity() {
            // kappa theta^{-s} < theta^{beta/2-s} Gamma(1-alpha)^{-1/2}, s cancels
            let budget = if orders.alpha >= 1.0 {
                0.0
            } else {
                op.theta().powf(orders.beta / 2.0) / gamma(1.0 - orders.alpha)?.sqrt()
            };
            if !(self.kappa < budget) {
                let factor = if budget > 0.0 { self.kappa / budget } else { f64::INFINITY };
                return Err(FdError::ContractionBudget { factor });
            }
        }
        Ok(())
    }

    /// N(u) in spectral coefficients (without the t^{-nu} factor).
    pub fn nonlinear(&self, op: &SpectralOperator, c: &[f64], trunc: Option<Truncation>) -> Result<Vec<f64>> {
        let scaled;
        let c = match trunc {
            Some(tr) => {
                let norm = sobolev_norm_raw(op.eigenvalues(), c, tr.s);
                let k = tr.radius / tr.radius.max(norm);
                scaled = c.iter().map(|x| x * k).collect::<Vec<_>>();
                &scaled[..]
            }
            None => c,
        };
        match &self.kind {
            SourceKind::Zero => Ok(vec![0.0; c.len()]),
            SourceKind::LinearDiagonal(a) => Ok(c.iter().map(|x| a * x).collect()),
            SourceKind::Pointwise { map, .. } => {
                if op.has_physical_space() {
                    let mut samples = op.synthesize(c)?;
                    for x in samples.iter_mut() {
                        *x = map.eval(*x);
                    }
                    op.analyze(&samples)
                } else {
                    Ok(c.iter().map(|&x| map.eval(x)).collect())
                }
            }
        }
    }

    /// int_0^t K(A, t, tau) h(tau) dtau for the power forcing terms.
    pub fn forcing_convolution(&self, orders: &Orders, op: &SpectralOperator, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; op.n()];
        for h in &self.forcing {
            for (k, &l) in op.eigenvalues().iter().enumerate() {
                if h.coeffs[k] != 0.0 {
                    out[k] += h.coeffs[k] * kernel_power_moment(orders, l, t, h.q)?;
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepOrder {
    Jacobi,
    GaussSeidel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardPolicy {
    pub tol: f64,
    pub max_iters: usize,
    pub divergence_factor: f64,
    pub order: SweepOrder,
}

impl Default for PicardPolicy {
    fn default() -> Self {
        PicardPolicy { tol: 1e-10, max_iters: 200, divergence_factor: 1e6, order: SweepOrder::Jacobi }
    }
}

impl PicardPolicy {
    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        if !(self.tol > 0.0) {
            v.push("tol_not_positive".to_string());
        }
        if self.max_iters < 1 {
            v.push("max_iters_zero".to_string());
        }
        if !(self.divergence_factor > 1.0) {
            v.push("divergence_factor_not_above_one".to_string());
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(FdError::ConstraintViolations(v))
        }
    }
}

/// Solution samples at the grid nodes.
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: TimeGrid,
    /// index of the grid node holding fields[0]
    start: usize,
    fields: Vec<SpectralField>,
    orders: Orders,
    source: String,
    iterations: usize,
    residual: f64,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, fields: Vec<SpectralField>, orders: Orders, source: String) -> Result<Self> {
        Self::starting_at(grid, 0, fields, orders, source)
    }

    /// Trajectory on nodes start..=M.
    pub fn starting_at(grid: TimeGrid, start: usize, fields: Vec<SpectralField>, orders: Orders, source: String) -> Result<Self> {
        if fields.is_empty() || fields.len() + start != grid.nodes().len() {
            return Err(FdError::Domain(format!(
                "trajectory has {} fields for {} nodes",
                fields.len(),
                grid.nodes().len()
            )));
        }
        if fields.iter().any(|f| !Arc::ptr_eq(f.op(), fields[0].op())) {
            return Err(FdError::Domain("trajectory fields must share one operator".into()));
        }
        Ok(Trajectory { grid, start, fields, orders, source, iterations: 0, residual: 0.0 })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.grid.nodes()[self.start..]
    }

    /// Index of the grid node holding the first field.
    pub fn start(&self) -> usize {
        self.start
    }

    pub fn fields(&self) -> &[SpectralField] {
        &self.fields
    }

    pub fn at(&self, j: usize) -> &SpectralField {
        &self.fields[j]
    }

    pub fn last(&self) -> &SpectralField {
        self.fields.last().unwrap()
    }

    pub fn op(&self) -> &Arc<SpectralOperator> {
        self.fields[0].op()
    }

    pub fn orders(&self) -> Orders {
        self.orders
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Picard sweeps used.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Fixed-point residual measured by the solver.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub(crate) fn set_convergence(&mut self, iterations: usize, residual: f64) {
        self.iterations = iterations;
        self.residual = residual;
    }

    pub fn norms(&self, s: f64) -> Vec<f64> {
        self.fields.iter().map(|f| f.sobolev_norm(s)).collect()
    }

    pub fn sup_norm(&self, s: f64) -> f64 {
        self.norms(s).into_iter().fold(0.0, f64::max)
    }

    /// max_j ||u(t_j) - v(t_j)||_s over matching grids.
    pub fn max_distance(&self, other: &Trajectory, s: f64) -> Result<f64> {
        if self.fields.len() != other.fields.len() || self.start != other.start {
            return Err(FdError::Domain("trajectories live on different grids".into()));
        }
        let mut worst: f64 = 0.0;
        for (a, b) in self.fields.iter().zip(&other.fields) {
            worst = worst.max(a.sub(b)?.sobolev_norm(s));
        }
        Ok(worst)
    }
}

/// The fixed-point map F of the mild-solution equation on a grid.
pub(crate) struct ForwardMap<'a> {
    source: &'a SourceSpec,
    op: Arc<SpectralOperator>,
    weights: Option<ProductWeights>,
    /// E_a(-t_j^a A^b) zeta + forcing convolution at every node
    base: Vec<Vec<f64>>,
    trunc: Option<Truncation>,
}

impl<'a> ForwardMap<'a> {
    pub(crate) fn new(
        orders: &Orders,
        zeta: &SpectralField,
        source: &'a SourceSpec,
        grid: &TimeGrid,
        trunc: Option<Truncation>,
    ) -> Result<Self> {
        let op = zeta.op().clone();
        let base = grid
            .nodes()
            .par_iter()
            .enumerate()
            .map(|(j, &t)| {
                if j == 0 {
                    return Ok(zeta.coeffs().to_vec());
                }
                let p = propagator_coeffs(orders, op.eigenvalues(), t)?;
                let h = source.forcing_convolution(orders, &op, t)?;
                Ok(zeta.coeffs().iter().zip(&p).zip(&h).map(|((z, p), h)| z * p + h).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let weights = if source.is_zero_nonlinearity() {
            None
        } else {
            Some(ProductWeights::new(orders, &op, grid, source.nu, source.nu > 0.0)?)
        };
        Ok(ForwardMap { source, op, weights, base, trunc })
    }

    pub(crate) fn nonlinear(&self, c: &[f64]) -> Result<Vec<f64>> {
        self.source.nonlinear(&self.op, c, self.trunc)
    }

    /// F(u)(t_j) given N(u(t_n)) at every node.
    pub(crate) fn apply_at(&self, nl: &[Vec<f64>], j: usize) -> Result<Vec<f64>> {
        let mut out = self.base[j].clone();
        if let Some(w) = &self.weights {
            if j > 0 {
                for (o, q) in out.iter_mut().zip(convolve_q(w, nl, j)?) {
                    *o += q;
                }
            }
        }
        Ok(out)
    }

    pub(crate) fn nonlinear_all(&self, u: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if self.weights.is_none() {
            return Ok(vec![Vec::new(); u.len()]);
        }
        u.par_iter().map(|c| self.nonlinear(c)).collect()
    }

    pub(crate) fn apply(&self, u: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let nl = self.nonlinear_all(u)?;
        (0..u.len()).into_par_iter().map(|j| self.apply_at(&nl, j)).collect()
    }
}

fn l2_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn l2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn max_residual(u: &[Vec<f64>], v: &[Vec<f64>]) -> f64 {
    u.iter().zip(v).map(|(a, b)| l2_dist(a, b)).fold(0.0, f64::max)
}

fn check_growth(times: &[f64], u: &[Vec<f64>], limit: f64) -> Result<()> {
    for (j, c) in u.iter().enumerate() {
        let n = l2(c);
        if !n.is_finite() || n > limit {
            return Err(FdError::BlowUpSuspected { time: times[j], norm: n });
        }
    }
    Ok(())
}

/// Solves the forward problem on `grid` by whole-interval Picard iteration
/// started from u0(t) = E_a(-t^a A^b) zeta + forcing convolution.
pub fn solve_fivp(
    orders: &Orders,
    zeta: &SpectralField,
    source: &SourceSpec,
    grid: &TimeGrid,
    policy: &PicardPolicy,
) -> Result<Trajectory> {
    solve_inner(orders, zeta, source, grid, policy, None)
}

fn solve_inner(
    orders: &Orders,
    zeta: &SpectralField,
    source: &SourceSpec,
    grid: &TimeGrid,
    policy: &PicardPolicy,
    trunc: Option<Truncation>,
) -> Result<Trajectory> {
    policy.validate()?;
    source.validate(orders, zeta.op())?;
    let map = ForwardMap::new(orders, zeta, source, grid, trunc)?;
    let times = grid.nodes();
    let zeta_norm = zeta.norm();
    let scale = 1.0 + zeta_norm;
    let data_norm = map.base.iter().map(|c| l2(c)).fold(zeta_norm, f64::max).max(1.0);
    let limit = policy.divergence_factor * data_norm;

    let mut u = map.base.clone();
    let mut residuals = Vec::new();
    let (u, iterations, residual) = if map.weights.is_none() {
        (u, 0, 0.0)
    } else {
        let mut done = None;
        for it in 1..=policy.max_iters {
            match policy.order {
                SweepOrder::Jacobi => {
                    let next = map.apply(&u)?;
                    let r = max_residual(&next, &u);
                    residuals.push(r);
                    if r <= policy.tol * scale {
                        done = Some((u, it, r));
                        break;
                    }
                    check_growth(times, &next, limit)?;
                    u = next;
                }
                SweepOrder::GaussSeidel => {
                    let mut nl = map.nonlinear_all(&u)?;
                    let mut change: f64 = 0.0;
                    for j in 1..u.len() {
                        let v = map.apply_at(&nl, j)?;
                        change = change.max(l2_dist(&v, &u[j]));
                        let n = l2(&v);
                        if !n.is_finite() || n > limit {
                            return Err(FdError::BlowUpSuspected { time: times[j], norm: n });
                        }
                        nl[j] = map.nonlinear(&v)?;
                        u[j] = v;
                    }
                    if change <= policy.tol * scale {
                        // confirm with the true residual of the current iterate
                        let next = map.apply(&u)?;
                        let r = max_residual(&next, &u);
                        residuals.push(r);
                        if r <= policy.tol * scale {
                            done = Some((u, it, r));
                            break;
                        }
                    } else {
                        residuals.push(change);
                    }
                }
            }
        }
        match done {
            Some(d) => d,
            None => return Err(FdError::IterationFailure { residuals }),
        }
    };
    let op = zeta.op().clone();
    let fields = u.into_iter().map(|c| SpectralField::new(op.clone(), c)).collect::<Result<Vec<_>>>()?;
    let mut traj = Trajectory::new(grid.clone(), fields, *orders, source.label())?;
    traj.set_convergence(iterations, residual);
    Ok(traj)
}

/// max_j ||u(t_j) - F(u)(t_j)||_0 for a trajectory, recomputed from scratch.
pub fn fixed_point_residual(zeta: &SpectralField, source: &SourceSpec, traj: &Trajectory) -> Result<f64> {
    let map = ForwardMap::new(&traj.orders, zeta, source, &traj.grid, None)?;
    let u: Vec<Vec<f64>> = traj.fields.iter().map(|f| f.coeffs().to_vec()).collect();
    Ok(max_residual(&map.apply(&u)?, &u))
}

/// g(t_j) = F(0)(t_j): the propagated data plus the convolution of f(., 0).
pub fn g_condition(orders: &Orders, zeta: &SpectralField, source: &SourceSpec, grid: &TimeGrid) -> Result<Vec<SpectralField>> {
    let map = ForwardMap::new(orders, zeta, source, grid, None)?;
    let zero = vec![vec![0.0; zeta.op().n()]; grid.nodes().len()];
    map.apply(&zero)?
        .into_iter()
        .map(|c| SpectralField::new(zeta.op().clone(), c))
        .collect()
}

/// Gamma(1-q) v E_{a-q,1-q}(g Gamma(a) t^{a-q}).
pub fn gronwall_bound(alpha: f64, q: f64, v_sup: f64, g_sup: f64, t: f64) -> Result<f64> {
    if !(q < alpha) || !(alpha > 0.0 && alpha <= 1.0) {
        return Err(FdError::Domain(format!("Gronwall bound needs q < alpha <= 1, got q={q}, alpha={alpha}")));
    }
    if !(v_sup >= 0.0 && g_sup >= 0.0 && t >= 0.0) {
        return Err(FdError::Domain("Gronwall bound needs nonnegative v, g, t".into()));
    }
    let z = g_sup * gamma(alpha)? * t.powf(alpha - q);
    Ok(gamma(1.0 - q)? * v_sup * ml(alpha - q, 1.0 - q, z)?)
}

/// Discrete solution of u(t) = v + g int_0^t (t-tau)^{a-1} tau^{-q} u(tau) dtau,
/// with the same product-integration weights as the solver.
pub fn solve_gronwall_volterra(alpha: f64, q: f64, v: f64, g: f64, grid: &TimeGrid) -> Result<Vec<f64>> {
    if !(q < alpha) {
        return Err(FdError::Domain(format!("Volterra test needs q < alpha, got q={q}, alpha={alpha}")));
    }
    let orders = Orders::new(alpha, 1.0)?;
    let nu = q.max(0.0);
    // lambda = 0 leaves (t-tau)^{a-1} / Gamma(a)
    let w = mode_weights(&orders, 0.0, grid, nu, nu > 0.0)?;
    let ga = gamma(alpha)? * g;
    let t = grid.nodes();
    let extra: Vec<f64> = t.iter().map(|&x| if q < 0.0 { x.powf(-q) } else { 1.0 }).collect();
    let mut u = vec![v; t.len()];
    for j in 1..t.len() {
        let row = w.row(j);
        let hist: f64 = (0..j).map(|i| row[i] * extra[i] * u[i]).sum();
        u[j] = (v + ga * hist) / (1.0 - ga * row[j] * extra[j]);
    }
    Ok(u)
}

/// Right side of the global bound on ||u(t)||_s^2:
/// 2 Gamma(1-2nu) g^2 E_{a-2nu,1-2nu}(2 theta^{2s-b} kappa^2 t^{a-2nu}),
/// with kappa the Lipschitz constant from D(A^s) to H.
pub fn global_bound(orders: &Orders, s: f64, kappa: f64, nu: f64, g_sup: f64, theta: f64, t: f64) -> Result<f64> {
    let a = orders.alpha;
    if !(nu < a / 2.0) || nu < 0.0 {
        return Err(FdError::Domain(format!("global bound needs 0 <= nu < alpha/2, got nu={nu}")));
    }
    if !(s >= 0.0 && s <= orders.beta / 2.0) {
        return Err(FdError::Domain(format!("global bound needs 0 <= s <= beta/2, got s={s}")));
    }
    let z = 2.0 * theta.powf(2.0 * s - orders.beta) * kappa * kappa * t.powf(a - 2.0 * nu);
    Ok(2.0 * gamma(1.0 - 2.0 * nu)? * g_sup * g_sup * ml(a - 2.0 * nu, 1.0 - 2.0 * nu, z)?)
}

/// Per node (||u(t_j)||_s^2, global bound at t_j) with ||g||_{s,t_j} taken over nodes up to t_j.
pub fn global_bound_profile(zeta: &SpectralField, source: &SourceSpec, traj: &Trajectory, s: f64) -> Result<Vec<(f64, f64)>> {
    let orders = traj.orders;
    let g = g_condition(&orders, zeta, source, &traj.grid)?;
    let theta = zeta.op().theta();
    let kappa = source.kappa_at(s, theta);
    let mut g_sup: f64 = 0.0;
    let mut out = Vec::with_capacity(g.len());
    if traj.start != 0 {
        return Err(FdError::Domain("global bound needs a forward trajectory".into()));
    }
    for (j, &t) in traj.times().iter().enumerate() {
        g_sup = g_sup.max(g[j].sobolev_norm(s));
        let b = global_bound(&orders, s, kappa, source.nu, g_sup, theta, t)?;
        out.push((traj.fields[j].sobolev_norm(s).powi(2), b));
    }
    Ok(out)
}

/// Growth function psi(z) = sum_i a_i z^{p_i}.
#[derive(Debug, Clone, PartialEq)]
pub struct Growth {
    pub terms: Vec<(f64, f64)>,
}

impl Growth {
    pub fn eval(&self, z: f64) -> f64 {
        self.terms.iter().map(|&(a, p)| a * z.powf(p)).sum()
    }

    pub fn is_sublinear(&self) -> bool {
        self.terms.iter().all(|&(a, p)| a >= 0.0 && (0.0..1.0).contains(&p))
    }
}

/// Data of the existence inequality
/// m > ||zeta||_s + (2/Gamma(a))^{1/2} theta^{s-b/2} (m_T + B(a,1-2nu) kappa^2 T^{a-2nu} psi(m)^2)^{1/2}.
#[derive(Debug, Clone, PartialEq)]
pub struct Feasibility {
    pub zeta_norm_s: f64,
    pub s: f64,
    pub theta: f64,
    pub orders: Orders,
    pub nu: f64,
    pub kappa: f64,
    pub psi: Growth,
    pub m_t: f64,
    pub horizon: f64,
}

impl Feasibility {
    fn rhs(&self, m: f64) -> Result<f64> {
        let a = self.orders.alpha;
        if !(self.nu < 0.5) {
            return Err(FdError::Domain(format!("existence check needs nu < 1/2, got {}", self.nu)));
        }
        let b = beta_fn(a, 1.0 - 2.0 * self.nu)?;
        let psi = self.psi.eval(m);
        let inner = self.m_t + b * self.kappa * self.kappa * self.horizon.powf(a - 2.0 * self.nu) * psi * psi;
        Ok(self.zeta_norm_s
            + (2.0 / gamma(a)?).sqrt() * self.theta.powf(self.s - self.orders.beta / 2.0) * inner.sqrt())
    }

    /// Whether the strict inequality holds at m.
    pub fn holds(&self, m: f64) -> Result<bool> {
        Ok(m > self.rhs(m)?)
    }

    /// Smallest feasible m on a log grid with 40 points per decade up to m_max.
    pub fn search(&self, m_max: f64) -> Result<Option<f64>> {
        let lo = (self.zeta_norm_s.max(1e-12)) * 1e-3;
        let decades = (m_max / lo).log10().max(0.0);
        let n = (decades * 40.0).ceil() as usize;
        for i in 0..=n {
            let m = lo * 10f64.powf(i as f64 / 40.0);
            if m > m_max {
                break;
            }
            if self.holds(m)? {
                return Ok(Some(m));
            }
        }
        Ok(None)
    }
}

/// Continuation plan for the maximal solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaximalPlan {
    pub horizon: f64,
    pub step: f64,
    pub nodes_per_step: usize,
    pub blow_threshold: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MaximalStatus {
    ReachedHorizon,
    BlowUpSuspected(f64),
    SolveFailed(FdError),
}

/// Extends the solve over [0, step], [0, 2 step], ... with the truncated source
/// f_M(t, v) = f(t, M v / max(M, ||v||_s)), M twice the running sup norm,
/// re-solving from 0 each time.
pub fn continue_maximal(
    orders: &Orders,
    zeta: &SpectralField,
    source: &SourceSpec,
    plan: &MaximalPlan,
    policy: &PicardPolicy,
) -> Result<(Option<Trajectory>, MaximalStatus)> {
    if !(plan.step > 0.0) || !(plan.horizon > 0.0) || plan.nodes_per_step < 1 {
        return Err(FdError::Configuration("continuation needs positive step, horizon and node count".into()));
    }
    let z = zeta.sobolev_norm(plan.s);
    if !(plan.blow_threshold > z) {
        return Err(FdError::Configuration(format!(
            "blow-up threshold {} must exceed ||zeta||_s = {z}",
            plan.blow_threshold
        )));
    }
    let policy = PicardPolicy { order: SweepOrder::GaussSeidel, ..*policy };
    let mut radius = 2.0 * z.max(1e-300);
    let mut accepted: Option<Trajectory> = None;
    let mut k = 1usize;
    loop {
        let t_end = (k as f64 * plan.step).min(plan.horizon);
        let grid = TimeGrid::graded(t_end, plan.nodes_per_step * k, orders.alpha)?;
        let mut rounds = 0;
        let traj = loop {
            let trunc = Truncation { radius, s: plan.s };
            let traj = match solve_inner(orders, zeta, source, &grid, &policy, Some(trunc)) {
                Ok(t) => t,
                Err(e) => return Ok((accepted, MaximalStatus::SolveFailed(e))),
            };
            let norms = traj.norms(plan.s);
            if let Some(j) = norms.iter().position(|&n| n >= plan.blow_threshold) {
                let t = traj.times();
                // linear interpolation of the first crossing
                let t_hit = if j == 0 {
                    0.0
                } else {
                    let (a, b) = (norms[j - 1], norms[j]);
                    t[j - 1] + (t[j] - t[j - 1]) * (plan.blow_threshold - a) / (b - a)
                };
                return Ok((Some(traj), MaximalStatus::BlowUpSuspected(t_hit)));
            }
            let sup = norms.iter().copied().fold(0.0, f64::max);
            if sup <= radius {
                break traj;
            }
            radius = 2.0 * sup;
            rounds += 1;
            if rounds > 200 {
                return Ok((Some(traj), MaximalStatus::SolveFailed(FdError::NumericalInstability(
                    "truncation radius did not settle".into(),
                ))));
            }
        };
        radius = radius.max(2.0 * traj.sup_norm(plan.s));
        let reached = t_end >= plan.horizon;
        accepted = Some(traj);
        if reached {
            return Ok((accepted, MaximalStatus::ReachedHorizon));
        }
        k += 1;
    }
}
