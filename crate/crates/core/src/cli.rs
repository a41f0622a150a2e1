//! Run configuration (TOML), validation and the subcommand drivers behind the
//! `fracdiff` binary.
//!
//! Grammar: top-level `seed`, then tables `[operator]`, `[orders]`, `[grid]`,
//! `[source]` (with `[[source.forcing]]` entries), `[initial]`, `[space]`,
//! `[policy]`, `[experiment]`, `[regularize]`, `[ml]` and `[output]`. Unknown
//! keys are rejected. See `tests/fixtures/` for complete files.

use crate::error::{FdError, Result};
use crate::ffvp::{solve_ffvp, WeightedSpace};
use crate::fivp::{solve_fivp, PicardPolicy, ScalarMap, SourceSpec, SweepOrder, Trajectory};
use crate::kernels::{default_grading, Orders, OrdersDomain, TimeGrid};
use crate::mlf::ml;
use crate::regularize::{
    default_eps, ffvp_order_stability, fivp_order_stability, illposed_demo, regularized_initial, DataNoise,
    PerturbationPlan, RateParams,
};
use crate::spectrum::{SpectralField, SpectralOperator};
use serde::Deserialize;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: u64,
    operator: Option<RawOperator>,
    orders: Option<RawOrders>,
    grid: Option<RawGrid>,
    #[serde(default)]
    source: RawSource,
    initial: Option<RawField>,
    space: Option<RawSpace>,
    #[serde(default)]
    policy: RawPolicy,
    experiment: Option<RawExperiment>,
    regularize: Option<RawRegularize>,
    ml: Option<RawMl>,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOperator {
    kind: String,
    n: Option<usize>,
    collocation: Option<usize>,
    eigenvalues: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOrders {
    alpha: f64,
    beta: f64,
    /// [alpha_lo, alpha_hi, beta_lo, beta_hi]
    domain: Option<[f64; 4]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    horizon: f64,
    steps: usize,
    gamma_mesh: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    kind: String,
    c: Option<f64>,
    amplitude: Option<f64>,
    slope: Option<f64>,
    offset: Option<f64>,
    lipschitz: Option<f64>,
    #[serde(default)]
    nu: f64,
    #[serde(default)]
    forcing: Vec<RawForcing>,
}

impl Default for RawSource {
    fn default() -> Self {
        RawSource {
            kind: "zero".into(),
            c: None,
            amplitude: None,
            slope: None,
            offset: None,
            lipschitz: None,
            nu: 0.0,
            forcing: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawForcing {
    q: f64,
    coeffs: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawField {
    /// leading coefficients; the rest are zero
    coeffs: Option<Vec<f64>>,
    /// amplitude / k^decay
    decay: Option<f64>,
    #[serde(default = "one")]
    amplitude: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpace {
    s: f64,
    rho: f64,
    #[serde(default)]
    nu: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    #[serde(default = "default_tol")]
    tol: f64,
    #[serde(default = "default_iters")]
    max_iters: usize,
    #[serde(default = "default_divergence")]
    divergence_factor: f64,
    #[serde(default = "default_order")]
    order: String,
}

impl Default for RawPolicy {
    fn default() -> Self {
        RawPolicy { tol: default_tol(), max_iters: default_iters(), divergence_factor: default_divergence(), order: default_order() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    eps: Option<Vec<f64>>,
    direction: Option<[f64; 2]>,
    #[serde(default)]
    noise: bool,
    #[serde(default = "one")]
    r1: f64,
    #[serde(default = "one")]
    r2: f64,
    #[serde(default = "one")]
    r: f64,
    #[serde(default)]
    s: f64,
    #[serde(default = "half")]
    rho: f64,
    modes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegularize {
    eps: f64,
    r: f64,
    rho: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMl {
    p: f64,
    #[serde(default = "one")]
    r: f64,
    z: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    #[serde(default = "default_mode")]
    mode: String,
    #[serde(default)]
    s: f64,
}

impl Default for RawOutput {
    fn default() -> Self {
        RawOutput { mode: default_mode(), s: 0.0 }
    }
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn default_tol() -> f64 {
    PicardPolicy::default().tol
}
fn default_iters() -> usize {
    PicardPolicy::default().max_iters
}
fn default_divergence() -> f64 {
    PicardPolicy::default().divergence_factor
}
fn default_order() -> String {
    "jacobi".into()
}
fn default_mode() -> String {
    "coefficients".into()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputMode {
    Coefficients,
    /// ||u(t)||_s per node
    Norms(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizeSpec {
    pub eps: f64,
    pub r: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlSpec {
    pub p: f64,
    pub r: f64,
    pub z: Vec<f64>,
}

/// Fully validated configuration. Sections absent from the file are `None`.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub op: Option<Arc<SpectralOperator>>,
    pub orders: Option<Orders>,
    pub domain: Option<OrdersDomain>,
    pub grid: Option<TimeGrid>,
    pub source: SourceSpec,
    pub initial: Option<SpectralField>,
    pub space: Option<WeightedSpace>,
    pub policy: PicardPolicy,
    pub plan: Option<PerturbationPlan>,
    pub rate: Option<RateParams>,
    pub modes: Option<Vec<usize>>,
    pub regularize: Option<RegularizeSpec>,
    pub ml: Option<MlSpec>,
    pub output: OutputMode,
}

impl RunConfig {
    /// Stable key = value listing of the loaded configuration.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        if let Some(op) = &self.op {
            let _ = writeln!(s, "operator.modes = {}", op.n());
            let _ = writeln!(s, "operator.theta = {:.16e}", op.theta());
        }
        if let Some(o) = &self.orders {
            let _ = writeln!(s, "orders = ({}, {})", o.alpha, o.beta);
        }
        if let Some(d) = &self.domain {
            let _ = writeln!(s, "domain = [{}, {}] x [{}, {}]", d.alpha_lo, d.alpha_hi, d.beta_lo, d.beta_hi);
        }
        if let Some(g) = &self.grid {
            let _ = writeln!(s, "grid = T {} M {} gamma {}", g.horizon(), g.steps(), g.gamma_mesh());
        }
        let _ = writeln!(s, "source = {} kappa {}", self.source.label(), self.source.kappa);
        if let Some(f) = &self.initial {
            let c: Vec<String> = f.coeffs().iter().map(|x| format!("{x:.16e}")).collect();
            let _ = writeln!(s, "initial = [{}]", c.join(", "));
        }
        if let Some(sp) = &self.space {
            let _ = writeln!(s, "space = s {} rho {} nu {}", sp.s, sp.rho, sp.nu);
        }
        let p = &self.policy;
        let _ = writeln!(s, "policy = tol {:e} iters {} divergence {:e} {:?}", p.tol, p.max_iters, p.divergence_factor, p.order);
        if let Some(plan) = &self.plan {
            let _ = writeln!(s, "plan.eps = {:?}", plan.eps);
            let _ = writeln!(s, "plan.direction = {:?} noise {:?}", plan.direction, plan.noise);
        }
        if let Some(r) = &self.rate {
            let _ = writeln!(
                s,
                "rate = fivp {:.6} ffvp {:.6} reg {:.6}",
                r.fivp_exponent(),
                r.ffvp_exponent(),
                r.reg_exponent()
            );
        }
        if let Some(m) = &self.modes {
            let _ = writeln!(s, "modes = {m:?}");
        }
        if let Some(r) = &self.regularize {
            let _ = writeln!(s, "regularize = eps {:e} r {} rho {}", r.eps, r.r, r.rho);
        }
        if let Some(m) = &self.ml {
            let _ = writeln!(s, "ml = p {} r {} points {}", m.p, m.r, m.z.len());
        }
        let _ = writeln!(s, "output = {:?}", self.output);
        s
    }
}

fn absorb<T>(v: &mut Vec<String>, r: Result<T>, name: &str) -> Option<T> {
    match r {
        Ok(x) => Some(x),
        Err(FdError::ConstraintViolations(names)) => {
            v.extend(names);
            None
        }
        Err(FdError::ContractionBudget { .. }) => {
            v.push("contraction_budget_exceeded".into());
            None
        }
        Err(_) => {
            v.push(name.to_string());
            None
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

/// Parse and validate a configuration held in memory.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let (line, col) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        FdError::Parse { line, col, msg: e.message().to_string() }
    })?;
    validate(raw)
}

/// Read, parse and validate a configuration file; an unreadable file is a
/// configuration error.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| FdError::Configuration(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

fn build_operator(v: &mut Vec<String>, raw: &RawOperator) -> Option<Arc<SpectralOperator>> {
    match raw.kind.as_str() {
        "dirichlet_laplacian" => match raw.n {
            Some(n) => {
                let coll = raw.collocation.unwrap_or(2 * n);
                absorb(v, SpectralOperator::dirichlet_laplacian(n, coll), "operator_invalid")
            }
            None => {
                v.push("operator_missing_n".into());
                None
            }
        },
        "diagonal" => match &raw.eigenvalues {
            Some(e) => absorb(v, SpectralOperator::explicit_diagonal(e.clone()), "operator_invalid"),
            None => {
                v.push("operator_missing_eigenvalues".into());
                None
            }
        },
        _ => {
            v.push("operator_kind_unknown".into());
            None
        }
    }
}

fn build_source(v: &mut Vec<String>, raw: &RawSource) -> Option<SourceSpec> {
    let need = |v: &mut Vec<String>, x: Option<f64>, key: &str| -> Option<f64> {
        if x.is_none() {
            v.push(format!("source_missing_{key}"));
        }
        x
    };
    let pointwise = |v: &mut Vec<String>, map: ScalarMap, l: f64| absorb(v, SourceSpec::pointwise(map, l), "source_invalid");
    let base = match raw.kind.as_str() {
        "zero" => Some(SourceSpec::zero()),
        "linear" => need(v, raw.c, "c").map(SourceSpec::linear),
        "sin" | "tanh" => {
            let a = need(v, raw.amplitude, "amplitude")?;
            let map = if raw.kind == "sin" { ScalarMap::Sin { amplitude: a } } else { ScalarMap::Tanh { amplitude: a } };
            pointwise(v, map, raw.lipschitz.unwrap_or(a.abs()))
        }
        "affine" => {
            let slope = need(v, raw.slope, "slope");
            let offset = need(v, raw.offset, "offset");
            let (slope, offset) = (slope?, offset?);
            pointwise(v, ScalarMap::Affine { slope, offset }, raw.lipschitz.unwrap_or(slope.abs()))
        }
        "square" => {
            let l = need(v, raw.lipschitz, "lipschitz")?;
            pointwise(v, ScalarMap::Square, l)
        }
        _ => {
            v.push("source_kind_unknown".into());
            None
        }
    }?;
    let mut s = base.with_nu(raw.nu);
    for f in &raw.forcing {
        s = s.with_forcing(f.q, f.coeffs.clone());
    }
    Some(s)
}

fn build_field(v: &mut Vec<String>, raw: &RawField, op: &Arc<SpectralOperator>) -> Option<SpectralField> {
    match (&raw.coeffs, raw.decay) {
        (Some(c), None) => {
            if c.len() > op.n() {
                v.push("initial_longer_than_operator".into());
                return None;
            }
            let c: Vec<f64> = c.iter().map(|x| raw.amplitude * x).collect();
            absorb(v, SpectralField::from_prefix(op.clone(), &c), "initial_invalid")
        }
        (None, Some(p)) => {
            let c = (1..=op.n()).map(|k| raw.amplitude / (k as f64).powf(p)).collect();
            absorb(v, SpectralField::new(op.clone(), c), "initial_invalid")
        }
        _ => {
            v.push("initial_needs_exactly_one_of_coeffs_or_decay".into());
            None
        }
    }
}

fn validate(raw: RawConfig) -> Result<RunConfig> {
    let mut v: Vec<String> = Vec::new();
    let op = raw.operator.as_ref().and_then(|o| build_operator(&mut v, o));
    let orders = raw.orders.as_ref().and_then(|o| {
        let mut bad = false;
        if !(o.alpha > 0.0 && o.alpha <= 1.0) {
            v.push("alpha_outside_zero_one".into());
            bad = true;
        }
        if !(o.beta > 0.0 && o.beta.is_finite()) {
            v.push("beta_not_positive".into());
            bad = true;
        }
        if bad {
            None
        } else {
            Orders::new(o.alpha, o.beta).ok()
        }
    });
    let domain = raw
        .orders
        .as_ref()
        .and_then(|o| o.domain)
        .and_then(|d| absorb(&mut v, OrdersDomain::new(d[0], d[1], d[2], d[3]), "domain_invalid"));
    if let (Some(d), Some(o)) = (&domain, &orders) {
        if !d.contains(o) {
            v.push("orders_outside_domain".into());
        }
    }
    let grid = raw.grid.as_ref().and_then(|g| {
        let gm = g.gamma_mesh.unwrap_or_else(|| default_grading(raw.orders.as_ref().map_or(1.0, |o| o.alpha)));
        let mut bad = false;
        if !(g.horizon > 0.0 && g.horizon.is_finite()) {
            v.push("horizon_not_positive".into());
            bad = true;
        }
        if g.steps == 0 {
            v.push("steps_zero".into());
            bad = true;
        }
        if !(gm >= 1.0) {
            v.push("gamma_mesh_below_one".into());
            bad = true;
        }
        if bad {
            None
        } else {
            absorb(&mut v, TimeGrid::new(g.horizon, g.steps, gm), "grid_invalid")
        }
    });
    let source = build_source(&mut v, &raw.source);
    if let (Some(s), Some(o), Some(op)) = (&source, &orders, &op) {
        absorb(&mut v, s.validate(o, op), "source_invalid");
    } else if let Some(s) = &source {
        if !(s.nu >= 0.0) {
            v.push("nu_negative".into());
        }
    }
    let initial = match (&raw.initial, &op) {
        (Some(f), Some(op)) => build_field(&mut v, f, op),
        (Some(_), None) => {
            v.push("initial_needs_operator".into());
            None
        }
        _ => None,
    };
    let space = match (&raw.space, &orders) {
        (Some(sp), Some(o)) => {
            let s = absorb(&mut v, WeightedSpace::new(o, sp.s, sp.rho, sp.nu), "space_invalid");
            if let Some(src) = &source {
                if src.nu != sp.nu {
                    v.push("source_nu_differs_from_space_nu".into());
                }
            }
            s
        }
        (Some(_), None) => {
            v.push("space_needs_orders".into());
            None
        }
        _ => None,
    };
    let order = match raw.policy.order.as_str() {
        "jacobi" => SweepOrder::Jacobi,
        "gauss_seidel" => SweepOrder::GaussSeidel,
        _ => {
            v.push("policy_order_unknown".into());
            SweepOrder::Jacobi
        }
    };
    let policy = PicardPolicy {
        tol: raw.policy.tol,
        max_iters: raw.policy.max_iters,
        divergence_factor: raw.policy.divergence_factor,
        order,
    };
    absorb(&mut v, policy.validate(), "policy_invalid");
    let (mut plan, mut rate, mut modes) = (None, None, None);
    if let Some(e) = &raw.experiment {
        modes = e.modes.clone();
        if e.eps.is_some() || e.direction.is_some() || e.noise {
            match (&orders, &domain) {
                (Some(o), Some(d)) => {
                    let mut p = PerturbationPlan::new(*o, *d);
                    p.eps = e.eps.clone().unwrap_or_else(default_eps);
                    if let Some([a, b]) = e.direction {
                        p.direction = (a, b);
                    }
                    if e.noise {
                        p.noise = DataNoise::Scaled { seed: raw.seed };
                    }
                    v.extend(p.violations());
                    plan = Some(p);
                }
                _ => v.push("experiment_needs_orders_domain".into()),
            }
        }
        if let Some(d) = &domain {
            rate = absorb(&mut v, RateParams::new(e.r1, e.r2, e.r, e.s, e.rho, d), "rate_invalid");
        }
    }
    let regularize = raw.regularize.as_ref().map(|r| {
        if !(r.eps > 0.0 && r.eps < 1.0) {
            v.push("regularize_eps_outside_zero_one".into());
        }
        if !(r.r > 0.0) || !(r.rho > 0.0) {
            v.push("regularize_exponents_not_positive".into());
        }
        if domain.is_none() {
            v.push("regularize_needs_orders_domain".into());
        }
        RegularizeSpec { eps: r.eps, r: r.r, rho: r.rho }
    });
    let ml_spec = raw.ml.as_ref().map(|m| {
        if !(m.p > 0.0) || !(m.r > 0.0) {
            v.push("ml_parameters_not_positive".into());
        }
        MlSpec { p: m.p, r: m.r, z: m.z.clone() }
    });
    let output = match raw.output.mode.as_str() {
        "coefficients" => OutputMode::Coefficients,
        "norms" => OutputMode::Norms(raw.output.s),
        _ => {
            v.push("output_mode_unknown".into());
            OutputMode::Coefficients
        }
    };
    if !v.is_empty() {
        return Err(FdError::ConstraintViolations(v));
    }
    Ok(RunConfig {
        seed: raw.seed,
        op,
        orders,
        domain,
        grid,
        source: source.expect("validated"),
        initial,
        space,
        policy,
        plan,
        rate,
        modes,
        regularize,
        ml: ml_spec,
        output,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    Fivp,
    Ffvp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    MlEval,
    SolveFivp,
    SolveFfvp { force: bool },
    Regularize,
    IllposedDemo,
    OrderStability(Problem),
}

/// CSV body, diagnostics for standard error and an optional experiment verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub csv: String,
    pub diagnostics: Vec<String>,
    pub verdict: Option<(String, bool)>,
}

fn need<'a, T>(x: &'a Option<T>, section: &str) -> Result<&'a T> {
    x.as_ref().ok_or_else(|| FdError::ConstraintViolations(vec![format!("missing_section_{section}")]))
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn trajectory_csv(traj: &Trajectory, mode: OutputMode) -> String {
    let mut out = String::new();
    match mode {
        OutputMode::Coefficients => {
            out.push('t');
            for k in 1..=traj.op().n() {
                let _ = write!(out, ",c{k}");
            }
            out.push('\n');
            for (f, &t) in traj.fields().iter().zip(traj.times()) {
                out.push_str(&num(t));
                for c in f.coeffs() {
                    out.push(',');
                    out.push_str(&num(*c));
                }
                out.push('\n');
            }
        }
        OutputMode::Norms(s) => {
            out.push_str("t,norm\n");
            for (f, &t) in traj.fields().iter().zip(traj.times()) {
                let _ = writeln!(out, "{},{}", num(t), num(f.sobolev_norm(s)));
            }
        }
    }
    out
}

/// Execute a subcommand on a validated configuration.
pub fn run(task: Task, cfg: &RunConfig) -> Result<Outcome> {
    let mut diagnostics = Vec::new();
    let mut verdict = None;
    let csv = match task {
        Task::MlEval => {
            let m = need(&cfg.ml, "ml")?;
            let mut out = String::from("z,value\n");
            for &z in &m.z {
                let _ = writeln!(out, "{},{}", num(z), num(ml(m.p, m.r, z)?));
            }
            out
        }
        Task::SolveFivp => {
            let (o, g, z) = (need(&cfg.orders, "orders")?, need(&cfg.grid, "grid")?, need(&cfg.initial, "initial")?);
            let traj = solve_fivp(o, z, &cfg.source, g, &cfg.policy)?;
            diagnostics.push(format!("iterations={} residual={:e}", traj.iterations(), traj.residual()));
            trajectory_csv(&traj, cfg.output)
        }
        Task::SolveFfvp { force } => {
            let (o, g, phi, sp) =
                (need(&cfg.orders, "orders")?, need(&cfg.grid, "grid")?, need(&cfg.initial, "initial")?, need(&cfg.space, "space")?);
            let sol = solve_ffvp(o, phi, &cfg.source, g, sp, &cfg.policy, force)?;
            let c = &sol.constants;
            diagnostics.push(format!(
                "contraction_factor={:e} L={:e} E0={:e} E={:e} K0={:e} certified={}",
                c.contraction_factor, c.l, c.e0, c.e, c.k0, sol.certified
            ));
            diagnostics.push(match sol.certificate {
                Some(b) => format!("weighted_norm={:e} certificate={:e}", sol.weighted_norm, b),
                None => format!("weighted_norm={:e} certificate=unavailable", sol.weighted_norm),
            });
            trajectory_csv(&sol.trajectory, cfg.output)
        }
        Task::Regularize => {
            let (o, g, phi, sp, r, d) = (
                need(&cfg.orders, "orders")?,
                need(&cfg.grid, "grid")?,
                need(&cfg.initial, "initial")?,
                need(&cfg.space, "space")?,
                need(&cfg.regularize, "regularize")?,
                need(&cfg.domain, "orders_domain")?,
            );
            let rate = RateParams::new(r.r, r.r, r.r, 0.0, r.rho, d)?;
            let (u, rep) = regularized_initial(phi, o, r.eps, &rate, &cfg.source, g, sp, &cfg.policy, None)?;
            diagnostics.push(format!("t_eps={} clamped={} exponent={}", num(rep.t_eps), rep.clamped, num(rep.exponent)));
            let mut out = String::from("k,coeff\n");
            for (k, c) in u.coeffs().iter().enumerate() {
                let _ = writeln!(out, "{},{}", k + 1, num(*c));
            }
            out
        }
        Task::IllposedDemo => {
            let (o, op, g) = (need(&cfg.orders, "orders")?, need(&cfg.op, "operator")?, need(&cfg.grid, "grid")?);
            let modes = cfg.modes.clone().unwrap_or_else(|| vec![2, 4, 8, 16, 32]);
            let rows = illposed_demo(o, op, g.horizon(), &modes)?;
            let mut out = String::from("n,lambda,beta_n,phi_norm,fixed_norm,perturbed_norm,identity_lhs,identity_rhs,overflow\n");
            for r in rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    r.n,
                    num(r.lambda),
                    num(r.beta_n),
                    num(r.phi_norm),
                    num(r.fixed_norm),
                    num(r.perturbed_norm),
                    num(r.identity_lhs),
                    num(r.identity_rhs),
                    r.overflow
                );
            }
            out
        }
        Task::OrderStability(problem) => {
            let (plan, rate, g, init) =
                (need(&cfg.plan, "experiment")?, need(&cfg.rate, "experiment")?, need(&cfg.grid, "grid")?, need(&cfg.initial, "initial")?);
            let rep = match problem {
                Problem::Fivp => fivp_order_stability(plan, init, &cfg.source, g, &cfg.policy, rate)?,
                Problem::Ffvp => {
                    let sp = need(&cfg.space, "space")?;
                    ffvp_order_stability(plan, init, &cfg.source, g, sp, &cfg.policy, rate)?
                }
            };
            for r in rep.rows.iter().filter(|r| r.failure.is_some()) {
                diagnostics.push(format!("eps={} failed: {}", num(r.eps), r.failure.as_deref().unwrap_or("")));
            }
            verdict = Some((rep.verdict(), rep.pass));
            rep.csv()
        }
    };
    Ok(Outcome { csv, diagnostics, verdict })
}

/// Exit code for an error: 2 for rejected input, 1 for solver failures.
pub fn exit_code(e: &FdError) -> i32 {
    match e {
        FdError::ConstraintViolations(_)
        | FdError::Parse { .. }
        | FdError::Configuration(_)
        | FdError::ContractionBudget { .. } => 2,
        _ => 1,
    }
}

/// Write `body` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, body: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(body.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| FdError::Io(e.to_string()))?;
    Ok(())
}
