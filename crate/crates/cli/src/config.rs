//! Job configuration in TOML.
//!
//! [`parse_config`] deserialises the document, checks every field it can
//! without running an engine, and builds the market, payoff and cost
//! objects. All field errors are collected rather than stopping at the
//! first one.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use rainbow_hedge::continuum::ContinuumSpec;
use rainbow_hedge::lattice::{cost_gate, CostModel, JumpMap, MarketSpec, PathPayoff, DEFAULT_TREE_BUDGET};
use rainbow_hedge::minmax::GeometryMode;
use rainbow_hedge::payoffs::{make_payoff, Payoff, PayoffKind, PayoffParams};

use crate::expr::{parse, parse_payoff_expression};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    European,
    American,
    Lower,
    /// Upper and lower price together.
    Interval,
    PathDependent,
    Costed,
    NonlinearJumps,
    Continuum,
    Convergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FastPathMode {
    #[default]
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TableFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub variant: VariantName,
    #[serde(default)]
    pub fast_path: FastPathMode,
    pub model: ModelConfig,
    pub payoff: PayoffConfig,
    pub cost: Option<CostConfig>,
    pub continuum: Option<ContinuumConfig>,
    pub convergence: Option<ConvergenceConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub budget: BudgetConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub z0: Vec<f64>,
    pub down: Option<Vec<f64>>,
    pub up: Option<Vec<f64>>,
    pub rho: Option<f64>,
    pub steps: Option<usize>,
    /// Per-step factors of the time-dependent model.
    pub schedule: Option<Vec<StepFactors>>,
    /// Jump maps of the nonlinear model, one expression per asset each.
    pub jumps: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub geometry: GeometryChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepFactors {
    pub down: Vec<f64>,
    pub up: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryChoice {
    /// Strict enumeration, falling back to extended with a warning.
    #[default]
    Auto,
    Strict,
    Extended,
}

impl GeometryChoice {
    pub fn mode(self) -> Option<GeometryMode> {
        match self {
            GeometryChoice::Auto => None,
            GeometryChoice::Strict => Some(GeometryMode::Strict),
            GeometryChoice::Extended => Some(GeometryMode::Extended),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffConfig {
    /// A named kind, or `expression`.
    pub kind: String,
    pub strike: Option<f64>,
    pub strikes: Option<Vec<f64>>,
    pub weights: Option<Vec<f64>>,
    pub exponents: Option<Vec<u32>>,
    pub coeff: Option<f64>,
    pub expression: Option<String>,
    /// How a path is reduced to a price vector for path-dependent pricing.
    pub path: Option<PathReduction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathReduction {
    Terminal,
    /// Running maximum of each asset.
    Max,
    /// Arithmetic average over `S_0..S_n` of each asset.
    Average,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub model: CostKind,
    pub beta: f64,
    /// Per-asset factors `c_j` in `[0, 1]` of the custom cost
    /// `beta * sum_j c_j |dg_j| z_j`.
    pub weights: Option<Vec<f64>>,
    /// Holding before the first trade; zero if absent.
    pub initial_holding: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    Proportional,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuumConfig {
    pub sigma: Vec<f64>,
    pub r: f64,
    pub maturity: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    /// Evaluation time.
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub method: ContinuumMethod,
    #[serde(default = "default_pde_nodes")]
    pub pde_nodes: usize,
}

fn one() -> f64 {
    1.0
}

fn default_pde_nodes() -> usize {
    81
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuumMethod {
    #[default]
    Upper,
    Lower,
    Complete,
    FirstOrder,
    PdeUpper,
    PdeLower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub steps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<String>,
    pub format: Option<TableFormat>,
    pub surface: Option<SurfaceConfig>,
    #[serde(default)]
    pub strategy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points: usize,
}

/// Largest number of surface points.
pub const MAX_SURFACE_POINTS: usize = 40_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    #[serde(default = "default_tree_budget")]
    pub tree_budget: usize,
    /// Seed of the random convexity spot check.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub convexity_samples: usize,
}

fn default_tree_budget() -> usize {
    DEFAULT_TREE_BUDGET
}

fn default_samples() -> usize {
    256
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self { tree_budget: default_tree_budget(), seed: 0, convexity_samples: default_samples() }
    }
}

/// Field-level validation errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// A validated job with its engine objects.
#[derive(Clone)]
pub struct Job {
    pub config: JobConfig,
    /// The document as given, echoed into the summary.
    pub source: String,
    pub assets: usize,
    pub z0: Vec<f64>,
    /// Absent for continuum and convergence jobs without lattice factors.
    pub market: Option<MarketSpec>,
    pub payoff: Payoff,
    pub path_payoff: Option<PathPayoff>,
    pub cost: Option<CostModel>,
    pub continuum: Option<ContinuumSpec>,
    pub warnings: Vec<String>,
}

impl fmt::Debug for Job {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Job")
            .field("config", &self.config)
            .field("market", &self.market)
            .field("payoff", &self.payoff)
            .field("warnings", &self.warnings)
            .finish()
    }
}

struct Collector(Vec<String>);

impl Collector {
    fn push(&mut self, field: &str, msg: impl fmt::Display) {
        self.0.push(format!("{field}: {msg}"));
    }

    fn len(&mut self, field: &str, v: &[f64], j: usize) {
        if v.len() != j {
            self.push(field, format!("expected {j} entries (one per asset), got {}", v.len()));
        }
    }
}

fn factors(c: &mut Collector, prefix: &str, down: &[f64], up: &[f64], rho: f64) {
    for (j, (&d, &u)) in down.iter().zip(up).enumerate() {
        if !(d.is_finite() && d > 0.0) {
            c.push(&format!("{prefix}down[{j}]"), format!("requires d_j > 0 (d = {d})"));
        } else if d >= rho {
            c.push(&format!("{prefix}down[{j}]"), format!("requires d_j < ρ (d = {d}, ρ = {rho})"));
        }
        if !u.is_finite() || u <= rho {
            c.push(&format!("{prefix}up[{j}]"), format!("requires ρ < u_j (u = {u}, ρ = {rho})"));
        }
    }
}

fn needs_lattice(v: VariantName) -> bool {
    !matches!(v, VariantName::Continuum | VariantName::Convergence)
}

/// Parses and validates a TOML job document.
pub fn parse_config(text: &str) -> Result<Job, ConfigErrors> {
    let config: JobConfig = toml::from_str(text).map_err(|e| ConfigErrors(vec![format!("document: {}", e.message())
        + &e.span().map(|s| format!(" (at byte {})", s.start)).unwrap_or_default()]))?;
    build(config, text.to_string())
}

/// Validates an already deserialised configuration.
pub fn build(config: JobConfig, source: String) -> Result<Job, ConfigErrors> {
    let mut c = Collector(Vec::new());
    let mut warnings = Vec::new();
    let m = &config.model;
    let j = m.z0.len();
    if j == 0 {
        c.push("model.z0", "needs at least one asset");
        return Err(ConfigErrors(c.0));
    }
    for (i, z) in m.z0.iter().enumerate() {
        if !(z.is_finite() && *z > 0.0) {
            c.push(&format!("model.z0[{i}]"), format!("initial prices must be positive (got {z})"));
        }
    }

    let variant = config.variant;
    let mut market = None;
    let lattice_given = m.down.is_some() || m.up.is_some() || m.rho.is_some() || m.steps.is_some();
    if needs_lattice(variant) || lattice_given {
        match (&m.down, &m.up, m.rho, m.steps) {
            (Some(d), Some(u), Some(rho), Some(n)) => {
                c.len("model.down", d, j);
                c.len("model.up", u, j);
                if !(rho.is_finite() && rho >= 1.0) {
                    c.push("model.rho", format!("requires ρ ≥ 1 (ρ = {rho})"));
                }
                let before = c.0.len();
                if d.len() == j && u.len() == j {
                    factors(&mut c, "model.", d, u, rho);
                }
                if let Some(s) = &m.schedule {
                    if s.len() != n {
                        c.push("model.schedule", format!("has {} entries for {n} steps", s.len()));
                    }
                    for (k, f) in s.iter().enumerate() {
                        c.len(&format!("model.schedule[{k}].down"), &f.down, j);
                        c.len(&format!("model.schedule[{k}].up"), &f.up, j);
                        if f.down.len() == j && f.up.len() == j {
                            factors(&mut c, &format!("model.schedule[{k}]."), &f.down, &f.up, rho);
                        }
                    }
                }
                if c.0.len() == before && rho >= 1.0 && d.len() == j && u.len() == j {
                    match MarketSpec::new(d.clone(), u.clone(), rho, n) {
                        Ok(mut mk) => {
                            if let Some(s) = &m.schedule {
                                match mk.clone().with_schedule(s.iter().map(|f| (f.down.clone(), f.up.clone())).collect()) {
                                    Ok(x) => mk = x,
                                    Err(e) => c.push("model.schedule", e),
                                }
                            }
                            market = Some(mk);
                        }
                        Err(e) => c.push("model", e),
                    }
                }
            }
            _ => {
                for (name, given) in
                    [("down", m.down.is_some()), ("up", m.up.is_some()), ("rho", m.rho.is_some()), ("steps", m.steps.is_some())]
                {
                    if !given {
                        c.push(&format!("model.{name}"), format!("required by the {} variant", variant_name(variant)));
                    }
                }
            }
        }
    }

    // Jump maps.
    match (&m.jumps, variant) {
        (Some(maps), _) => {
            if maps.len() < j + 1 {
                c.push("model.jumps", format!("need at least J + 1 = {} maps", j + 1));
            }
            let mut parsed: Vec<JumpMap> = Vec::new();
            for (k, comps) in maps.iter().enumerate() {
                if comps.len() != j {
                    c.push(&format!("model.jumps[{k}]"), format!("expected {j} component expressions, got {}", comps.len()));
                    continue;
                }
                let mut es = Vec::new();
                for (i, text) in comps.iter().enumerate() {
                    match parse(text, j) {
                        Ok(e) => es.push(e),
                        Err(e) => c.push(&format!("model.jumps[{k}][{i}]"), e),
                    }
                }
                if es.len() == j {
                    parsed.push(Arc::new(move |z: &[f64]| es.iter().map(|e| e.eval(z)).collect()));
                }
            }
            if variant != VariantName::NonlinearJumps && variant != VariantName::PathDependent {
                c.push("model.jumps", "only used by the nonlinear_jumps and path_dependent variants");
            }
            if let Some(mk) = market.take() {
                if parsed.len() == maps.len() {
                    match mk.clone().with_jump_maps(parsed) {
                        Ok(x) => market = Some(x),
                        Err(e) => c.push("model.jumps", e),
                    }
                } else {
                    market = Some(mk);
                }
            }
        }
        (None, VariantName::NonlinearJumps) => c.push("model.jumps", "required by the nonlinear_jumps variant"),
        _ => {}
    }

    let payoff = build_payoff(&mut c, &config.payoff, j);
    let path_payoff = match (variant, &config.payoff.path, &payoff) {
        (VariantName::PathDependent, reduction, Some(p)) => {
            let f = p.function();
            let red = reduction.unwrap_or(PathReduction::Terminal);
            let pp: PathPayoff = Arc::new(move |path: &[Vec<f64>]| f(&reduce(path, red)));
            Some(pp)
        }
        (_, Some(_), _) => {
            c.push("payoff.path", "only used by the path_dependent variant");
            None
        }
        _ => None,
    };

    // Costs.
    let mut cost = None;
    match (&config.cost, variant) {
        (Some(cc), _) => {
            if variant != VariantName::Costed {
                c.push("cost", "only used by the costed variant");
            }
            if !(cc.beta.is_finite() && cc.beta >= 0.0) {
                c.push("cost.beta", format!("must be non-negative (got {})", cc.beta));
            }
            if let Some(v) = &cc.initial_holding {
                c.len("cost.initial_holding", v, j);
            }
            let model = match (cc.model, &cc.weights) {
                (CostKind::Proportional, Some(_)) => {
                    c.push("cost.weights", "only used by the custom cost model");
                    None
                }
                (CostKind::Proportional, None) => CostModel::proportional(cc.beta).ok(),
                (CostKind::Custom, None) => {
                    c.push("cost.weights", "required by the custom cost model");
                    None
                }
                (CostKind::Custom, Some(w)) => {
                    c.len("cost.weights", w, j);
                    if w.iter().any(|x| !(0.0..=1.0).contains(x)) {
                        c.push("cost.weights", "entries must lie in [0, 1] so that β is a Lipschitz constant");
                    }
                    let (w, beta) = (w.clone(), cc.beta);
                    CostModel::custom(
                        beta,
                        Arc::new(move |dg: &[f64], z: &[f64]| {
                            beta * dg.iter().zip(z).zip(&w).map(|((a, b), c)| c * a.abs() * b).sum::<f64>()
                        }),
                    )
                    .ok()
                }
            };
            if let (Some(mk), Some(_)) = (&market, &model) {
                if let Ok(gate) = cost_gate(mk, &m.z0) {
                    if cc.beta > 0.0 && cc.beta >= gate {
                        warnings.push(format!(
                            "cost.beta = {} is not below the admissible bound {gate:.6e}; the costed run will refuse it",
                            cc.beta
                        ));
                    }
                }
            }
            cost = model;
        }
        (None, VariantName::Costed) => c.push("cost", "required by the costed variant"),
        _ => {}
    }

    // Continuum.
    let mut continuum = None;
    match &config.continuum {
        Some(cc) => {
            c.len("continuum.sigma", &cc.sigma, j);
            match ContinuumSpec::new(cc.sigma.clone(), cc.r, cc.maturity, cc.alpha) {
                Ok(s) => continuum = Some(s),
                Err(e) => c.push("continuum", e),
            }
            if !(cc.t >= 0.0 && cc.t <= cc.maturity) {
                c.push("continuum.t", format!("must lie in [0, maturity] (got {})", cc.t));
            }
            if cc.pde_nodes < 5 {
                c.push("continuum.pde_nodes", "needs at least 5 nodes per axis");
            }
            let two = matches!(cc.method, ContinuumMethod::Upper | ContinuumMethod::Lower | ContinuumMethod::Complete);
            if two && j > 2 {
                c.push("continuum.method", "Green-function prices need one or two assets");
            }
        }
        None if matches!(variant, VariantName::Continuum | VariantName::Convergence) => {
            c.push("continuum", format!("required by the {} variant", variant_name(variant)))
        }
        None => {}
    }
    match &config.convergence {
        Some(cv) => {
            if cv.steps.is_empty() || cv.steps[0] == 0 || cv.steps.windows(2).any(|w| w[0] >= w[1]) {
                c.push("convergence.steps", "must be positive and strictly increasing");
            }
            if j > 2 {
                c.push("convergence", "the harness supports one or two assets");
            }
        }
        None if variant == VariantName::Convergence => c.push("convergence", "required by the convergence variant"),
        None => {}
    }

    if let Some(s) = &config.output.surface {
        c.len("output.surface.lo", &s.lo, j);
        c.len("output.surface.hi", &s.hi, j);
        if s.lo.iter().zip(&s.hi).any(|(a, b)| !(*a > 0.0 && a <= b)) {
            c.push("output.surface", "requires 0 < lo <= hi per asset");
        }
        if s.points == 0 {
            c.push("output.surface.points", "must be positive");
        } else if s.points.checked_pow(j as u32).is_none_or(|n| n > MAX_SURFACE_POINTS) {
            c.push("output.surface.points", format!("points^J exceeds the limit of {MAX_SURFACE_POINTS}"));
        }
    }
    if config.budget.tree_budget == 0 || config.budget.tree_budget > 40 {
        c.push("budget.tree_budget", "must lie in 1..=40");
    }

    if !c.0.is_empty() {
        return Err(ConfigErrors(c.0));
    }
    let payoff = payoff.expect("payoff errors are collected");
    if payoff.convex.is_none() {
        if let Some(x) = convexity_spot_check(&payoff, &m.z0, &config.budget) {
            warnings.push(format!(
                "payoff is not convex (midpoint check fails near {x:?}); prices are exact for the finite-jump model only"
            ));
        }
    }
    Ok(Job {
        assets: j,
        z0: m.z0.clone(),
        market,
        payoff,
        path_payoff,
        cost,
        continuum,
        warnings,
        config,
        source,
    })
}

fn variant_name(v: VariantName) -> String {
    serde_json::to_value(v).ok().and_then(|x| x.as_str().map(String::from)).unwrap_or_default()
}

fn reduce(path: &[Vec<f64>], red: PathReduction) -> Vec<f64> {
    let last = path.last().expect("paths contain S_0");
    match red {
        PathReduction::Terminal => last.clone(),
        PathReduction::Max => (0..last.len()).map(|j| path.iter().map(|s| s[j]).fold(f64::MIN, f64::max)).collect(),
        PathReduction::Average => {
            (0..last.len()).map(|j| path.iter().map(|s| s[j]).sum::<f64>() / path.len() as f64).collect()
        }
    }
}

fn kind_by_name(name: &str) -> Option<PayoffKind> {
    use PayoffKind::*;
    [BestOf, CallOnMax, MultiStrike, Portfolio, Spread, Power].into_iter().find(|k| k.name() == name)
}

fn build_payoff(c: &mut Collector, p: &PayoffConfig, j: usize) -> Option<Payoff> {
    if p.kind == "expression" {
        let Some(text) = &p.expression else {
            c.push("payoff.expression", "required when payoff.kind = \"expression\"");
            return None;
        };
        return match parse_payoff_expression(text, j) {
            Ok(x) => Some(x),
            Err(e) => {
                c.push("payoff.expression", e);
                None
            }
        };
    }
    let Some(kind) = kind_by_name(&p.kind) else {
        c.push(
            "payoff.kind",
            format!(
                "unknown kind '{}' (expected best-of, call-on-max, multi-strike, portfolio, spread, power or expression)",
                p.kind
            ),
        );
        return None;
    };
    if p.expression.is_some() {
        c.push("payoff.expression", "only used when payoff.kind = \"expression\"");
    }
    if let Some(v) = &p.strikes {
        c.len("payoff.strikes", v, j);
    }
    if let Some(v) = &p.weights {
        c.len("payoff.weights", v, j);
    }
    if let Some(e) = &p.exponents {
        if e.len() != j {
            c.push("payoff.exponents", format!("expected {j} entries (one per asset), got {}", e.len()));
        }
    }
    if kind == PayoffKind::Spread && j != 2 {
        c.push("payoff.kind", "spread needs exactly two assets");
    }
    let params = PayoffParams {
        strike: p.strike,
        strikes: p.strikes.clone(),
        weights: p.weights.clone(),
        exponents: p.exponents.clone(),
        coeff: p.coeff,
    };
    match make_payoff(kind, params) {
        Ok(x) => Some(x),
        Err(e) => {
            c.push("payoff", e);
            None
        }
    }
}

/// Random midpoint convexity check around `z0`; returns a failing point.
fn convexity_spot_check(p: &Payoff, z0: &[f64], b: &BudgetConfig) -> Option<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(b.seed);
    for _ in 0..b.convexity_samples {
        let x: Vec<f64> = z0.iter().map(|z| z * rng.random_range(0.25..4.0)).collect();
        let y: Vec<f64> = z0.iter().map(|z| z * rng.random_range(0.25..4.0)).collect();
        let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
        let (fx, fy, fm) = (p.eval(&x), p.eval(&y), p.eval(&mid));
        if fm > 0.5 * (fx + fy) + 1e-9 * (1.0 + fx.abs() + fy.abs()) {
            return Some(mid);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
variant = "european"

[model]
z0 = [1.0]
down = [0.9]
up = [1.2]
rho = 1.05
steps = 3

[payoff]
kind = "call-on-max"
strike = 1.0
"#;

    #[test]
    fn minimal_job_round_trips() {
        let job = parse_config(MINIMAL).unwrap();
        assert!(job.warnings.is_empty());
        let text = toml::to_string(&job.config).unwrap();
        let again = parse_config(&text).unwrap();
        assert_eq!(again.config, job.config);
        assert_eq!(job.market.unwrap().steps, 3);
    }

    #[test]
    fn factor_invariants_are_cited() {
        let text = MINIMAL.replace("down = [0.9]", "down = [1.1]");
        let e = parse_config(&text).unwrap_err();
        assert_eq!(e.0.len(), 1);
        assert!(e.0[0].starts_with("model.down[0]: requires d_j < ρ"), "{e}");
        let text = MINIMAL.replace("up = [1.2]", "up = [1.0]").replace("down = [0.9]", "down = [-1.0]");
        let e = parse_config(&text).unwrap_err();
        assert_eq!(e.0.len(), 2, "{e}");
        assert!(e.0[1].contains("requires ρ < u_j"));
    }

    #[test]
    fn unknown_variant_and_fields_are_rejected() {
        let e = parse_config(&MINIMAL.replace("european", "bermudan")).unwrap_err();
        assert!(e.0[0].contains("unknown variant"), "{e}");
        let e = parse_config(&MINIMAL.replace("steps = 3", "steps = 3\nstep = 4")).unwrap_err();
        assert!(e.0[0].contains("unknown field"), "{e}");
        let e = parse_config(&MINIMAL.replace("call-on-max", "butterfly")).unwrap_err();
        assert!(e.0[0].starts_with("payoff.kind: unknown kind"), "{e}");
    }

    #[test]
    fn errors_are_collected_per_field() {
        let text = r#"
variant = "costed"
[model]
z0 = [1.0, 0.0]
down = [0.9]
up = [1.2, 1.3]
rho = 1.0
steps = 2
[payoff]
kind = "expression"
expression = "max(S1, S4)"
"#;
        let e = parse_config(text).unwrap_err();
        let fields: Vec<&str> = e.0.iter().map(|s| s.split(':').next().unwrap()).collect();
        assert_eq!(fields, ["model.z0[1]", "model.down", "payoff.expression", "cost"]);
    }

    #[test]
    fn cost_above_gate_warns_at_parse() {
        let text = MINIMAL.replace("\"european\"", "\"costed\"") + "\n[cost]\nmodel = \"proportional\"\nbeta = 0.5\n";
        let job = parse_config(&text).unwrap();
        assert!(job.warnings.iter().any(|w| w.contains("not below the admissible bound")));
        let text = MINIMAL.replace("\"european\"", "\"costed\"") + "\n[cost]\nmodel = \"proportional\"\nbeta = 1e-6\n";
        assert!(parse_config(&text).unwrap().warnings.is_empty());
    }

    #[test]
    fn non_convex_expression_warns() {
        let text = MINIMAL.replace("kind = \"call-on-max\"\nstrike = 1.0", "kind = \"expression\"\nexpression = \"min(S1, 1)\"");
        let job = parse_config(&text).unwrap();
        assert!(job.warnings.iter().any(|w| w.contains("not convex")));
    }
}
