//! Reduced Bellman operators and n-step backward induction.
//!
//! Values are kept in capital units: the table at step `m` holds
//! `rho^-(n-m) B^(n-m) f`, so the root value is the hedge price directly.
//! Vertex `I` of a step is encoded as a bit mask, bit `j` set meaning asset
//! `j` moved up.
//!
//! Homogeneous vertex markets run on the recombining lattice keyed by
//! up-count vectors; time-dependent factors, path-dependent payoffs and
//! nonlinear jump maps run on the full tree under a size budget.

mod costs;
pub(crate) mod recombining;
mod step;
mod strategy;
mod tree;

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use crate::error::{arg, HedgeError, Result};
use crate::geometry;
use crate::minmax::{Candidate, GeometryMode, Sense};
use crate::payoffs::{power_monomial, Payoff, PowerFit};

pub use step::{vertex_factors, StepGeometry};
pub use strategy::{extract_strategy, replay, Replay};

/// Jump map `z -> g_i(z)` of the nonlinear-jump model.
pub type JumpMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// Payoff on a whole price path `S_0..S_n`.
pub type PathPayoff = Arc<dyn Fn(&[Vec<f64>]) -> f64 + Send + Sync>;
/// Transaction cost `g(delta_gamma, z)`.
pub type CostFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Default cap on `n * J` (log2 of the leaf count) for tree pricing.
pub const DEFAULT_TREE_BUDGET: usize = 24;
/// Trees with more internal nodes than this do not keep strategy tables.
pub const MAX_STORED_TREE_NODES: usize = 1 << 20;

/// Interval market: `J` assets with per-step price relatives in
/// `[d_j, u_j]` and bond factor `rho`.
#[derive(Clone)]
pub struct MarketSpec {
    pub down: Vec<f64>,
    pub up: Vec<f64>,
    pub rho: f64,
    pub steps: usize,
    /// Per-step `(down, up)` factors overriding `down`/`up`.
    pub schedule: Option<Vec<(Vec<f64>, Vec<f64>)>>,
    pub jump_maps: Option<Vec<JumpMap>>,
}

impl fmt::Debug for MarketSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MarketSpec")
            .field("down", &self.down)
            .field("up", &self.up)
            .field("rho", &self.rho)
            .field("steps", &self.steps)
            .field("schedule", &self.schedule)
            .field("jump_maps", &self.jump_maps.as_ref().map(|m| m.len()))
            .finish()
    }
}

fn check_factors(down: &[f64], up: &[f64], rho: f64, what: &str) -> Result<()> {
    if down.is_empty() || down.len() != up.len() {
        return arg(format!("{what}: need one down and one up factor per asset"));
    }
    for (j, (&d, &u)) in down.iter().zip(up).enumerate() {
        if !(d.is_finite() && u.is_finite()) || d <= 0.0 {
            return arg(format!("{what}: asset {}: requires 0 < d_j (d = {d})", j + 1));
        }
        if d >= rho {
            return arg(format!("{what}: asset {}: requires d_j < ρ (d = {d}, ρ = {rho})", j + 1));
        }
        if u <= rho {
            return arg(format!("{what}: asset {}: requires ρ < u_j (u = {u}, ρ = {rho})", j + 1));
        }
    }
    Ok(())
}

impl MarketSpec {
    pub fn new(down: Vec<f64>, up: Vec<f64>, rho: f64, steps: usize) -> Result<Self> {
        if !rho.is_finite() || rho < 1.0 {
            return arg(format!("requires ρ ≥ 1 (ρ = {rho})"));
        }
        check_factors(&down, &up, rho, "market")?;
        Ok(Self { down, up, rho, steps, schedule: None, jump_maps: None })
    }

    /// Time-dependent factors, one `(down, up)` pair per step.
    pub fn with_schedule(mut self, schedule: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        if schedule.len() != self.steps {
            return arg(format!("schedule has {} entries for {} steps", schedule.len(), self.steps));
        }
        for (m, (d, u)) in schedule.iter().enumerate() {
            if d.len() != self.assets() {
                return arg(format!("step {m}: factor count differs from the asset count"));
            }
            check_factors(d, u, self.rho, &format!("step {m}"))?;
        }
        self.schedule = Some(schedule);
        Ok(self)
    }

    /// Nonlinear jump maps replacing the vertex outcomes.
    pub fn with_jump_maps(mut self, maps: Vec<JumpMap>) -> Result<Self> {
        if maps.len() < self.assets() + 1 {
            return arg(format!("need at least J + 1 = {} jump maps", self.assets() + 1));
        }
        self.jump_maps = Some(maps);
        Ok(self)
    }

    pub fn assets(&self) -> usize {
        self.down.len()
    }

    pub fn factors_at(&self, m: usize) -> (&[f64], &[f64]) {
        match &self.schedule {
            Some(s) => (&s[m].0, &s[m].1),
            None => (&self.down, &self.up),
        }
    }

    fn check_z(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.assets() {
            return arg(format!("initial prices have {} entries for {} assets", z.len(), self.assets()));
        }
        if z.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return arg("initial prices must be positive");
        }
        Ok(())
    }

    /// Per-coordinate box `[z d^n, z u^n]` of reachable prices.
    pub fn reachable_box(&self, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_z(z)?;
        let mut lo = z.to_vec();
        let mut hi = z.to_vec();
        for m in 0..self.steps {
            let (d, u) = self.factors_at(m);
            for j in 0..z.len() {
                lo[j] *= d[j];
                hi[j] *= u[j];
            }
        }
        Ok((lo, hi))
    }
}

/// Lipschitz transaction-cost model.
#[derive(Clone)]
pub struct CostModel {
    pub beta: f64,
    pub proportional: bool,
    g: CostFn,
}

impl fmt::Debug for CostModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostModel")
            .field("beta", &self.beta)
            .field("proportional", &self.proportional)
            .finish()
    }
}

impl CostModel {
    /// `g(dg, z) = beta * sum_j |dg_j| z_j`.
    pub fn proportional(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return arg("cost coefficient must be non-negative");
        }
        Ok(Self {
            beta,
            proportional: true,
            g: Arc::new(move |dg: &[f64], z: &[f64]| beta * dg.iter().zip(z).map(|(a, b)| a.abs() * b).sum::<f64>()),
        })
    }

    /// A custom cost with declared Lipschitz constant `beta`:
    /// `|g(a, z) - g(b, z)| <= beta |z| |a - b|`.
    pub fn custom(beta: f64, g: CostFn) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return arg("cost Lipschitz constant must be non-negative");
        }
        Ok(Self { beta, proportional: false, g })
    }

    pub fn eval(&self, dgamma: &[f64], z: &[f64]) -> f64 {
        (self.g)(dgamma, z)
    }
}

/// Knobs shared by the pricing entry points.
#[derive(Debug, Clone)]
pub struct PricingOptions {
    /// `None` picks strict enumeration, switching to lower-dimensional
    /// extreme measures with a warning when the vertices are degenerate.
    pub mode: Option<GeometryMode>,
    pub store_tables: bool,
    /// Maximal log2 of the tree leaf count.
    pub tree_budget: usize,
    /// Holding before the first trade in costed pricing; zero if unset.
    pub initial_holding: Option<Vec<f64>>,
}

impl Default for PricingOptions {
    fn default() -> Self {
        Self { mode: None, store_tables: true, tree_budget: DEFAULT_TREE_BUDGET, initial_holding: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    European,
    American,
    Lower,
    PathDependent,
    NonlinearJumps,
    Costed,
    FixedCost,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::European => "european",
            Variant::American => "american",
            Variant::Lower => "lower",
            Variant::PathDependent => "path_dependent",
            Variant::NonlinearJumps => "nonlinear_jumps",
            Variant::Costed => "costed",
            Variant::FixedCost => "fixed_cost",
        }
    }
}

/// Node layout of the result tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// Step `m` nodes are up-count vectors `k` with `k_j <= m`, stored at
    /// `sum_j k_j (m+1)^j`.
    Lattice,
    /// Step `m` nodes are branch sequences `i_0..i_{m-1}`, stored at
    /// `sum_s i_s b^s`.
    Tree { branching: usize },
}

/// One candidate of a costed node: expected next value and hedge.
#[derive(Debug, Clone, PartialEq)]
pub struct CostOption {
    pub measure: u32,
    pub expected: f64,
    pub gamma: Vec<f64>,
}

/// Per-node tables of one step.
#[derive(Debug, Clone, Default)]
pub struct Layer {
    /// Prices, `J` per node.
    pub prices: Vec<f64>,
    /// Node values in capital units. Costed layers hold the value at zero
    /// previous holding, the root at the initial holding.
    pub values: Vec<f64>,
    /// Hedge vectors, `J` per node.
    pub gammas: Vec<f64>,
    /// Index into `measures` of the active extreme measure.
    pub active: Vec<u32>,
    pub measures: Vec<Candidate>,
    /// Immediate exercise strictly beats continuation.
    pub exercise: Option<Vec<bool>>,
    pub cost_options: Option<Vec<Vec<CostOption>>>,
}

impl Layer {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn gamma(&self, node: usize) -> &[f64] {
        let j = self.gammas.len() / self.values.len().max(1);
        &self.gammas[node * j..(node + 1) * j]
    }

    pub fn price(&self, node: usize) -> &[f64] {
        let j = self.prices.len() / self.values.len().max(1);
        &self.prices[node * j..(node + 1) * j]
    }

    pub fn active_measure(&self, node: usize) -> &Candidate {
        &self.measures[self.active[node] as usize]
    }
}

#[derive(Debug, Clone)]
pub struct Metadata {
    pub node_count: usize,
    pub elapsed_secs: f64,
    pub geometry_mode: GeometryMode,
    pub warnings: Vec<String>,
    /// How often each support was active over the stored nodes.
    pub active_usage: Vec<(Vec<usize>, usize)>,
}

/// Price with per-node strategy tables.
#[derive(Debug, Clone)]
pub struct HedgeResult {
    pub price: f64,
    pub variant: Variant,
    pub z0: Vec<f64>,
    pub assets: usize,
    pub rho: f64,
    pub steps: usize,
    pub layout: Layout,
    /// Steps `0..n`; empty when tables were not stored.
    pub layers: Vec<Layer>,
    pub cost: Option<CostModel>,
    pub initial_holding: Vec<f64>,
    /// Capital multiplier of the fixed-cost model.
    pub fixed_cost: Option<f64>,
    pub metadata: Metadata,
}

impl HedgeResult {
    fn usage(&mut self) {
        let mut counts: std::collections::BTreeMap<Vec<usize>, usize> = Default::default();
        for l in &self.layers {
            for &a in &l.active {
                *counts.entry(l.measures[a as usize].indices.clone()).or_default() += 1;
            }
        }
        self.metadata.active_usage = counts.into_iter().collect();
    }
}

/// One application of the upper operator at `z` with step-0 factors.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub value: f64,
    pub gamma: Vec<f64>,
    pub active: Candidate,
    pub mode: GeometryMode,
}

/// `(B f)(z) = max_Omega E_Omega f(xi z)` over the extreme risk-neutral
/// laws of the vertices, with the minimising hedge.
pub fn bellman_step(f: &dyn Fn(&[f64]) -> f64, z: &[f64], m: &MarketSpec) -> Result<StepOutcome> {
    bellman_step_with(f, z, m, Sense::Upper, None)
}

pub fn bellman_step_with(
    f: &dyn Fn(&[f64]) -> f64,
    z: &[f64],
    m: &MarketSpec,
    sense: Sense,
    mode: Option<GeometryMode>,
) -> Result<StepOutcome> {
    m.check_z(z)?;
    let (d, u) = m.factors_at(0);
    let (geo, _) = StepGeometry::vertex(d, u, m.rho, 1.0, mode)?;
    let values: Vec<f64> = geo
        .factors
        .iter()
        .map(|xi| {
            let p: Vec<f64> = xi.iter().zip(z).map(|(a, b)| a * b).collect();
            f(&p)
        })
        .collect();
    let (value, pos, gamma) = geo.solve(&values, Some(z), sense)?;
    Ok(StepOutcome { value, gamma, active: geo.candidate(pos).clone(), mode: geo.mode() })
}

fn homogeneous(m: &MarketSpec) -> bool {
    m.schedule.is_none() && m.jump_maps.is_none()
}

fn vertex_geometry(m: &MarketSpec, scale: f64, mode: Option<GeometryMode>, warnings: &mut Vec<String>) -> Result<Vec<StepGeometry>> {
    let count = if homogeneous(m) { 1 } else { m.steps };
    let mut out = Vec::with_capacity(count);
    for s in 0..count {
        let (d, u) = m.factors_at(s);
        let (g, w) = StepGeometry::vertex(d, u, m.rho, scale, mode).map_err(|e| e.context(format!("step {s}")))?;
        if let Some(w) = w {
            if !warnings.contains(&w) {
                warnings.push(w);
            }
        }
        out.push(g);
    }
    Ok(out)
}

fn convexity_warning(p: &Payoff, warnings: &mut Vec<String>) {
    if p.convex != Some(true) {
        warnings.push("payoff not known to be convex: the result prices the finite-jump (vertex) model".into());
    }
}

struct Job<'a> {
    market: &'a MarketSpec,
    z0: &'a [f64],
    opts: &'a PricingOptions,
    variant: Variant,
    started: Instant,
    warnings: Vec<String>,
}

impl<'a> Job<'a> {
    fn new(market: &'a MarketSpec, z0: &'a [f64], opts: &'a PricingOptions, variant: Variant) -> Result<Self> {
        market.check_z(z0)?;
        Ok(Self { market, z0, opts, variant, started: Instant::now(), warnings: Vec::new() })
    }

    fn finish(self, price: f64, layout: Layout, layers: Vec<Layer>, nodes: usize, mode: GeometryMode) -> HedgeResult {
        let mut h = HedgeResult {
            price,
            variant: self.variant,
            z0: self.z0.to_vec(),
            assets: self.market.assets(),
            rho: self.market.rho,
            steps: self.market.steps,
            layout,
            layers,
            cost: None,
            initial_holding: vec![0.0; self.market.assets()],
            fixed_cost: None,
            metadata: Metadata {
                node_count: nodes,
                elapsed_secs: self.started.elapsed().as_secs_f64(),
                geometry_mode: mode,
                warnings: self.warnings,
                active_usage: Vec::new(),
            },
        };
        h.usage();
        h
    }
}

fn path_of(p: &Payoff) -> PathPayoff {
    let f = p.function();
    Arc::new(move |path: &[Vec<f64>]| f(path.last().expect("non-empty path")))
}

/// Runs a vertex-model recursion on the lattice when factors are
/// homogeneous and on the tree otherwise.
fn run_vertex(mut job: Job<'_>, p: &Payoff, sense: Sense, american: bool, scale: f64) -> Result<HedgeResult> {
    convexity_warning(p, &mut job.warnings);
    let geos = vertex_geometry(job.market, scale, job.opts.mode, &mut job.warnings)?;
    let mode = geos[0].mode();
    if homogeneous(job.market) {
        let f = p.function();
        let run = recombining::run(job.market, job.z0, &geos[0], f.as_ref(), sense, american, job.opts.store_tables)?;
        Ok(job.finish(run.price, Layout::Lattice, run.layers, run.nodes, mode))
    } else {
        let model = tree::Model::Vertex(geos);
        let run = tree::run(job.market, job.z0, &model, &path_of(p), sense, american, job.opts)?;
        let b = 1 << job.market.assets();
        Ok(job.finish(run.price, Layout::Tree { branching: b }, run.layers, run.nodes, mode))
    }
}

/// Upper hedge price `rho^-n B^n f (z0)`.
pub fn price_european(p: &Payoff, z0: &[f64], m: &MarketSpec) -> Result<HedgeResult> {
    price_european_with(p, z0, m, &PricingOptions::default())
}

pub fn price_european_with(p: &Payoff, z0: &[f64], m: &MarketSpec, opts: &PricingOptions) -> Result<HedgeResult> {
    if m.jump_maps.is_some() {
        return price_nonlinear_jumps_with(p, z0, m, opts);
    }
    run_vertex(Job::new(m, z0, opts, Variant::European)?, p, Sense::Upper, false, 1.0)
}

/// American upper price: `V_m = max(f, rho^-1 B V_{m+1})` with exercise
/// flags per node.
pub fn price_american(p: &Payoff, z0: &[f64], m: &MarketSpec) -> Result<HedgeResult> {
    price_american_with(p, z0, m, &PricingOptions::default())
}

pub fn price_american_with(p: &Payoff, z0: &[f64], m: &MarketSpec, opts: &PricingOptions) -> Result<HedgeResult> {
    if m.jump_maps.is_some() {
        return arg("American pricing is implemented for vertex markets only");
    }
    run_vertex(Job::new(m, z0, opts, Variant::American)?, p, Sense::Upper, true, 1.0)
}

/// Lower price `rho^-n B_low^n f (z0)`.
pub fn price_lower(p: &Payoff, z0: &[f64], m: &MarketSpec) -> Result<HedgeResult> {
    price_lower_with(p, z0, m, &PricingOptions::default())
}

pub fn price_lower_with(p: &Payoff, z0: &[f64], m: &MarketSpec, opts: &PricingOptions) -> Result<HedgeResult> {
    if m.jump_maps.is_some() {
        let mut job = Job::new(m, z0, opts, Variant::Lower)?;
        convexity_warning(p, &mut job.warnings);
        return run_jumps(job, &path_of(p), Sense::Lower);
    }
    run_vertex(Job::new(m, z0, opts, Variant::Lower)?, p, Sense::Lower, false, 1.0)
}

/// Upper price of a payoff on the whole path `S_0..S_n`, by backward
/// induction over the non-recombining tree.
pub fn price_path_dependent(p: &PathPayoff, z0: &[f64], m: &MarketSpec) -> Result<HedgeResult> {
    price_path_dependent_with(p, z0, m, &PricingOptions::default())
}

pub fn price_path_dependent_with(p: &PathPayoff, z0: &[f64], m: &MarketSpec, opts: &PricingOptions) -> Result<HedgeResult> {
    let mut job = Job::new(m, z0, opts, Variant::PathDependent)?;
    if m.jump_maps.is_some() {
        return run_jumps(job, p, Sense::Upper);
    }
    let geos = vertex_geometry(m, 1.0, opts.mode, &mut job.warnings)?;
    let mode = geos[0].mode();
    let run = tree::run(m, z0, &tree::Model::Vertex(geos), p, Sense::Upper, false, opts)?;
    let b = 1 << m.assets();
    Ok(job.finish(run.price, Layout::Tree { branching: b }, run.layers, run.nodes, mode))
}

fn run_jumps(job: Job<'_>, p: &PathPayoff, sense: Sense) -> Result<HedgeResult> {
    let maps = job.market.jump_maps.as_ref().ok_or_else(|| HedgeError::Argument("market has no jump maps".into()))?;
    let model = tree::Model::Jumps { maps: maps.clone(), mode: job.opts.mode };
    let run = tree::run(job.market, job.z0, &model, p, sense, false, job.opts)?;
    let mut job = job;
    job.warnings.extend(run.warnings);
    let mode = run.mode;
    Ok(job.finish(run.price, Layout::Tree { branching: maps.len() }, run.layers, run.nodes, mode))
}

/// Upper price when each step maps `z` to one of `g_1(z)..g_k(z)`.
pub fn price_nonlinear_jumps(p: &Payoff, z0: &[f64], m: &MarketSpec) -> Result<HedgeResult> {
    price_nonlinear_jumps_with(p, z0, m, &PricingOptions::default())
}

pub fn price_nonlinear_jumps_with(p: &Payoff, z0: &[f64], m: &MarketSpec, opts: &PricingOptions) -> Result<HedgeResult> {
    let mut job = Job::new(m, z0, opts, Variant::NonlinearJumps)?;
    convexity_warning(p, &mut job.warnings);
    run_jumps(job, &path_of(p), Sense::Upper)
}

/// Largest admissible cost constant:
/// `min(kappa1, kappa2) / (J delta_n(z0))` with
/// `delta_n(z) = delta(z) (max_j u_j / min_j d_j)^n`, the spread taken on
/// the vectors `xi_I - rho`.
pub fn cost_gate(m: &MarketSpec, z0: &[f64]) -> Result<f64> {
    m.check_z(z0)?;
    if !homogeneous(m) {
        return arg("the cost gate is defined for homogeneous vertex markets");
    }
    let centered: Vec<Vec<f64>> = vertex_factors(&m.down, &m.up)
        .into_iter()
        .map(|xi| xi.into_iter().map(|x| x - m.rho).collect())
        .collect();
    let sp = geometry::spread_characteristics(&centered)?;
    let umax = m.up.iter().cloned().fold(f64::MIN, f64::max);
    let dmin = m.down.iter().cloned().fold(f64::MAX, f64::min);
    let delta_n = geometry::coordinate_ratio(z0)? * (umax / dmin).powi(m.steps as i32);
    Ok(sp.kappa1.min(sp.kappa2) / (m.assets() as f64 * delta_n))
}

/// Upper price with transaction costs on the state `(z, previous hedge)`.
/// Refuses `beta` at or above [`cost_gate`].
pub fn price_with_costs(p: &Payoff, z0: &[f64], m: &MarketSpec, c: &CostModel) -> Result<HedgeResult> {
    price_with_costs_with(p, z0, m, c, &PricingOptions::default())
}

pub fn price_with_costs_with(
    p: &Payoff,
    z0: &[f64],
    m: &MarketSpec,
    c: &CostModel,
    opts: &PricingOptions,
) -> Result<HedgeResult> {
    let mut job = Job::new(m, z0, opts, Variant::Costed)?;
    if !homogeneous(m) {
        return arg("costed pricing is implemented for homogeneous vertex markets");
    }
    let gate = cost_gate(m, z0)?;
    if c.beta > 0.0 && c.beta >= gate {
        return Err(HedgeError::Precondition {
            msg: format!("cost constant β = {} is not below the admissible bound {gate:.6e}", c.beta),
            max_admissible: Some(gate),
        });
    }
    let v0 = match &opts.initial_holding {
        Some(v) if v.len() != m.assets() => return arg("initial holding needs one entry per asset"),
        Some(v) => v.clone(),
        None => vec![0.0; m.assets()],
    };
    convexity_warning(p, &mut job.warnings);
    let geos = vertex_geometry(m, 1.0, Some(GeometryMode::Strict), &mut job.warnings)?;
    let f = p.function();
    let run = costs::run(m, z0, &geos[0], f.as_ref(), c, &v0)?;
    let mode = geos[0].mode();
    let mut h = job.finish(run.price, Layout::Lattice, run.layers, run.nodes, mode);
    h.cost = Some(c.clone());
    h.initial_holding = v0;
    Ok(h)
}

/// Fixed-cost capital model `X' = beta_t (gamma, xi S) + rho (X - (gamma, S))`
/// by direct recursion on the vectors `beta_t xi - rho`.
pub fn price_fixed_cost(p: &Payoff, z0: &[f64], m: &MarketSpec, beta_t: f64) -> Result<HedgeResult> {
    let job = Job::new(m, z0, &DEFAULT_OPTS, Variant::FixedCost)?;
    check_fixed(m, beta_t)?;
    let mut h = run_vertex(job, p, Sense::Upper, false, beta_t)?;
    h.fixed_cost = Some(beta_t);
    Ok(h)
}

/// The same price through the rescaled bond factor:
/// `beta_t^-n` times the frictionless price with `rho / beta_t`.
pub fn price_fixed_cost_rescaled(p: &Payoff, z0: &[f64], m: &MarketSpec, beta_t: f64) -> Result<f64> {
    check_fixed(m, beta_t)?;
    let mut scaled = m.clone();
    scaled.rho = m.rho / beta_t;
    let h = run_vertex(Job::new(&scaled, z0, &DEFAULT_OPTS, Variant::European)?, p, Sense::Upper, false, 1.0)?;
    Ok(h.price * beta_t.powi(-(m.steps as i32)))
}

static DEFAULT_OPTS: PricingOptions =
    PricingOptions { mode: None, store_tables: true, tree_budget: DEFAULT_TREE_BUDGET, initial_holding: None };

fn check_fixed(m: &MarketSpec, beta_t: f64) -> Result<()> {
    if !(beta_t.is_finite() && beta_t > 0.0 && beta_t <= 1.0) {
        return arg("fixed-cost multiplier must lie in (0, 1]");
    }
    if !homogeneous(m) {
        return arg("fixed-cost pricing is implemented for homogeneous vertex markets");
    }
    let r = m.rho / beta_t;
    for j in 0..m.assets() {
        if !(m.down[j] < r && r < m.up[j]) {
            return Err(HedgeError::Precondition {
                msg: format!("asset {}: requires d_j < ρ/β̃ < u_j (ρ/β̃ = {r})", j + 1),
                max_admissible: None,
            });
        }
    }
    Ok(())
}

/// Lattice price of a power fit through the eigenfunction identity
/// `B(a + c f_p) = a + c lambda f_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerPrice {
    pub price: f64,
    /// `rho^-n` times the fit's sup error; bounds the distance to the
    /// price of the fitted payoff when the fit is certified on the
    /// reachable box.
    pub error_bound: f64,
    pub lambda_upper: f64,
    pub lambda_lower: f64,
}

/// `(B f_p)(1)` for the monomial `f_p(z) = prod z_j^e_j`.
pub fn power_eigenvalue(exponents: &[u32], m: &MarketSpec, sense: Sense) -> Result<f64> {
    if exponents.len() != m.assets() {
        return arg("one exponent per asset is required");
    }
    let e = exponents.to_vec();
    let f = move |z: &[f64]| power_monomial(&e, z);
    Ok(bellman_step_with(&f, &vec![1.0; m.assets()], m, sense, None)?.value)
}

pub fn price_power(fit: &PowerFit, z0: &[f64], m: &MarketSpec) -> Result<PowerPrice> {
    m.check_z(z0)?;
    if !homogeneous(m) {
        return arg("the eigenfunction identity needs homogeneous factors");
    }
    let up = power_eigenvalue(&fit.exponents, m, Sense::Upper)?;
    let low = power_eigenvalue(&fit.exponents, m, Sense::Lower)?;
    let lambda = if fit.coeff >= 0.0 { up } else { low };
    let n = m.steps as i32;
    let disc = m.rho.powi(-n);
    let price = disc * (fit.scale + fit.coeff * lambda.powi(n) * power_monomial(&fit.exponents, z0));
    Ok(PowerPrice { price, error_bound: disc * fit.sup_error, lambda_upper: up, lambda_lower: low })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::payoffs::{make_payoff, PayoffKind, PayoffParams};

    fn call(k: f64) -> Payoff {
        make_payoff(PayoffKind::CallOnMax, PayoffParams { strike: Some(k), ..Default::default() }).unwrap()
    }

    #[test]
    fn validation_messages() {
        let e = MarketSpec::new(vec![1.1], vec![1.2], 1.05, 1).unwrap_err();
        assert!(e.to_string().contains("requires d_j < ρ"));
        let e = MarketSpec::new(vec![0.9], vec![1.0], 1.05, 1).unwrap_err();
        assert!(e.to_string().contains("requires ρ < u_j"));
    }

    #[test]
    fn step_examples() {
        let m = MarketSpec::new(vec![0.9], vec![1.2], 1.0, 1).unwrap();
        let s = bellman_step(&|z: &[f64]| (z[0] - 1.0).max(0.0), &[1.0], &m).unwrap();
        assert!((s.value - 1.0 / 15.0).abs() < 1e-15);
        let c = bellman_step(&|_: &[f64]| 3.0, &[1.0], &m).unwrap();
        assert!((c.value - 3.0).abs() < 1e-15 && c.gamma[0].abs() < 1e-14);

        let m2 = MarketSpec::new(vec![0.9, 0.9], vec![1.2, 1.2], 1.0, 1).unwrap();
        let s = bellman_step(&|z: &[f64]| z[0].max(z[1]), &[1.0, 1.0], &m2).unwrap();
        assert!((s.value - 1.1).abs() < 1e-14);
        assert_eq!(s.mode, GeometryMode::Extended);
    }

    #[test]
    fn zero_steps_and_constant() {
        let m = MarketSpec::new(vec![0.9, 0.8], vec![1.2, 1.3], 1.02, 0).unwrap();
        let h = price_european(&call(1.0), &[1.1, 0.9], &m).unwrap();
        assert_eq!(h.price, 0.1f64.max(0.0).max(1.1 - 1.0));
        let m = MarketSpec::new(vec![0.9, 0.8], vec![1.2, 1.3], 1.02, 3).unwrap();
        let h = price_european(&Payoff::custom(|_| 2.0), &[1.0, 1.0], &m).unwrap();
        assert!((h.price - 2.0 / 1.02f64.powi(3)).abs() < 1e-14);
    }

    #[test]
    fn costed_gate_refuses() {
        let m = MarketSpec::new(vec![0.9, 0.85], vec![1.15, 1.2], 1.01, 2).unwrap();
        let gate = cost_gate(&m, &[1.0, 1.0]).unwrap();
        let e = price_with_costs(&call(1.0), &[1.0, 1.0], &m, &CostModel::proportional(gate * 1.01).unwrap()).unwrap_err();
        match e {
            HedgeError::Precondition { max_admissible, .. } => assert!((max_admissible.unwrap() - gate).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
    }
}
