//! Runs a validated job and writes its artifacts.
//!
//! Every run writes `summary.json`. Tables go to `surface`, `strategy` and
//! `convergence` files in CSV (comma separated, `.` decimal point, LF line
//! ends, header row) or JSON. Numbers in tables use the shortest decimal
//! form that round-trips, so identical jobs give byte-identical tables.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use rainbow_hedge::continuum::{
    convergence_harness, first_order_price, green_price, lognormal_price, solve_pde, ConvergenceReport,
    GreenFunctionQuery, Kernel, PdeGrid,
};
use rainbow_hedge::geometry::spread_characteristics;
use rainbow_hedge::lattice::{
    cost_gate, price_american_with, price_european_with, price_lower_with, price_nonlinear_jumps_with,
    price_path_dependent_with, price_with_costs_with, vertex_factors, HedgeResult, PricingOptions,
};
use rainbow_hedge::minmax::Sense;
use rainbow_hedge::submodular::{fast_price, FastPath};
use rainbow_hedge::HedgeError;

use crate::config::{ConfigErrors, ContinuumMethod, FastPathMode, Job, TableFormat, VariantName};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Price,
    Surface,
    Strategy,
    Converge,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Price => "price",
            Command::Surface => "surface",
            Command::Strategy => "strategy",
            Command::Converge => "converge",
        }
    }
}

/// Overrides from the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub fast_path: Option<FastPathMode>,
    pub format: Option<TableFormat>,
}

#[derive(Debug)]
pub enum RunError {
    Config(ConfigErrors),
    Engine(HedgeError),
    /// The convergence table was written but the error does not decrease.
    NotMonotone,
    Io(std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Engine(HedgeError::Argument(_)) => 2,
            RunError::Engine(HedgeError::Precondition { .. }) => 4,
            RunError::Engine(_) | RunError::NotMonotone => 3,
            RunError::Io(_) => 1,
        }
    }

    /// What the user can change to get past the error.
    pub fn hint(&self) -> Option<String> {
        let e = match self {
            RunError::Engine(e) => e,
            RunError::NotMonotone => return Some("try larger step counts in convergence.steps".into()),
            _ => return None,
        };
        Some(match e {
            HedgeError::Precondition { max_admissible: Some(b), .. } => format!("lower cost.beta below {b:.6e}"),
            HedgeError::Precondition { .. } => "the model violates a theorem gate; adjust the factors".into(),
            HedgeError::Degenerate(_) => {
                "set model.geometry = \"extended\" to use lower-dimensional extreme measures".into()
            }
            HedgeError::UnboundedBelow(_) => "every step needs d_j < ρ < u_j for all assets".into(),
            HedgeError::Resource(_) => "raise budget.tree_budget or reduce model.steps".into(),
            HedgeError::Convergence(_) => "shorten the step or refine the grid".into(),
            HedgeError::Numeric(_) => "check that the payoff is finite on the reachable box".into(),
            _ => return None,
        })
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Engine(e) => write!(f, "{e}"),
            RunError::NotMonotone => write!(f, "the discrete error does not decrease monotonically"),
            RunError::Io(e) => write!(f, "i/o: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<HedgeError> for RunError {
    fn from(e: HedgeError) -> Self {
        RunError::Engine(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

fn config_error(field: &str, msg: &str) -> RunError {
    RunError::Config(ConfigErrors(vec![format!("{field}: {msg}")]))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(usize),
    Num(f64),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Num(x) => write!(f, "{x}"),
            Cell::Text(s) => write!(f, "{s}"),
        }
    }
}

impl Serialize for Cell {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Cell::Int(i) => s.serialize_u64(*i as u64),
            Cell::Num(x) => s.serialize_f64(*x),
            Cell::Text(t) => s.serialize_str(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, RunError> {
        let mut w = csv::WriterBuilder::new().delimiter(b',').terminator(csv::Terminator::Any(b'\n')).from_writer(vec![]);
        let io = |e: csv::Error| RunError::Io(std::io::Error::other(e));
        w.write_record(&self.columns).map_err(io)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|c| c.to_string())).map_err(io)?;
        }
        w.into_inner().map_err(|e| RunError::Io(std::io::Error::other(e.to_string())))
    }

    fn write(&self, dir: &Path, stem: &str, format: TableFormat) -> Result<PathBuf, RunError> {
        let (path, bytes) = match format {
            TableFormat::Csv => (dir.join(format!("{stem}.csv")), self.to_csv()?),
            TableFormat::Json => {
                let mut b = serde_json::to_vec_pretty(self).map_err(|e| RunError::Io(e.into()))?;
                b.push(b'\n');
                (dir.join(format!("{stem}.json")), b)
            }
        };
        fs::write(&path, bytes)?;
        Ok(path)
    }
}

fn per_asset(prefix: &str, j: usize) -> impl Iterator<Item = String> + '_ {
    (1..=j).map(move |i| format!("{prefix}{i}"))
}

/// Prices of one job at one initial point.
#[derive(Debug, Clone)]
pub struct Priced {
    pub price: f64,
    /// Set for the interval variant, where `price` is the upper price.
    pub lower: Option<f64>,
    pub engine: &'static str,
    pub results: Vec<(Sense, HedgeResult)>,
}

fn options(job: &Job, store_tables: bool) -> PricingOptions {
    PricingOptions {
        mode: job.config.model.geometry.mode(),
        store_tables,
        tree_budget: job.config.budget.tree_budget,
        initial_holding: job.config.cost.as_ref().and_then(|c| c.initial_holding.clone()),
    }
}

/// Whether the closed forms price this job; `Ok(Some(p))` when they do.
fn try_fast(job: &Job, z: &[f64], mode: FastPathMode, warnings: &mut Vec<String>) -> Result<Option<f64>, RunError> {
    if mode == FastPathMode::Off {
        return Ok(None);
    }
    let refuse = |why: String, warnings: &mut Vec<String>| -> Result<Option<f64>, RunError> {
        if mode == FastPathMode::On {
            return Err(HedgeError::Precondition { msg: format!("fast path requested but {why}"), max_admissible: None }
                .into());
        }
        warnings.push(format!("sub-modular fast path disabled: {why}"));
        Ok(None)
    };
    let m = job.market.as_ref().expect("lattice variants have a market");
    if job.config.variant != VariantName::European {
        if mode == FastPathMode::On {
            return refuse("closed forms only cover the european variant".into(), warnings);
        }
        return Ok(None);
    }
    if !(2..=3).contains(&job.assets) {
        if mode == FastPathMode::On {
            return refuse(format!("no closed form for J = {}", job.assets), warnings);
        }
        return Ok(None);
    }
    if job.payoff.submodular != Some(true) || job.payoff.convex != Some(true) {
        return refuse(format!("the {} payoff is not flagged convex and sub-modular", job.payoff.kind.name()), warnings);
    }
    let f = job.payoff.function();
    match fast_price(f.as_ref(), z, m)? {
        FastPath::Price(p) => Ok(Some(p)),
        FastPath::NotApplicable(why) => refuse(why, warnings),
    }
}

fn continuum_price(job: &Job, z: &[f64]) -> Result<f64, RunError> {
    let spec = job.continuum.as_ref().expect("validated");
    let cc = job.config.continuum.as_ref().expect("validated");
    let f = job.payoff.function();
    let t = cc.t;
    Ok(match cc.method {
        ContinuumMethod::Upper | ContinuumMethod::Lower | ContinuumMethod::Complete if job.assets == 1 => {
            lognormal_price(f.as_ref(), z[0], t, spec)?
        }
        ContinuumMethod::Upper | ContinuumMethod::Lower | ContinuumMethod::Complete => {
            let which = match cc.method {
                ContinuumMethod::Upper => Kernel::Upper,
                ContinuumMethod::Lower => Kernel::Lower,
                _ => Kernel::Complete,
            };
            green_price(&GreenFunctionQuery { which, t, z: z.to_vec(), payoff: f.clone() }, spec)?
        }
        ContinuumMethod::FirstOrder => first_order_price(f.as_ref(), z, t, spec)?,
        ContinuumMethod::PdeUpper | ContinuumMethod::PdeLower => {
            let s = (spec.maturity - t).max(0.0);
            // Five standard deviations of log price on either side.
            let lo: Vec<f64> = z.iter().zip(&spec.sigma).map(|(x, sg)| x * (-5.0 * sg * s.sqrt()).exp()).collect();
            let hi: Vec<f64> = z.iter().zip(&spec.sigma).map(|(x, sg)| x * (5.0 * sg * s.sqrt()).exp()).collect();
            let grid = PdeGrid::new(f.as_ref(), &lo, &hi, cc.pde_nodes)?;
            let sense = if cc.method == ContinuumMethod::PdeUpper { Sense::Upper } else { Sense::Lower };
            solve_pde(grid, spec, t, sense)?.interpolate(z)?
        }
    })
}

/// Prices the job's variant at `z`.
pub fn price_at(
    job: &Job,
    z: &[f64],
    store_tables: bool,
    fast: FastPathMode,
    warnings: &mut Vec<String>,
) -> Result<Priced, RunError> {
    let variant = job.config.variant;
    if variant == VariantName::Continuum {
        return Ok(Priced { price: continuum_price(job, z)?, lower: None, engine: "continuum", results: vec![] });
    }
    if variant == VariantName::Convergence {
        return Err(config_error("variant", "convergence jobs are run by the converge command"));
    }
    if let Some(p) = try_fast(job, z, fast, warnings)? {
        return Ok(Priced { price: p, lower: None, engine: "closed-form", results: vec![] });
    }
    let m = job.market.as_ref().expect("lattice variants have a market");
    let p = &job.payoff;
    let opts = options(job, store_tables);
    let (sense, h) = match variant {
        VariantName::European => (Sense::Upper, price_european_with(p, z, m, &opts)?),
        VariantName::American => (Sense::Upper, price_american_with(p, z, m, &opts)?),
        VariantName::Lower => (Sense::Lower, price_lower_with(p, z, m, &opts)?),
        VariantName::Interval => {
            let up = price_european_with(p, z, m, &opts)?;
            let low = price_lower_with(p, z, m, &opts)?;
            for h in [&up, &low] {
                warnings.extend(h.metadata.warnings.iter().cloned());
            }
            return Ok(Priced {
                price: up.price,
                lower: Some(low.price),
                engine: "general",
                results: vec![(Sense::Upper, up), (Sense::Lower, low)],
            });
        }
        VariantName::PathDependent => {
            let pp = job.path_payoff.as_ref().expect("validated");
            (Sense::Upper, price_path_dependent_with(pp, z, m, &opts)?)
        }
        VariantName::Costed => {
            let c = job.cost.as_ref().expect("validated");
            (Sense::Upper, price_with_costs_with(p, z, m, c, &opts)?)
        }
        VariantName::NonlinearJumps => (Sense::Upper, price_nonlinear_jumps_with(p, z, m, &opts)?),
        VariantName::Continuum | VariantName::Convergence => unreachable!(),
    };
    warnings.extend(h.metadata.warnings.iter().cloned());
    Ok(Priced { price: h.price, lower: None, engine: "general", results: vec![(sense, h)] })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gates {
    pub kappa1: f64,
    pub kappa2: f64,
    /// Largest admissible proportional cost constant.
    pub beta_bound: f64,
}

/// Spread characteristics of the centred vertex vectors and the cost gate,
/// for homogeneous vertex markets.
pub fn gates(job: &Job) -> Option<Gates> {
    let m = job.market.as_ref()?;
    if m.schedule.is_some() || m.jump_maps.is_some() {
        return None;
    }
    let centered: Vec<Vec<f64>> = vertex_factors(&m.down, &m.up)
        .into_iter()
        .map(|xi| xi.into_iter().map(|x| x - m.rho).collect())
        .collect();
    let sp = spread_characteristics(&centered).ok()?;
    let beta_bound = cost_gate(m, &job.z0).ok()?;
    Some(Gates { kappa1: sp.kappa1, kappa2: sp.kappa2, beta_bound })
}

fn measure_stats(h: &HedgeResult) -> Value {
    let usage: Vec<Value> =
        h.metadata.active_usage.iter().map(|(s, n)| json!({ "support": s, "nodes": n })).collect();
    json!({
        "geometry_mode": format!("{:?}", h.metadata.geometry_mode).to_lowercase(),
        "node_count": h.metadata.node_count,
        "distinct_active_measures": usage.len(),
        "active_measures": usage,
    })
}

fn sense_name(s: Sense) -> &'static str {
    match s {
        Sense::Upper => "upper",
        Sense::Lower => "lower",
    }
}

/// Node, price, value and hedge of every stored node.
pub fn strategy_table(results: &[(Sense, HedgeResult)], j: usize) -> Result<Table, RunError> {
    let american = results.iter().any(|(_, h)| h.layers.iter().any(|l| l.exercise.is_some()));
    let mut cols: Vec<String> = vec!["sense".into(), "step".into(), "node".into()];
    cols.extend(per_asset("z", j));
    cols.push("value".into());
    cols.extend(per_asset("gamma", j));
    cols.push("support".into());
    cols.push("weights".into());
    if american {
        cols.push("exercise".into());
    }
    let mut t = Table::new(cols);
    for (sense, h) in results {
        if h.layers.is_empty() && h.steps > 0 {
            return Err(HedgeError::Resource(format!(
                "strategy tables were not stored ({} nodes exceed the storage limit)",
                h.metadata.node_count
            ))
            .into());
        }
        for (step, l) in h.layers.iter().enumerate() {
            for node in 0..l.len() {
                let mut row = vec![Cell::Text(sense_name(*sense).into()), Cell::Int(step), Cell::Int(node)];
                row.extend(l.price(node).iter().map(|x| Cell::Num(*x)));
                row.push(Cell::Num(l.values[node]));
                row.extend(l.gamma(node).iter().map(|x| Cell::Num(*x)));
                let a = l.active_measure(node);
                let join = |v: Vec<String>| v.join(";");
                row.push(Cell::Text(join(a.indices.iter().map(|i| i.to_string()).collect())));
                row.push(Cell::Text(join(a.weights.iter().map(|w| w.to_string()).collect())));
                if american {
                    let ex = l.exercise.as_ref().is_some_and(|e| e[node]);
                    row.push(Cell::Text(ex.to_string()));
                }
                t.rows.push(row);
            }
        }
    }
    Ok(t)
}

/// Product grid over the configured box, first asset varying slowest.
pub fn surface_points(lo: &[f64], hi: &[f64], points: usize) -> Vec<Vec<f64>> {
    let axis = |j: usize| -> Vec<f64> {
        if points == 1 {
            return vec![lo[j]];
        }
        (0..points).map(|i| lo[j] + (hi[j] - lo[j]) * i as f64 / (points - 1) as f64).collect()
    };
    let axes: Vec<Vec<f64>> = (0..lo.len()).map(axis).collect();
    let mut out = vec![vec![]];
    for a in &axes {
        out = out.into_iter().flat_map(|p: Vec<f64>| a.iter().map(move |x| [p.clone(), vec![*x]].concat())).collect();
    }
    out
}

pub fn surface_table(job: &Job, fast: FastPathMode, warnings: &mut Vec<String>) -> Result<Table, RunError> {
    let s = job
        .config
        .output
        .surface
        .as_ref()
        .ok_or_else(|| config_error("output.surface", "required by the surface command"))?;
    let interval = job.config.variant == VariantName::Interval;
    let mut cols: Vec<String> = per_asset("z", job.assets).collect();
    if interval {
        cols.extend(["upper".into(), "lower".into(), "intrinsic_risk".into()]);
    } else {
        cols.push("price".into());
    }
    let pts = surface_points(&s.lo, &s.hi, s.points);
    let rows: Vec<(Vec<Cell>, Vec<String>)> = pts
        .par_iter()
        .map(|z| -> Result<_, RunError> {
            let mut w = Vec::new();
            let p = price_at(job, z, false, fast, &mut w)
                .map_err(|e| match e {
                    RunError::Engine(h) => RunError::Engine(h.context(format!("surface point z = {z:?}"))),
                    e => e,
                })?;
            let mut row: Vec<Cell> = z.iter().map(|x| Cell::Num(*x)).collect();
            row.push(Cell::Num(p.price));
            if let Some(l) = p.lower {
                row.push(Cell::Num(l));
                row.push(Cell::Num(p.price - l));
            }
            Ok((row, w))
        })
        .collect::<Result<_, _>>()?;
    let mut seen = BTreeSet::new();
    let mut t = Table::new(cols);
    for (row, w) in rows {
        for x in w {
            if seen.insert(x.clone()) {
                warnings.push(x);
            }
        }
        t.rows.push(row);
    }
    Ok(t)
}

pub fn convergence_table(r: &ConvergenceReport) -> Table {
    let mut t = Table::new(["steps", "tau", "discrete", "continuum", "error"].map(String::from).to_vec());
    for row in &r.rows {
        t.rows.push(vec![
            Cell::Int(row.steps),
            Cell::Num(row.tau),
            Cell::Num(row.discrete),
            Cell::Num(row.continuum),
            Cell::Num(row.error),
        ]);
    }
    t
}

/// What a command produced.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub summary: PathBuf,
    pub tables: Vec<PathBuf>,
    pub summary_value: Value,
}

fn dedup(w: Vec<String>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    w.into_iter().filter(|x| seen.insert(x.clone())).collect()
}

/// Runs `cmd` on a validated job, writing into the output directory.
pub fn run_job(job: &Job, cmd: Command, opts: &RunOptions) -> Result<Artifacts, RunError> {
    let start = Instant::now();
    let out = opts
        .out
        .clone()
        .or_else(|| job.config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let format = opts.format.or(job.config.output.format).unwrap_or_default();
    let fast = opts.fast_path.unwrap_or(job.config.fast_path);
    fs::create_dir_all(&out)?;

    let mut warnings = job.warnings.clone();
    let mut tables = Vec::new();
    let mut result = serde_json::Map::new();
    let converge = cmd == Command::Converge || (cmd == Command::Price && job.config.variant == VariantName::Convergence);
    let mut not_monotone = false;

    if converge {
        let (spec, cv) = match (&job.continuum, &job.config.convergence) {
            (Some(s), Some(c)) => (s, c),
            (None, _) => return Err(config_error("continuum", "required by the converge command")),
            (_, None) => return Err(config_error("convergence", "required by the converge command")),
        };
        let report = convergence_harness(&job.payoff, &job.z0, spec, &cv.steps)?;
        tables.push(convergence_table(&report).write(&out, "convergence", format)?);
        result.insert("orders".into(), json!(report.orders));
        result.insert("monotone".into(), json!(report.monotone));
        result.insert("continuum_price".into(), json!(report.rows.first().map(|r| r.continuum)));
        not_monotone = !report.monotone;
    } else {
        if cmd == Command::Strategy && matches!(job.config.variant, VariantName::Continuum | VariantName::Convergence) {
            return Err(config_error("variant", "the strategy command needs a lattice variant"));
        }
        let tables_wanted = cmd == Command::Strategy || (cmd == Command::Price && job.config.output.strategy);
        // Strategy tables come from the general engine.
        let fast_here = if tables_wanted { FastPathMode::Off } else { fast };
        if tables_wanted && fast == FastPathMode::On {
            warnings.push("fast path ignored: strategy tables come from the general engine".into());
        }
        // Tables are kept at z0 for the active-measure statistics.
        let priced = price_at(job, &job.z0, true, fast_here, &mut warnings)?;
        result.insert("engine".into(), json!(priced.engine));
        match priced.lower {
            Some(l) => {
                result.insert("upper".into(), json!(priced.price));
                result.insert("lower".into(), json!(l));
                result.insert("intrinsic_risk".into(), json!(priced.price - l));
            }
            None => {
                result.insert("price".into(), json!(priced.price));
            }
        }
        let stats: serde_json::Map<String, Value> =
            priced.results.iter().map(|(s, h)| (sense_name(*s).to_string(), measure_stats(h))).collect();
        if !stats.is_empty() {
            result.insert("active_measure_statistics".into(), Value::Object(stats));
        }
        if tables_wanted {
            tables.push(strategy_table(&priced.results, job.assets)?.write(&out, "strategy", format)?);
        }
        if cmd == Command::Surface || (cmd == Command::Price && job.config.output.surface.is_some()) {
            tables.push(surface_table(job, fast, &mut warnings)?.write(&out, "surface", format)?);
        }
    }

    let config = serde_json::to_value(&job.config).map_err(|e| RunError::Io(e.into()))?;
    let summary = json!({
        "command": cmd.name(),
        "variant": config["variant"],
        "z0": job.z0,
        "result": Value::Object(result),
        "gates": gates(job),
        "warnings": dedup(warnings),
        "tables": tables.iter().map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned())).collect::<Vec<_>>(),
        "timing": { "elapsed_secs": start.elapsed().as_secs_f64() },
        "config": config,
        "config_source": job.source,
    });
    let path = out.join("summary.json");
    let mut bytes = serde_json::to_vec_pretty(&summary).map_err(|e| RunError::Io(e.into()))?;
    bytes.push(b'\n');
    fs::write(&path, bytes)?;
    if not_monotone {
        return Err(RunError::NotMonotone);
    }
    Ok(Artifacts { summary: path, tables, summary_value: summary })
}
