//! Backward induction over the full (non-recombining) tree.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use super::step::StepGeometry;
use super::{JumpMap, Layer, MarketSpec, PathPayoff, PricingOptions, MAX_STORED_TREE_NODES};
use crate::error::{HedgeError, Result};
use crate::minmax::{Candidate, GeometryMode, Sense};

pub(crate) enum Model {
    /// Vertex outcomes, one geometry per step (or a single shared one).
    Vertex(Vec<StepGeometry>),
    /// Outcomes `g_i(z)`, geometry rebuilt at every node.
    Jumps { maps: Vec<JumpMap>, mode: Option<GeometryMode> },
}

pub(crate) struct Run {
    pub price: f64,
    pub layers: Vec<Layer>,
    pub nodes: usize,
    pub warnings: Vec<String>,
    pub mode: GeometryMode,
}

struct Ctx<'a> {
    m: &'a MarketSpec,
    model: &'a Model,
    payoff: &'a PathPayoff,
    sense: Sense,
    american: bool,
    branching: usize,
    extended_nodes: AtomicUsize,
}

fn branches(idx: usize, b: usize, depth: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(depth);
    let mut x = idx;
    for _ in 0..depth {
        out.push(x % b);
        x /= b;
    }
    out
}

impl Ctx<'_> {
    fn children(&self, step: usize, z: &[f64], idx: usize) -> Result<(Vec<Vec<f64>>, Option<StepGeometry>)> {
        match self.model {
            Model::Vertex(geos) => {
                let g = &geos[step.min(geos.len() - 1)];
                let kids = g.factors.iter().map(|xi| xi.iter().zip(z).map(|(a, b)| a * b).collect()).collect();
                Ok((kids, None))
            }
            Model::Jumps { maps, mode } => {
                let kids: Vec<Vec<f64>> = maps.iter().map(|g| g(z)).collect();
                let where_ = || format!("step {step}, branches {:?}, z = {z:?}", branches(idx, self.branching, step));
                if kids.iter().any(|k| k.len() != z.len() || k.iter().any(|x| !(x.is_finite() && *x > 0.0))) {
                    return Err(HedgeError::Argument(format!("jump map left the positive orthant at {}", where_())));
                }
                let centered = kids
                    .iter()
                    .map(|k| k.iter().zip(z).map(|(a, b)| a - self.m.rho * b).collect())
                    .collect();
                let (geo, warn) = StepGeometry::from_vectors(kids.clone(), centered, *mode).map_err(|e| match e {
                    HedgeError::UnboundedBelow(msg) => {
                        HedgeError::Infeasible(format!("no risk-neutral law at {}: {msg}", where_()))
                    }
                    other => other.context(where_()),
                })?;
                if warn.is_some() {
                    self.extended_nodes.fetch_add(1, Ordering::Relaxed);
                }
                Ok((kids, Some(geo)))
            }
        }
    }

    fn node(&self, step: usize, path: &mut Vec<Vec<f64>>, idx: usize, tables: &mut Option<Vec<Layer>>) -> Result<f64> {
        if step == self.m.steps {
            return Ok((self.payoff)(path));
        }
        let z = path.last().expect("path starts at z0").clone();
        let (kids, own) = self.children(step, &z, idx)?;
        let stride = self.branching.pow(step as u32);
        let vals: Vec<f64> = if step == 0 && tables.is_none() {
            kids.par_iter()
                .enumerate()
                .map(|(i, k)| {
                    let mut p = path.clone();
                    p.push(k.clone());
                    self.node(step + 1, &mut p, idx + i * stride, &mut None)
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            let mut out = Vec::with_capacity(kids.len());
            for (i, k) in kids.into_iter().enumerate() {
                path.push(k);
                out.push(self.node(step + 1, path, idx + i * stride, tables)?);
                path.pop();
            }
            out
        };
        let (geo, scale) = match (&own, self.model) {
            (Some(g), _) => (g, None),
            (None, Model::Vertex(geos)) => (&geos[step.min(geos.len() - 1)], Some(z.as_slice())),
            (None, Model::Jumps { .. }) => unreachable!("jump nodes build their own geometry"),
        };
        let (bv, pos, gamma) = geo.solve(&vals, scale, self.sense).map_err(|e| {
            e.context(format!("step {step}, branches {:?}", branches(idx, self.branching, step)))
        })?;
        let cont = bv / self.m.rho;
        let (value, exercised) = if self.american {
            let e = (self.payoff)(path);
            (e.max(cont), e > cont + 1e-12 * (1.0 + e.abs()))
        } else {
            (cont, false)
        };
        if let Some(layers) = tables {
            let l = &mut layers[step];
            let j = z.len();
            l.prices[idx * j..(idx + 1) * j].copy_from_slice(&z);
            l.gammas[idx * j..(idx + 1) * j].copy_from_slice(&gamma);
            l.values[idx] = value;
            match own {
                Some(g) => {
                    l.measures[idx] = g.candidate(pos).clone();
                    l.active[idx] = idx as u32;
                }
                None => l.active[idx] = pos as u32,
            }
            if let Some(ex) = &mut l.exercise {
                ex[idx] = exercised;
            }
        }
        Ok(value)
    }
}

pub(crate) fn run(
    m: &MarketSpec,
    z0: &[f64],
    model: &Model,
    payoff: &PathPayoff,
    sense: Sense,
    american: bool,
    opts: &PricingOptions,
) -> Result<Run> {
    let branching = match model {
        Model::Vertex(_) => 1usize << m.assets(),
        Model::Jumps { maps, .. } => maps.len(),
    };
    let n = m.steps;
    let log_leaves = n as f64 * (branching as f64).log2();
    if log_leaves > opts.tree_budget as f64 + 1e-9 {
        return Err(HedgeError::Resource(format!(
            "path tree has {branching}^{n} leaves, above the budget of 2^{}; reduce the number of steps",
            opts.tree_budget
        )));
    }
    let sizes: Vec<usize> = (0..n).map(|s| branching.pow(s as u32)).collect();
    let internal: usize = sizes.iter().sum();
    let leaves = branching.pow(n as u32);
    let j = m.assets();
    let mut tables = (opts.store_tables && internal <= MAX_STORED_TREE_NODES).then(|| {
        sizes
            .iter()
            .enumerate()
            .map(|(s, &size)| {
                let measures = match model {
                    Model::Vertex(geos) => geos[s.min(geos.len() - 1)].extreme.candidates.clone(),
                    Model::Jumps { .. } => vec![Candidate { indices: Vec::new(), weights: Vec::new() }; size],
                };
                Layer {
                    prices: vec![0.0; size * j],
                    values: vec![0.0; size],
                    gammas: vec![0.0; size * j],
                    active: vec![0; size],
                    measures,
                    exercise: american.then(|| vec![false; size]),
                    cost_options: None,
                }
            })
            .collect::<Vec<_>>()
    });
    let ctx = Ctx { m, model, payoff, sense, american, branching, extended_nodes: AtomicUsize::new(0) };
    let mut path = vec![z0.to_vec()];
    let price = ctx.node(0, &mut path, 0, &mut tables)?;
    let ext = ctx.extended_nodes.load(Ordering::Relaxed);
    let (mode, warnings) = match model {
        Model::Vertex(geos) => (geos[0].mode(), Vec::new()),
        Model::Jumps { mode: Some(md), .. } => (*md, Vec::new()),
        Model::Jumps { mode: None, .. } if ext > 0 => (
            GeometryMode::Extended,
            vec![format!("{ext} nodes had dependent jump increments; used lower-dimensional extreme measures")],
        ),
        Model::Jumps { .. } => (GeometryMode::Strict, Vec::new()),
    };
    Ok(Run { price, layers: tables.unwrap_or_default(), nodes: internal + leaves, warnings, mode })
}
