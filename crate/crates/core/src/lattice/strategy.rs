//! Strategy lookup along a realised path and capital replay.

use super::costs::value_at;
use super::recombining::encode;
use super::step::vertex_factors;
use super::{HedgeResult, Layout, MarketSpec};
use crate::error::{arg, Result};

/// Hedge vectors along `path`, given as outcome indices per step (vertex
/// masks for vertex markets, map indices for jump markets). Costed results
/// track the previous holding, starting from the initial one.
pub fn extract_strategy(h: &HedgeResult, path: &[usize]) -> Result<Vec<Vec<f64>>> {
    if path.len() > h.steps {
        return arg(format!("path has {} steps, the result only {}", path.len(), h.steps));
    }
    if path.is_empty() {
        return Ok(Vec::new());
    }
    if h.layers.len() != h.steps {
        return arg("strategy tables were not stored for this result");
    }
    let j = h.assets;
    let mut out = Vec::with_capacity(path.len());
    let mut k = vec![0usize; j];
    let mut idx = 0usize;
    let mut v = h.initial_holding.clone();
    for (step, &i) in path.iter().enumerate() {
        let layer = &h.layers[step];
        let node = match h.layout {
            Layout::Lattice => {
                if i >= 1 << j {
                    return arg(format!("unknown vertex {i} at step {step}"));
                }
                encode(&k, step + 1)
            }
            Layout::Tree { branching } => {
                if i >= branching {
                    return arg(format!("unknown branch {i} at step {step}"));
                }
                idx
            }
        };
        let gamma = match (&h.cost, &layer.cost_options) {
            (Some(c), Some(opts)) => {
                let (pos, _) = value_at(&opts[node], c, layer.price(node), &v, h.rho);
                opts[node][pos].gamma.clone()
            }
            _ => layer.gamma(node).to_vec(),
        };
        v = gamma.clone();
        out.push(gamma);
        match h.layout {
            Layout::Lattice => {
                for (a, ka) in k.iter_mut().enumerate() {
                    *ka += i >> a & 1;
                }
            }
            Layout::Tree { branching } => idx += i * branching.pow(step as u32),
        }
    }
    Ok(out)
}

/// Prices, capital and hedges along one path.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub prices: Vec<Vec<f64>>,
    pub capital: Vec<f64>,
    pub gammas: Vec<Vec<f64>>,
}

/// Replays the capital recursion
/// `X_{m+1} = rho X_m + (gamma, s xi S_m - rho S_m) - g(gamma - v, S_m)`
/// from `X_0 = price` along `path` (`s` is the fixed-cost multiplier, one
/// without fixed costs; `g` is zero without proportional costs).
pub fn replay(h: &HedgeResult, m: &MarketSpec, path: &[usize]) -> Result<Replay> {
    let gammas = extract_strategy(h, path)?;
    let scale = h.fixed_cost.unwrap_or(1.0);
    let mut z = h.z0.clone();
    let mut x = h.price;
    let mut v = h.initial_holding.clone();
    let mut prices = vec![z.clone()];
    let mut capital = vec![x];
    for (step, (&i, gamma)) in path.iter().zip(&gammas).enumerate() {
        let next: Vec<f64> = match &m.jump_maps {
            Some(maps) => maps[i](&z),
            None => {
                let (d, u) = m.factors_at(step);
                vertex_factors(d, u)[i].iter().zip(&z).map(|(a, b)| a * b).collect()
            }
        };
        let incr: f64 = (0..z.len()).map(|a| gamma[a] * (scale * next[a] - m.rho * z[a])).sum();
        let cost = match &h.cost {
            Some(c) => {
                let dg: Vec<f64> = gamma.iter().zip(&v).map(|(a, b)| a - b).collect();
                c.eval(&dg, &z)
            }
            None => 0.0,
        };
        x = m.rho * x + incr - cost;
        v = gamma.clone();
        z = next;
        prices.push(z.clone());
        capital.push(x);
    }
    Ok(Replay { prices, capital, gammas })
}
