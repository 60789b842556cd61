//! Costed recursion on the extended state `(z, v)`, `v` the hedge held
//! before trading at `z`:
//!
//! ```text
//! W_m(z, v) = rho^-1 max_Omega [ A_Omega + g(gamma_Omega - v, z) ]
//! A_Omega   = sum_i p_i W_{m+1}(xi_i z, gamma_Omega)
//! ```
//!
//! The cost term is the same on every outcome, so `gamma_Omega` solves a
//! fixed point that does not involve `v`; each node therefore stores only
//! the pairs `(A_Omega, gamma_Omega)`.

use rayon::prelude::*;

use super::recombining::{child, decode, layer_size, node_price};
use super::step::StepGeometry;
use super::{CostModel, CostOption, Layer, MarketSpec};
use crate::error::Result;
use crate::minmax::{self, Sense};

pub(crate) struct Run {
    pub price: f64,
    pub layers: Vec<Layer>,
    pub nodes: usize,
}

/// `W(z, v)` from a node's options.
pub(crate) fn value_at(options: &[CostOption], c: &CostModel, z: &[f64], v: &[f64], rho: f64) -> (usize, f64) {
    let obj: Vec<f64> = options
        .iter()
        .map(|o| {
            let dg: Vec<f64> = o.gamma.iter().zip(v).map(|(a, b)| a - b).collect();
            o.expected + c.eval(&dg, z)
        })
        .collect();
    let (pos, best) = minmax::select(&obj, Sense::Upper);
    (pos, best / rho)
}

pub(crate) fn run(
    m: &MarketSpec,
    z0: &[f64],
    geo: &StepGeometry,
    f: &(dyn Fn(&[f64]) -> f64 + Send + Sync),
    c: &CostModel,
    v0: &[f64],
) -> Result<Run> {
    let j = m.assets();
    let n = m.steps;
    let b = 1usize << j;
    let rho = m.rho;
    let (down, up) = (&m.down, &m.up);
    if n == 0 {
        return Ok(Run { price: f(z0), layers: Vec::new(), nodes: 1 });
    }
    let terminal: Vec<f64> = (0..layer_size(n, j))
        .into_par_iter()
        .map(|idx| f(&node_price(z0, down, up, &decode(idx, n + 1, j), n)))
        .collect();
    let mut nodes = terminal.len();
    let mut layers: Vec<Layer> = Vec::with_capacity(n);
    for step in (0..n).rev() {
        let radix = step + 1;
        let next = layers.last();
        let outs = (0..layer_size(step, j))
            .into_par_iter()
            .map(|idx| {
                let k = decode(idx, radix, j);
                let z = node_price(z0, down, up, &k, step);
                let kids: Vec<usize> = (0..b).map(|mask| child(&k, mask, radix + 1)).collect();
                // W_{m+1}(child of outcome i, gamma).
                let w = |i: usize, gamma: &[f64]| -> f64 {
                    match next {
                        None => terminal[kids[i]],
                        Some(l) => {
                            let opts = &l.cost_options.as_ref().expect("costed layer")[kids[i]];
                            value_at(opts, c, l.price(kids[i]), gamma, rho).1
                        }
                    }
                };
                let free: Vec<f64> = (0..b)
                    .map(|i| match next {
                        None => terminal[kids[i]],
                        Some(l) => {
                            let opts = &l.cost_options.as_ref().expect("costed layer")[kids[i]];
                            opts.iter().map(|o| o.expected).fold(f64::NEG_INFINITY, f64::max) / rho
                        }
                    })
                    .collect();
                let mut options = Vec::with_capacity(geo.extreme.candidates.len());
                for (pos, cand) in geo.extreme.candidates.iter().enumerate() {
                    let start = geo.fixed_point(pos, &|i, _| free[i], vec![0.0; j])?;
                    let scaled = geo.fixed_point(
                        pos,
                        &|i, g: &[f64]| {
                            let gamma: Vec<f64> = g.iter().zip(&z).map(|(a, b)| a / b).collect();
                            w(i, &gamma)
                        },
                        start,
                    )?;
                    let gamma: Vec<f64> = scaled.iter().zip(&z).map(|(a, b)| a / b).collect();
                    let expected = cand.indices.iter().zip(&cand.weights).map(|(&i, &p)| p * w(i, &gamma)).sum();
                    options.push(CostOption { measure: pos as u32, expected, gamma });
                }
                Ok((z, options))
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e: crate::HedgeError| e.context(format!("costed step {step}")))?;
        nodes += outs.len();
        let zero = vec![0.0; j];
        let mut layer = Layer { measures: geo.extreme.candidates.clone(), ..Default::default() };
        for (z, options) in &outs {
            let v = if step == 0 { v0 } else { &zero };
            let (pos, value) = value_at(options, c, z, v, rho);
            layer.prices.extend_from_slice(z);
            layer.values.push(value);
            layer.gammas.extend_from_slice(&options[pos].gamma);
            layer.active.push(options[pos].measure);
        }
        layer.cost_options = Some(outs.into_iter().map(|(_, o)| o).collect());
        layers.push(layer);
    }
    layers.reverse();
    Ok(Run { price: layers[0].values[0], layers, nodes })
}
