//! Backward induction on the recombining product lattice.

use rayon::prelude::*;

use super::step::StepGeometry;
use super::{Layer, MarketSpec};
use crate::error::Result;
use crate::minmax::Sense;

pub(crate) struct Run {
    pub price: f64,
    pub layers: Vec<Layer>,
    pub nodes: usize,
}

pub(crate) fn layer_size(step: usize, j: usize) -> usize {
    (step + 1).pow(j as u32)
}

/// Up-count vector of node `idx` at a step with `radix = step + 1`.
pub(crate) fn decode(mut idx: usize, radix: usize, j: usize) -> Vec<usize> {
    (0..j)
        .map(|_| {
            let k = idx % radix;
            idx /= radix;
            k
        })
        .collect()
}

pub(crate) fn encode(k: &[usize], radix: usize) -> usize {
    k.iter().rev().fold(0, |acc, &x| acc * radix + x)
}

/// Index of the child reached through vertex `mask` at the next step.
pub(crate) fn child(k: &[usize], mask: usize, next_radix: usize) -> usize {
    k.iter()
        .enumerate()
        .rev()
        .fold(0, |acc, (a, &x)| acc * next_radix + x + (mask >> a & 1))
}

pub(crate) fn node_price(z0: &[f64], down: &[f64], up: &[f64], k: &[usize], step: usize) -> Vec<f64> {
    (0..z0.len())
        .map(|a| z0[a] * up[a].powi(k[a] as i32) * down[a].powi((step - k[a]) as i32))
        .collect()
}

struct NodeOut {
    value: f64,
    pos: u32,
    gamma: Vec<f64>,
    exercised: bool,
    z: Vec<f64>,
}

pub(crate) fn run(
    m: &MarketSpec,
    z0: &[f64],
    geo: &StepGeometry,
    f: &(dyn Fn(&[f64]) -> f64 + Send + Sync),
    sense: Sense,
    american: bool,
    store: bool,
) -> Result<Run> {
    let j = m.assets();
    let n = m.steps;
    let b = 1usize << j;
    let (down, up) = (&m.down, &m.up);
    let mut nodes = layer_size(n, j);
    let mut next: Vec<f64> = (0..layer_size(n, j))
        .into_par_iter()
        .map(|idx| f(&node_price(z0, down, up, &decode(idx, n + 1, j), n)))
        .collect();
    let mut layers = Vec::new();
    for step in (0..n).rev() {
        let radix = step + 1;
        let outs = (0..layer_size(step, j))
            .into_par_iter()
            .map(|idx| {
                let k = decode(idx, radix, j);
                let z = node_price(z0, down, up, &k, step);
                let vals: Vec<f64> = (0..b).map(|mask| next[child(&k, mask, radix + 1)]).collect();
                let (bv, pos, gamma) = geo
                    .solve(&vals, Some(&z), sense)
                    .map_err(|e| e.context(format!("step {step}, up-counts {k:?}")))?;
                let cont = bv / m.rho;
                let (value, exercised) = if american {
                    let e = f(&z);
                    (e.max(cont), e > cont + 1e-12 * (1.0 + e.abs()))
                } else {
                    (cont, false)
                };
                Ok(NodeOut { value, pos: pos as u32, gamma, exercised, z })
            })
            .collect::<Result<Vec<_>>>()?;
        nodes += outs.len();
        next = outs.iter().map(|o| o.value).collect();
        if store {
            layers.push(Layer {
                prices: outs.iter().flat_map(|o| o.z.iter().copied()).collect(),
                values: next.clone(),
                gammas: outs.iter().flat_map(|o| o.gamma.iter().copied()).collect(),
                active: outs.iter().map(|o| o.pos).collect(),
                measures: geo.extreme.candidates.clone(),
                exercise: american.then(|| outs.iter().map(|o| o.exercised).collect()),
                cost_options: None,
            });
        }
    }
    layers.reverse();
    Ok(Run { price: next[0], layers, nodes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        for idx in 0..64 {
            let k = decode(idx, 4, 3);
            assert_eq!(encode(&k, 4), idx);
        }
        let k = vec![1, 2];
        assert_eq!(decode(child(&k, 0b01, 4), 4, 2), vec![2, 2]);
        assert_eq!(decode(child(&k, 0b10, 4), 4, 2), vec![1, 3]);
    }
}
