//! Closed forms of the upper operator for convex sub-modular payoffs of
//! two and three assets.
//!
//! Vertex masks follow the lattice convention (bit `j` set: asset `j` up).
//! In the three-asset formulas `f_I` is the value at the vertex where
//! exactly the assets in `I` move down.

use rayon::prelude::*;

use crate::error::{arg, HedgeError, Result};
use crate::lattice::recombining::{child, decode, layer_size, node_price};
use crate::lattice::{bellman_step, vertex_factors, MarketSpec};

/// Sign band for boundary cases.
pub const BAND: f64 = 1e-12;
const AGREE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwoColorBranch {
    KappaNonneg,
    KappaNonpos,
    /// `|kappa| <= BAND`: both displays evaluated and compared.
    Boundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoColorCoefficients {
    /// `(rho - d_j) / (u_j - d_j)`, the up-probability of asset `j`.
    pub up: [f64; 2],
    /// `(u_j - rho) / (u_j - d_j)`.
    pub down: [f64; 2],
    pub kappa: f64,
    pub branch: TwoColorBranch,
}

fn need_assets(m: &MarketSpec, j: usize) -> Result<()> {
    if m.assets() != j {
        return arg(format!("closed form needs J = {j}, market has J = {}", m.assets()));
    }
    if m.schedule.is_some() || m.jump_maps.is_some() {
        return arg("closed forms need homogeneous vertex factors");
    }
    Ok(())
}

pub fn two_color_coefficients(m: &MarketSpec) -> Result<TwoColorCoefficients> {
    need_assets(m, 2)?;
    let up = [0, 1].map(|j| (m.rho - m.down[j]) / (m.up[j] - m.down[j]));
    let down = [0, 1].map(|j| (m.up[j] - m.rho) / (m.up[j] - m.down[j]));
    let kappa = 1.0 - up[0] - up[1];
    let branch = if kappa.abs() <= BAND {
        TwoColorBranch::Boundary
    } else if kappa > 0.0 {
        TwoColorBranch::KappaNonneg
    } else {
        TwoColorBranch::KappaNonpos
    };
    Ok(TwoColorCoefficients { up, down, kappa, branch })
}

/// Operator value and hedge from the four vertex values, `vals[mask]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoColorStep {
    pub value: f64,
    pub gamma: [f64; 2],
    pub branch: TwoColorBranch,
}

fn check_stochastic(w: &[f64], what: &str) -> Result<()> {
    let s: f64 = w.iter().sum();
    if w.iter().any(|&x| x < -BAND) || (s - 1.0).abs() > BAND {
        return Err(HedgeError::Numeric(format!("{what}: coefficients {w:?} are not a probability vector")));
    }
    Ok(())
}

/// `vals` indexed by vertex mask; `z` scales the hedge to share units.
fn two_color_values(c: &TwoColorCoefficients, m: &MarketSpec, vals: &[f64], z: &[f64]) -> Result<TwoColorStep> {
    // Masks: 0 = (d1,d2), 1 = (u1,d2), 2 = (d1,u2), 3 = (u1,u2).
    let s1 = z[0] * (m.up[0] - m.down[0]);
    let s2 = z[1] * (m.up[1] - m.down[1]);
    let nonneg = || -> Result<(f64, [f64; 2])> {
        let w = [c.up[0], c.up[1], c.kappa];
        check_stochastic(&w, "two-asset κ ≥ 0 display")?;
        let v = w[0] * vals[1] + w[1] * vals[2] + w[2] * vals[0];
        Ok((v, [(vals[1] - vals[0]) / s1, (vals[2] - vals[0]) / s2]))
    };
    let nonpos = || -> Result<(f64, [f64; 2])> {
        let w = [c.down[0], c.down[1], -c.kappa];
        check_stochastic(&w, "two-asset κ ≤ 0 display")?;
        let v = w[0] * vals[2] + w[1] * vals[1] + w[2] * vals[3];
        Ok((v, [(vals[3] - vals[2]) / s1, (vals[3] - vals[1]) / s2]))
    };
    let (value, gamma) = match c.branch {
        TwoColorBranch::KappaNonneg => nonneg()?,
        TwoColorBranch::KappaNonpos => nonpos()?,
        TwoColorBranch::Boundary => {
            let a = nonneg()?;
            let b = nonpos()?;
            let scale = 1.0 + a.0.abs().max(b.0.abs());
            if (a.0 - b.0).abs() > 1e-12 * scale {
                return Err(HedgeError::Consistency(format!(
                    "two-asset displays disagree at κ = {:e}: {} vs {}",
                    c.kappa, a.0, b.0
                )));
            }
            a
        }
    };
    Ok(TwoColorStep { value, gamma, branch: c.branch })
}

fn vertex_values(f: &dyn Fn(&[f64]) -> f64, z: &[f64], m: &MarketSpec) -> Vec<f64> {
    vertex_factors(&m.down, &m.up)
        .iter()
        .map(|xi| {
            let p: Vec<f64> = xi.iter().zip(z).map(|(a, b)| a * b).collect();
            f(&p)
        })
        .collect()
}

/// `(B f)(z)` for `J = 2` by the closed form for the sign of `kappa`.
pub fn two_color_step(f: &dyn Fn(&[f64]) -> f64, z: &[f64], m: &MarketSpec) -> Result<TwoColorStep> {
    let c = two_color_coefficients(m)?;
    if z.len() != 2 || z.iter().any(|x| !(*x > 0.0)) {
        return arg("two-asset step needs a positive price pair");
    }
    two_color_values(&c, m, &vertex_values(f, z, m), z)
}

/// Two-color binomial sum for `kappa = 0`:
/// `rho^-n sum_k C(n,k) a1^k a2^(n-k) f(u1^k d1^(n-k) z1, d2^k u2^(n-k) z2)`.
pub fn two_color_crr(f: &dyn Fn(&[f64]) -> f64, z0: &[f64], m: &MarketSpec, n: usize) -> Result<f64> {
    let c = two_color_coefficients(m)?;
    if c.kappa.abs() > BAND {
        return Err(HedgeError::Precondition {
            msg: format!("the binomial sum needs κ = 0, got κ = {:e}", c.kappa),
            max_admissible: None,
        });
    }
    let (a1, a2) = (c.up[0], c.up[1]);
    let mut binom = 1.0f64;
    let mut sum = 0.0;
    for k in 0..=n {
        if k > 0 {
            binom = binom * (n - k + 1) as f64 / k as f64;
        }
        let (k_, r) = (k as i32, (n - k) as i32);
        let s = [
            m.up[0].powi(k_) * m.down[0].powi(r) * z0[0],
            m.down[1].powi(k_) * m.up[1].powi(r) * z0[1],
        ];
        sum += binom * a1.powi(k_) * a2.powi(r) * f(&s);
    }
    Ok(sum * m.rho.powi(-(n as i32)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThreeColorCase {
    /// `alpha_123 >= 0`: single four-point law.
    Nonneg,
    /// `alpha_123 <= -1`: single four-point law.
    BelowMinusOne,
    /// `-1 < alpha_123 < 0`, every pair coefficient non-negative.
    PairsNonneg,
    /// Exactly the pair `(i, j)` has a non-positive coefficient.
    OnePairNonpos { i: usize, j: usize, k: usize },
    /// The pairs through `k` are non-positive, `(i, j)` is not.
    TwoPairsNonpos { i: usize, j: usize, k: usize },
    /// All pair coefficients non-positive: no closed form; the general
    /// engine is used.
    Uncovered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThreeColorCoefficients {
    /// `q_j = (u_j - rho) / (u_j - d_j)`.
    pub q: [f64; 3],
    pub alpha_123: f64,
    /// `alpha_ij = 1 - q_i - q_j` for pairs (0,1), (0,2), (1,2).
    pub alpha_12: f64,
    pub alpha_13: f64,
    pub alpha_23: f64,
    /// Every case consistent with the signs up to [`BAND`].
    pub cases: Vec<ThreeColorCase>,
}

impl ThreeColorCoefficients {
    pub fn pair(&self, a: usize, b: usize) -> f64 {
        1.0 - self.q[a] - self.q[b]
    }
}

pub fn three_color_coefficients(m: &MarketSpec) -> Result<ThreeColorCoefficients> {
    need_assets(m, 3)?;
    let q = [0, 1, 2].map(|j| (m.up[j] - m.rho) / (m.up[j] - m.down[j]));
    let a = 1.0 - q[0] - q[1] - q[2];
    let pair = |x: usize, y: usize| 1.0 - q[x] - q[y];
    let ge = |x: f64| x >= -BAND;
    let le = |x: f64| x <= BAND;
    let mut cases = Vec::new();
    if ge(a) {
        cases.push(ThreeColorCase::Nonneg);
    }
    if le(a + 1.0) {
        cases.push(ThreeColorCase::BelowMinusOne);
    }
    if le(a) && ge(a + 1.0) {
        let pairs = [(0, 1, 2), (0, 2, 1), (1, 2, 0)];
        if pairs.iter().all(|&(x, y, _)| ge(pair(x, y))) {
            cases.push(ThreeColorCase::PairsNonneg);
        }
        for &(i, j, k) in &pairs {
            if le(pair(i, j)) && ge(pair(j, k)) && ge(pair(i, k)) {
                cases.push(ThreeColorCase::OnePairNonpos { i, j, k });
            }
            if ge(pair(i, j)) && le(pair(j, k)) && le(pair(i, k)) {
                cases.push(ThreeColorCase::TwoPairsNonpos { i, j, k });
            }
        }
        if cases.is_empty() {
            cases.push(ThreeColorCase::Uncovered);
        }
    }
    Ok(ThreeColorCoefficients { q, alpha_123: a, alpha_12: pair(0, 1), alpha_13: pair(0, 2), alpha_23: pair(1, 2), cases })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThreeColorStep {
    pub value: f64,
    pub case: ThreeColorCase,
    /// Set when the general engine had to be used.
    pub warning: Option<String>,
}

/// One displayed law: `(coefficient, set of assets moving down)`.
type Row = Vec<(f64, Vec<usize>)>;

fn down_mask(set: &[usize]) -> usize {
    0b111 & !set.iter().fold(0, |acc, &a| acc | 1 << a)
}

/// The displayed laws of a case.
fn rows(c: &ThreeColorCoefficients, case: ThreeColorCase) -> Vec<Row> {
    let q = c.q;
    let p = q.map(|x| 1.0 - x);
    let a = c.alpha_123;
    let al = |x: usize, y: usize| c.pair(x, y);
    match case {
        ThreeColorCase::Nonneg => vec![vec![(a, vec![]), (q[0], vec![0]), (q[1], vec![1]), (q[2], vec![2])]],
        ThreeColorCase::BelowMinusOne => vec![vec![
            (-(a + 1.0), vec![0, 1, 2]),
            (p[0], vec![1, 2]),
            (p[1], vec![0, 2]),
            (p[2], vec![0, 1]),
        ]],
        ThreeColorCase::PairsNonneg => vec![
            vec![(-a, vec![0, 1]), (al(0, 2), vec![1]), (al(1, 2), vec![0]), (q[2], vec![2])],
            vec![(-a, vec![0, 2]), (al(0, 1), vec![2]), (al(1, 2), vec![0]), (q[1], vec![1])],
            vec![(-a, vec![1, 2]), (al(0, 1), vec![2]), (al(0, 2), vec![1]), (q[0], vec![0])],
        ],
        ThreeColorCase::OnePairNonpos { i, j, k } => vec![
            vec![(-a, vec![i, j]), (al(i, k), vec![j]), (al(j, k), vec![i]), (q[k], vec![k])],
            vec![(al(j, k), vec![i]), (-al(i, j), vec![i, j]), (q[k], vec![i, k]), (p[i], vec![j])],
            vec![(al(i, k), vec![j]), (-al(i, j), vec![i, j]), (q[k], vec![j, k]), (p[j], vec![i])],
        ],
        ThreeColorCase::TwoPairsNonpos { i, j, k } => vec![
            vec![(al(i, j), vec![k]), (-al(j, k), vec![j, k]), (q[i], vec![i, k]), (p[k], vec![j])],
            vec![(al(i, j), vec![k]), (-al(i, k), vec![i, k]), (q[j], vec![j, k]), (p[k], vec![i])],
            vec![(a + 1.0, vec![k]), (-al(j, k), vec![j, k]), (-al(i, k), vec![i, k]), (p[k], vec![i, j])],
        ],
        ThreeColorCase::Uncovered => Vec::new(),
    }
}

fn case_value(c: &ThreeColorCoefficients, case: ThreeColorCase, vals: &[f64]) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for row in rows(c, case) {
        let w: Vec<f64> = row.iter().map(|r| r.0).collect();
        check_stochastic(&w, &format!("{case:?}"))?;
        let v: f64 = row.iter().map(|(w, set)| w * vals[down_mask(set)]).sum();
        best = best.max(v);
    }
    Ok(best)
}

/// Value from the eight vertex values, `vals[mask]`.
fn three_color_values(c: &ThreeColorCoefficients, vals: &[f64]) -> Result<Option<(f64, ThreeColorCase)>> {
    if c.cases == [ThreeColorCase::Uncovered] {
        return Ok(None);
    }
    let first = c.cases[0];
    let v = case_value(c, first, vals)?;
    for &other in &c.cases[1..] {
        let w = case_value(c, other, vals)?;
        if (v - w).abs() > AGREE * (1.0 + v.abs()) {
            return Err(HedgeError::Consistency(format!(
                "adjacent three-asset cases {first:?} and {other:?} disagree: {v} vs {w}"
            )));
        }
    }
    Ok(Some((v, first)))
}

/// `(B f)(z)` for `J = 3` by case analysis on the alpha coefficients.
pub fn three_color_step(f: &dyn Fn(&[f64]) -> f64, z: &[f64], m: &MarketSpec) -> Result<ThreeColorStep> {
    let c = three_color_coefficients(m)?;
    if z.len() != 3 || z.iter().any(|x| !(*x > 0.0)) {
        return arg("three-asset step needs a positive price triple");
    }
    match three_color_values(&c, &vertex_values(f, z, m))? {
        Some((value, case)) => Ok(ThreeColorStep { value, case, warning: None }),
        None => {
            let s = bellman_step(f, z, m)?;
            Ok(ThreeColorStep {
                value: s.value,
                case: ThreeColorCase::Uncovered,
                warning: Some(format!(
                    "pair coefficients ({:e}, {:e}, {:e}) are all non-positive; no closed form applies, general engine used",
                    c.alpha_12, c.alpha_13, c.alpha_23
                )),
            })
        }
    }
}

/// Outcome of [`fast_price`].
#[derive(Debug, Clone, PartialEq)]
pub enum FastPath {
    Price(f64),
    /// The closed forms do not apply; the reason is given.
    NotApplicable(String),
}

/// n-step price through the closed forms on the recombining lattice.
///
/// Used for `J = 2` and for `J = 3` when a single four-point law applies
/// (`alpha_123 >= 0` or `<= -1`). The three-candidate cases are not
/// iterated, since sub-modularity need not survive a step there.
pub fn fast_price(f: &(dyn Fn(&[f64]) -> f64 + Send + Sync), z0: &[f64], m: &MarketSpec) -> Result<FastPath> {
    if m.schedule.is_some() || m.jump_maps.is_some() {
        return Ok(FastPath::NotApplicable("closed forms need homogeneous vertex factors".into()));
    }
    let j = m.assets();
    let combine: Box<dyn Fn(&[f64], &[f64]) -> Result<f64> + Send + Sync> = match j {
        2 => {
            let c = two_color_coefficients(m)?;
            let mm = m.clone();
            Box::new(move |vals, z| Ok(two_color_values(&c, &mm, vals, z)?.value))
        }
        3 => {
            let c = three_color_coefficients(m)?;
            let single = c.cases.iter().all(|x| matches!(x, ThreeColorCase::Nonneg | ThreeColorCase::BelowMinusOne));
            if !single {
                return Ok(FastPath::NotApplicable(format!(
                    "three-asset case {:?} is not iterated by closed form",
                    c.cases[0]
                )));
            }
            Box::new(move |vals, _| Ok(three_color_values(&c, vals)?.expect("covered case").0))
        }
        _ => return Ok(FastPath::NotApplicable(format!("no closed form for J = {j}"))),
    };
    let n = m.steps;
    let b = 1usize << j;
    let mut next: Vec<f64> = (0..layer_size(n, j))
        .into_par_iter()
        .map(|idx| f(&node_price(z0, &m.down, &m.up, &decode(idx, n + 1, j), n)))
        .collect();
    for step in (0..n).rev() {
        let radix = step + 1;
        next = (0..layer_size(step, j))
            .into_par_iter()
            .map(|idx| {
                let k = decode(idx, radix, j);
                let z = node_price(z0, &m.down, &m.up, &k, step);
                let vals: Vec<f64> = (0..b).map(|mask| next[child(&k, mask, radix + 1)]).collect();
                Ok(combine(&vals, &z)? / m.rho)
            })
            .collect::<Result<Vec<_>>>()?;
    }
    Ok(FastPath::Price(next[0]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max2(z: &[f64]) -> f64 {
        z[0].max(z[1])
    }

    #[test]
    fn two_color_examples() {
        let m = MarketSpec::new(vec![0.9, 0.9], vec![1.2, 1.2], 1.0, 1).unwrap();
        let s = two_color_step(&max2, &[1.0, 1.0], &m).unwrap();
        assert_eq!(s.branch, TwoColorBranch::KappaNonneg);
        assert!((s.value - 1.1).abs() < 1e-14);
        let m = MarketSpec::new(vec![0.9, 0.9], vec![1.2, 1.2], 1.05, 1).unwrap();
        let s = two_color_step(&max2, &[1.0, 1.0], &m).unwrap();
        assert_eq!(s.branch, TwoColorBranch::Boundary);
        let s = two_color_step(&|z: &[f64]| z[0], &[1.3, 0.7], &m).unwrap();
        assert!((s.value - 1.05 * 1.3).abs() < 1e-14);
        assert!((s.gamma[0] - 1.0).abs() < 1e-14 && s.gamma[1].abs() < 1e-14);
    }

    #[test]
    fn crr_needs_zero_kappa() {
        let m = MarketSpec::new(vec![0.9, 0.9], vec![1.2, 1.2], 1.0, 1).unwrap();
        assert!(matches!(two_color_crr(&max2, &[1.0, 1.0], &m, 2), Err(HedgeError::Precondition { .. })));
        let m = MarketSpec::new(vec![0.9, 0.9], vec![1.2, 1.2], 1.05, 1).unwrap();
        assert_eq!(two_color_crr(&max2, &[1.1, 0.9], &m, 0).unwrap(), 1.1);
    }

    #[test]
    fn three_color_constant() {
        let m = MarketSpec::new(vec![0.9, 0.85, 0.95], vec![1.2, 1.1, 1.3], 1.0, 1).unwrap();
        let s = three_color_step(&|_: &[f64]| 2.5, &[1.0, 1.0, 1.0], &m).unwrap();
        assert!((s.value - 2.5).abs() < 1e-14);
    }
}
