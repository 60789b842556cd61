//! Finite minmax functionals over jump-vector families.
//!
//! For vectors `xi_1..xi_k` surrounding the origin and numbers `f_i`,
//!
//! ```text
//! min_gamma max_i [f_i - (xi_i, gamma)] = max_I E_I f
//! ```
//!
//! where `I` runs over the extreme risk-neutral laws. In general position
//! these are the simplices of `d + 1` vectors containing the origin; when
//! some d vectors are dependent the extreme laws can have smaller support
//! (affinely independent subsets whose hull has the origin in its relative
//! interior), which [`GeometryMode::Extended`] enumerates.

use std::sync::Arc;

use crate::error::{arg, HedgeError, Result};
use crate::geometry::{self, SimplexMeasure};
use crate::linalg::{self, dot, norm, Combinations, Lu};
use crate::lp;

/// Barycentric weights below this count as zero in extended enumeration.
pub const WEIGHT_TOL: f64 = 1e-12;
/// Candidates within this of the optimum are ties, resolved by the
/// lexicographically smallest index set.
pub const TIE_TOL: f64 = 1e-12;
pub const FIXED_POINT_MAX_ITER: usize = 200;
pub const FIXED_POINT_TOL: f64 = 1e-12;

/// How extreme risk-neutral laws are enumerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryMode {
    /// Only simplices of `d + 1` vectors; requires general position.
    Strict,
    /// Every affinely independent subset with the origin in the relative
    /// interior of its hull.
    Extended,
}

/// Which extremum over the extreme laws to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Upper,
    Lower,
}

/// An extreme risk-neutral law: support indices and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl Candidate {
    pub fn expectation(&self, values: &[f64]) -> f64 {
        self.indices.iter().zip(&self.weights).map(|(&i, &p)| p * values[i]).sum()
    }
}

/// All extreme laws of a family, in lexicographic order of their supports.
#[derive(Debug, Clone)]
pub struct ExtremeSet {
    pub dim: usize,
    pub mode: GeometryMode,
    pub candidates: Vec<Candidate>,
}

/// Jump vectors together with payoff values at their end points.
#[derive(Clone)]
pub struct VertexValuation {
    pub vectors: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// `(i, gamma) -> f(xi_i, gamma)` for the nonlinear functional.
    pub value_fn: Option<Arc<dyn Fn(usize, &[f64]) -> f64 + Send + Sync>>,
}

impl std::fmt::Debug for VertexValuation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VertexValuation")
            .field("vectors", &self.vectors)
            .field("values", &self.values)
            .field("value_fn", &self.value_fn.as_ref().map(|_| "<fn>"))
            .finish()
    }
}

impl VertexValuation {
    pub fn new(vectors: Vec<Vec<f64>>, values: Vec<f64>) -> Self {
        Self { vectors, values, value_fn: None }
    }

    fn validate(&self) -> Result<usize> {
        let d = self.vectors.first().map_or(0, |v| v.len());
        if d == 0 {
            return arg("valuation needs non-empty vectors");
        }
        if self.vectors.iter().any(|v| v.len() != d) {
            return arg("all vectors must share one dimension");
        }
        if self.vectors.len() < d + 1 {
            return arg(format!("need at least d + 1 = {} vectors", d + 1));
        }
        if self.values.len() != self.vectors.len() {
            return arg("one value per vector is required");
        }
        if self.vectors.iter().any(|v| norm(v) == 0.0) {
            return arg("vectors must be non-vanishing");
        }
        Ok(d)
    }
}

/// Result of a minmax evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct MinmaxResult {
    pub value: f64,
    pub gamma: Vec<f64>,
    pub active_measure: SimplexMeasure,
    /// Every candidate support with its objective value.
    pub all_candidates: Vec<(Vec<usize>, f64)>,
}

/// Enumerates the extreme risk-neutral laws of a family.
pub fn extreme_measures<V: AsRef<[f64]>>(vectors: &[V], mode: GeometryMode) -> Result<ExtremeSet> {
    let d = vectors.first().map_or(0, |v| v.as_ref().len());
    if d == 0 || vectors.iter().any(|v| v.as_ref().len() != d) {
        return arg("family must be non-empty with vectors of one dimension");
    }
    if mode == GeometryMode::Strict {
        if let Some(s) = geometry::dependent_subset(vectors, d) {
            return Err(HedgeError::Degenerate(format!(
                "vectors {s:?} are linearly dependent; general position fails"
            )));
        }
    }
    if !geometry::origin_interior(vectors, d) {
        return Err(HedgeError::UnboundedBelow(
            "the vectors lie in a half-space; the minmax value is minus infinity".into(),
        ));
    }
    let k = vectors.len();
    let mut candidates = Vec::new();
    match mode {
        GeometryMode::Strict => {
            for idx in Combinations::new(k, d + 1) {
                if let Some(w) = geometry::signed_weights(vectors, &idx) {
                    if w.iter().all(|&p| p > 0.0) {
                        candidates.push(Candidate { indices: idx, weights: w });
                    }
                }
            }
        }
        GeometryMode::Extended => {
            for m in 2..=d + 1 {
                for idx in Combinations::new(k, m) {
                    let pts: Vec<&[f64]> = idx.iter().map(|&i| vectors[i].as_ref()).collect();
                    let scale = pts.iter().map(|p| norm(p)).fold(0.0, f64::max);
                    if let Some((point, bary)) = linalg::project_origin_affine(&pts) {
                        if norm(&point) <= 1e-11 * scale && bary.iter().all(|&b| b > WEIGHT_TOL) {
                            candidates.push(Candidate { indices: idx, weights: bary });
                        }
                    }
                }
            }
            candidates.sort_by(|a, b| a.indices.cmp(&b.indices));
        }
    }
    if candidates.is_empty() {
        return Err(HedgeError::Numeric("no extreme risk-neutral law found".into()));
    }
    Ok(ExtremeSet { dim: d, mode, candidates })
}

/// Picks the optimal candidate for precomputed objective values.
/// Returns `(position, value)`; ties go to the earliest candidate.
pub fn select(objectives: &[f64], sense: Sense) -> (usize, f64) {
    let best = match sense {
        Sense::Upper => objectives.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        Sense::Lower => objectives.iter().cloned().fold(f64::INFINITY, f64::min),
    };
    let pos = objectives
        .iter()
        .position(|&v| (v - best).abs() <= TIE_TOL)
        .unwrap_or(0);
    (pos, objectives[pos])
}

/// Hedge vector certifying `value` for the chosen candidate.
///
/// For a full simplex this is the unique vector equalising
/// `f_i - (xi_i, gamma)` on its support. For smaller supports (or if the
/// simplex vector fails the global certificate) a feasible vector of least
/// l1 norm is found with a linear program.
pub fn hedge_vector<V: AsRef<[f64]>>(
    vectors: &[V],
    values: &[f64],
    cand: &Candidate,
    value: f64,
    sense: Sense,
) -> Result<Vec<f64>> {
    let d = vectors[0].as_ref().len();
    let scale = 1.0 + linalg::max_abs(values);
    let certified = |g: &[f64]| {
        vectors.iter().zip(values).all(|(v, &f)| {
            let r = f - dot(v.as_ref(), g);
            match sense {
                Sense::Upper => r <= value + 1e-9 * scale,
                Sense::Lower => r >= value - 1e-9 * scale,
            }
        })
    };
    if cand.indices.len() == d + 1 {
        let local: Vec<f64> = cand.indices.iter().map(|&i| values[i]).collect();
        if let Ok(g) = geometry::simplex_gamma(vectors, &cand.indices, &local) {
            if certified(&g) {
                return Ok(g);
            }
        }
    }
    let eps = 1e-12 * scale;
    let (rows, h): (Vec<Vec<f64>>, Vec<f64>) = match sense {
        Sense::Upper => vectors
            .iter()
            .zip(values)
            .map(|(v, &f)| (v.as_ref().iter().map(|x| -x).collect(), value - f + eps))
            .unzip(),
        Sense::Lower => vectors
            .iter()
            .zip(values)
            .map(|(v, &f)| (v.as_ref().to_vec(), f - value + eps))
            .unzip(),
    };
    lp::free_feasible_min_l1(&rows, &h)
        .ok_or_else(|| HedgeError::Numeric("no hedge vector certifies the minmax value".into()))
}

/// Evaluates the upper or lower functional on a precomputed extreme set.
pub fn evaluate<V: AsRef<[f64]>>(set: &ExtremeSet, vectors: &[V], values: &[f64], sense: Sense) -> Result<MinmaxResult> {
    let objectives: Vec<f64> = set.candidates.iter().map(|c| c.expectation(values)).collect();
    let (pos, value) = select(&objectives, sense);
    let cand = &set.candidates[pos];
    let gamma = hedge_vector(vectors, values, cand, value, sense)?;
    Ok(MinmaxResult {
        value,
        gamma: gamma.clone(),
        active_measure: SimplexMeasure {
            indices: cand.indices.clone(),
            weights: cand.weights.clone(),
            gamma: Some(gamma),
        },
        all_candidates: set
            .candidates
            .iter()
            .zip(objectives)
            .map(|(c, o)| (c.indices.clone(), o))
            .collect(),
    })
}

/// `min_gamma max_i [f_i - (xi_i, gamma)]`, the upper (seller's) value.
/// Requires general position.
pub fn upper_minmax(v: &VertexValuation) -> Result<MinmaxResult> {
    upper_minmax_with(v, GeometryMode::Strict)
}

pub fn upper_minmax_with(v: &VertexValuation, mode: GeometryMode) -> Result<MinmaxResult> {
    v.validate()?;
    let set = extreme_measures(&v.vectors, mode)?;
    evaluate(&set, &v.vectors, &v.values, Sense::Upper)
}

/// `max_gamma min_i [f_i - (xi_i, gamma)]`, the lower (buyer's) value:
/// the minimum of `E_I f` over the same extreme laws.
pub fn lower_minmax(v: &VertexValuation) -> Result<MinmaxResult> {
    lower_minmax_with(v, GeometryMode::Strict)
}

pub fn lower_minmax_with(v: &VertexValuation, mode: GeometryMode) -> Result<MinmaxResult> {
    v.validate()?;
    let set = extreme_measures(&v.vectors, mode)?;
    evaluate(&set, &v.vectors, &v.values, Sense::Lower)
}

fn gate(v: &VertexValuation, lipschitz: f64, use_kappa2: bool) -> Result<()> {
    if !(lipschitz >= 0.0) {
        return arg("Lipschitz constant must be non-negative");
    }
    let s = geometry::spread_characteristics(&v.vectors)?;
    let bound = if use_kappa2 { s.kappa1.min(s.kappa2) } else { s.kappa1 };
    if lipschitz >= bound && lipschitz > 0.0 {
        return Err(HedgeError::Precondition {
            msg: format!("Lipschitz constant {lipschitz} is not below the spread bound {bound}"),
            max_admissible: Some(bound),
        });
    }
    Ok(())
}

/// `min_gamma max_i [f_i - (xi_i, gamma) + g(gamma)]` for an additive cost
/// `g` with Lipschitz constant `lipschitz < kappa1`.
///
/// Equals `max_I [E_I f + g(gamma_I)]` with `gamma_I` the cost-free
/// optimal vector of simplex `I`.
pub fn costed_minmax(v: &VertexValuation, g: &dyn Fn(&[f64]) -> f64, lipschitz: f64) -> Result<MinmaxResult> {
    v.validate()?;
    gate(v, lipschitz, false)?;
    let set = extreme_measures(&v.vectors, GeometryMode::Strict)?;
    let mut gammas = Vec::with_capacity(set.candidates.len());
    let mut objectives = Vec::with_capacity(set.candidates.len());
    for c in &set.candidates {
        let local: Vec<f64> = c.indices.iter().map(|&i| v.values[i]).collect();
        let gam = geometry::simplex_gamma(&v.vectors, &c.indices, &local)?;
        objectives.push(c.expectation(&v.values) + g(&gam));
        gammas.push(gam);
    }
    finish(&set, objectives, gammas)
}

fn finish(set: &ExtremeSet, objectives: Vec<f64>, mut gammas: Vec<Vec<f64>>) -> Result<MinmaxResult> {
    let (pos, value) = select(&objectives, Sense::Upper);
    let cand = &set.candidates[pos];
    let gamma = std::mem::take(&mut gammas[pos]);
    Ok(MinmaxResult {
        value,
        gamma: gamma.clone(),
        active_measure: SimplexMeasure {
            indices: cand.indices.clone(),
            weights: cand.weights.clone(),
            gamma: Some(gamma),
        },
        all_candidates: set
            .candidates
            .iter()
            .zip(objectives)
            .map(|(c, o)| (c.indices.clone(), o))
            .collect(),
    })
}

/// Outcome of the fixed-point iteration for one simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub gamma: Vec<f64>,
    pub iterations: usize,
    /// Norms of successive steps `|gamma_{k+1} - gamma_k|`.
    pub steps: Vec<f64>,
}

/// Solves `(xi_i - xi_1, gamma) = F(i, gamma) - F(1, gamma)` on a simplex
/// by Picard iteration from `start`.
pub fn fixed_point_gamma<V: AsRef<[f64]>>(
    vectors: &[V],
    indices: &[usize],
    f: &dyn Fn(usize, &[f64]) -> f64,
    start: Vec<f64>,
) -> Result<FixedPoint> {
    let base = vectors[indices[0]].as_ref();
    let rows: Vec<Vec<f64>> = indices[1..]
        .iter()
        .map(|&i| linalg::sub(vectors[i].as_ref(), base))
        .collect();
    let lu = Lu::new(&rows, 1e-14).ok_or_else(|| HedgeError::Degenerate("simplex edge matrix is singular".into()))?;
    let mut gamma = start;
    let mut steps = Vec::new();
    for it in 1..=FIXED_POINT_MAX_ITER {
        let f0 = f(indices[0], &gamma);
        let rhs: Vec<f64> = indices[1..].iter().map(|&i| f(i, &gamma) - f0).collect();
        let next = lu.solve(&rhs);
        let step = norm(&linalg::sub(&next, &gamma));
        steps.push(step);
        let done = step < FIXED_POINT_TOL * (1.0 + norm(&next));
        gamma = next;
        if done {
            return Ok(FixedPoint { gamma, iterations: it, steps });
        }
    }
    Err(HedgeError::Convergence(format!(
        "hedge fixed point did not converge in {FIXED_POINT_MAX_ITER} iterations (last step {:e})",
        steps.last().copied().unwrap_or(f64::NAN)
    )))
}

/// `min_gamma max_i [f(xi_i, gamma) - (xi_i, gamma)]` for `f` Lipschitz in
/// `gamma` with constant `lipschitz < min(kappa1, kappa2)`.
///
/// Each simplex gets its own fixed-point hedge vector, started at the
/// cost-free vector computed from `values`.
pub fn nonlinear_minmax(v: &VertexValuation, lipschitz: f64) -> Result<MinmaxResult> {
    v.validate()?;
    let f = v
        .value_fn
        .as_ref()
        .ok_or_else(|| HedgeError::Argument("nonlinear minmax needs a value function".into()))?;
    gate(v, lipschitz, true)?;
    let set = extreme_measures(&v.vectors, GeometryMode::Strict)?;
    let mut gammas = Vec::with_capacity(set.candidates.len());
    let mut objectives = Vec::with_capacity(set.candidates.len());
    for c in &set.candidates {
        let local: Vec<f64> = c.indices.iter().map(|&i| v.values[i]).collect();
        let start = geometry::simplex_gamma(&v.vectors, &c.indices, &local)?;
        let fp = fixed_point_gamma(&v.vectors, &c.indices, f.as_ref(), start)?;
        let obj: f64 = c.indices.iter().zip(&c.weights).map(|(&i, &p)| p * f(i, &fp.gamma)).sum();
        objectives.push(obj);
        gammas.push(fp.gamma);
    }
    finish(&set, objectives, gammas)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn val(vectors: Vec<Vec<f64>>, values: Vec<f64>) -> VertexValuation {
        VertexValuation::new(vectors, values)
    }

    #[test]
    fn constant_payoff() {
        let v = val(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, -1.0]], vec![0.0; 3]);
        let r = upper_minmax(&v).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.gamma.iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn one_dimensional_example() {
        let v = val(vec![vec![0.2], vec![-0.1]], vec![1.0, 0.0]);
        let r = upper_minmax(&v).unwrap();
        assert!((r.value - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.gamma[0] - 10.0 / 3.0).abs() < 1e-13);
        let l = lower_minmax(&v).unwrap();
        assert!((l.value - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn costed_example() {
        let v = val(vec![vec![0.2], vec![-0.1]], vec![1.0, 0.0]);
        let r = costed_minmax(&v, &|g: &[f64]| 0.01 * g[0].abs(), 0.01).unwrap();
        assert!((r.value - (1.0 / 3.0 + 1.0 / 30.0)).abs() < 1e-14);
        let z = costed_minmax(&v, &|_: &[f64]| 0.0, 0.0).unwrap();
        assert_eq!(z.value, upper_minmax(&v).unwrap().value);
        let e = costed_minmax(&v, &|g: &[f64]| g[0].abs(), 1.0).unwrap_err();
        assert!(matches!(e, HedgeError::Precondition { .. }));
    }

    #[test]
    fn degenerate_and_unbounded_inputs() {
        let sq = val(
            vec![vec![1.0, 1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, -1.0]],
            vec![1.0, 0.0, 0.0, 1.0],
        );
        assert!(matches!(upper_minmax(&sq), Err(HedgeError::Degenerate(_))));
        let r = upper_minmax_with(&sq, GeometryMode::Extended).unwrap();
        assert!((r.value - 1.0).abs() < 1e-15);
        assert_eq!(r.active_measure.indices, vec![0, 3]);
        let half = val(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]], vec![0.0; 3]);
        assert!(matches!(upper_minmax(&half), Err(HedgeError::UnboundedBelow(_))));
    }

    #[test]
    fn nonlinear_without_gamma_dependence() {
        let mut v = val(vec![vec![0.3, 0.1], vec![-0.2, 0.25], vec![-0.1, -0.3], vec![0.2, -0.2]], vec![0.5, 0.1, 0.7, 0.2]);
        let vals = v.values.clone();
        v.value_fn = Some(Arc::new(move |i, _g: &[f64]| vals[i]));
        let r = nonlinear_minmax(&v, 0.0).unwrap();
        let u = upper_minmax(&v).unwrap();
        assert!((r.value - u.value).abs() < 1e-15);
    }
}
