//! Affine geometry of jump-vector families.
//!
//! A family is a set of non-vanishing vectors `xi_1..xi_k` in `R^d`. The
//! quantities here are the oriented volume `D`, the rotor `R` (cofactor
//! expansion of `D` along a formal basis row), the shifted rotor `R~`,
//! the unique risk-neutral law on a simplex surrounding the origin, and the
//! spread characteristics `kappa1`, `kappa2` that gate the cost and
//! nonlinear minmax results.

use crate::error::{arg, HedgeError, Result};
use crate::linalg::{self, norm, Combinations};
use crate::lp::{self, LpOutcome};

/// Relative tolerance below which a d-subset counts as linearly dependent:
/// `|D| < DEGENERACY_TOL * prod |rows|`.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// A non-vanishing price-relative displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpVector {
    coords: Vec<f64>,
}

impl JumpVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return arg("jump vector must have at least one coordinate");
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return arg("jump vector has non-finite coordinates");
        }
        if norm(&coords) == 0.0 {
            return arg("jump vector must be non-vanishing");
        }
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

impl AsRef<[f64]> for JumpVector {
    fn as_ref(&self) -> &[f64] {
        &self.coords
    }
}

/// Risk-neutral law on a simplex of `d + 1` vectors of a family.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexMeasure {
    /// Indices into the family the simplex was drawn from.
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    /// The optimal hedge vector; set by the minmax evaluators.
    pub gamma: Option<Vec<f64>>,
}

/// Spread of a family around the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpreadCharacteristics {
    /// Smallest distance from the origin to the hull of a subfamily that
    /// lies in a half-space.
    pub kappa1: f64,
    /// Smallest distance from the origin to a hyperplane through the end
    /// points of d vectors.
    pub kappa2: f64,
    /// Coordinate ratio `max z / min z` of the scaling the family was
    /// measured at (1 for an unscaled family).
    pub delta: f64,
}

/// Outcome of the general-position checks.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralPositionReport {
    /// No d vectors are linearly dependent.
    pub independent: bool,
    /// A dependent d-subset when `independent` is false.
    pub dependent_subset: Option<Vec<usize>>,
    /// The family does not lie in any closed half-space through the origin.
    pub surrounds_origin: bool,
    /// A unit `omega` with `(xi_i, omega) >= 0` for all i when
    /// `surrounds_origin` is false.
    pub separating_direction: Option<Vec<f64>>,
}

impl GeneralPositionReport {
    pub fn holds(&self) -> bool {
        self.independent && self.surrounds_origin
    }
}

fn check_dims<V: AsRef<[f64]>>(vectors: &[V], count: usize, dim: usize) -> Result<()> {
    if vectors.len() != count {
        return arg(format!("expected {count} vectors, got {}", vectors.len()));
    }
    if let Some(v) = vectors.iter().find(|v| v.as_ref().len() != dim) {
        return arg(format!("expected vectors of length {dim}, got length {}", v.as_ref().len()));
    }
    Ok(())
}

fn family_dim<V: AsRef<[f64]>>(family: &[V]) -> Result<usize> {
    let d = family.first().map(|v| v.as_ref().len()).unwrap_or(0);
    if d == 0 {
        return arg("empty family");
    }
    if family.iter().any(|v| v.as_ref().len() != d) {
        return arg("vectors of a family must share one dimension");
    }
    Ok(d)
}

/// Determinant of the matrix whose rows are the `d` given vectors.
pub fn oriented_volume<V: AsRef<[f64]>>(vectors: &[V]) -> Result<f64> {
    let d = vectors.len();
    check_dims(vectors, d, d)?;
    let rows: Vec<&[f64]> = vectors.iter().map(|v| v.as_ref()).collect();
    Ok(linalg::det(&rows))
}

/// Rotor of `d - 1` vectors in `R^d`: the vector `R` with
/// `(R, v) = D(v, u_1, ..., u_{d-1})` for every `v`.
pub fn rotor<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Vec<f64>> {
    let d = vectors.len() + 1;
    check_dims(vectors, d - 1, d)?;
    Ok(rotor_unchecked(vectors, d))
}

fn rotor_unchecked<V: AsRef<[f64]>>(vectors: &[V], d: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(d);
    let mut minor: Vec<Vec<f64>> = vec![vec![0.0; d - 1]; d - 1];
    for j in 0..d {
        for (r, v) in vectors.iter().enumerate() {
            let v = v.as_ref();
            let mut k = 0;
            for (c, x) in v.iter().enumerate() {
                if c != j {
                    minor[r][k] = *x;
                    k += 1;
                }
            }
        }
        let rows: Vec<&[f64]> = minor.iter().map(|r| r.as_slice()).collect();
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        out.push(sign * linalg::det(&rows));
    }
    out
}

/// `R~(u_1, ..., u_d) = R(u_2 - u_1, ..., u_d - u_1)`, the normal of the
/// hyperplane through the end points of the `u_i`.
pub fn rotor_tilde<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Vec<f64>> {
    let d = vectors.len();
    check_dims(vectors, d, d)?;
    Ok(rotor_tilde_unchecked(vectors, d))
}

fn rotor_tilde_unchecked<V: AsRef<[f64]>>(vectors: &[V], d: usize) -> Vec<f64> {
    let base = vectors[0].as_ref();
    let diffs: Vec<Vec<f64>> = vectors[1..].iter().map(|v| linalg::sub(v.as_ref(), base)).collect();
    rotor_unchecked(&diffs, d)
}

fn det_of<V: AsRef<[f64]>>(family: &[V], idx: impl Iterator<Item = usize>) -> (f64, f64) {
    let rows: Vec<&[f64]> = idx.map(|i| family[i].as_ref()).collect();
    let scale: f64 = rows.iter().map(|r| norm(r)).product();
    (linalg::det(&rows), scale)
}

/// Signed simplex weights for `d + 1` vectors picked by `idx`.
///
/// `p_i = (-1)^(i-1) D(family without i) / D`, where `D` is the
/// alternating sum of the minors (the volume of the pyramid spanned by the
/// end points). Returns `None` when some minor is degenerate. The weights
/// sum to one by construction but may be negative when the origin is
/// outside the simplex.
pub(crate) fn signed_weights<V: AsRef<[f64]>>(family: &[V], idx: &[usize]) -> Option<Vec<f64>> {
    let m = idx.len();
    let mut minors = Vec::with_capacity(m);
    for i in 0..m {
        let (det, scale) = det_of(family, idx.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, &x)| x));
        if det.abs() < DEGENERACY_TOL * scale {
            return None;
        }
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        minors.push(sign * det);
    }
    let total: f64 = minors.iter().sum();
    if total == 0.0 {
        return None;
    }
    Some(minors.iter().map(|m| m / total).collect())
}

/// The unique risk-neutral law of a simplex of `d + 1` vectors.
///
/// Fails with a degeneracy error when some d-subset is linearly
/// dependent and with an infeasibility error when the origin is not
/// interior to the simplex.
pub fn simplex_risk_neutral<V: AsRef<[f64]>>(family: &[V]) -> Result<SimplexMeasure> {
    let d = family_dim(family)?;
    check_dims(family, d + 1, d)?;
    let idx: Vec<usize> = (0..=d).collect();
    let weights = signed_weights(family, &idx).ok_or_else(|| {
        HedgeError::Degenerate("a d-subset of the simplex is linearly dependent".into())
    })?;
    if let Some(i) = weights.iter().position(|&p| p <= 0.0) {
        return Err(HedgeError::Infeasible(format!(
            "origin is not interior to the simplex (weight {i} is {:e})",
            weights[i]
        )));
    }
    let residual = barycenter_residual(family, &idx, &weights);
    let scale = family.iter().map(|v| norm(v.as_ref())).fold(0.0, f64::max);
    if residual > 1e-10 * scale {
        return Err(HedgeError::Numeric(format!(
            "simplex weights fail the barycenter identity (residual {residual:e})"
        )));
    }
    Ok(SimplexMeasure { indices: idx, weights, gamma: None })
}

/// Norm of `sum_i p_i xi_i` over the chosen vectors.
pub fn barycenter_residual<V: AsRef<[f64]>>(family: &[V], idx: &[usize], weights: &[f64]) -> f64 {
    let d = family[idx[0]].as_ref().len();
    let mut acc = vec![0.0; d];
    for (&i, &p) in idx.iter().zip(weights) {
        for (a, x) in acc.iter_mut().zip(family[i].as_ref()) {
            *a += p * x;
        }
    }
    norm(&acc)
}

/// Hedge vector equalising `f(xi_i) - (xi_i, gamma)` over a simplex:
/// solves `(xi_i - xi_1, gamma) = f_i - f_1`.
pub fn simplex_gamma<V: AsRef<[f64]>>(family: &[V], idx: &[usize], values: &[f64]) -> Result<Vec<f64>> {
    let base = family[idx[0]].as_ref();
    let rows: Vec<Vec<f64>> = idx[1..].iter().map(|&i| linalg::sub(family[i].as_ref(), base)).collect();
    let rhs: Vec<f64> = (1..idx.len()).map(|j| values[j] - values[0]).collect();
    linalg::solve(&rows, &rhs).ok_or_else(|| HedgeError::Degenerate("simplex edge matrix is singular".into()))
}

/// First linearly dependent d-subset, if any.
pub fn dependent_subset<V: AsRef<[f64]>>(family: &[V], d: usize) -> Option<Vec<usize>> {
    Combinations::new(family.len(), d).find(|s| {
        let (det, scale) = det_of(family, s.iter().copied());
        det.abs() < DEGENERACY_TOL * scale
    })
}

/// True when the origin is interior to the convex hull of the family.
///
/// Checks that the family spans `R^d` and that `sum q_i xi_i = -sum xi_i`
/// has a solution `q >= 0`, i.e. a representation of the origin with all
/// weights `(1 + q_i) / (k + sum q)` strictly positive.
pub fn origin_interior<V: AsRef<[f64]>>(family: &[V], d: usize) -> bool {
    if linalg::rank(family, 1e-10) < d {
        return false;
    }
    let k = family.len();
    let a: Vec<Vec<f64>> = (0..d).map(|j| family.iter().map(|v| v.as_ref()[j]).collect()).collect();
    let b: Vec<f64> = (0..d).map(|j| -family.iter().map(|v| v.as_ref()[j]).sum::<f64>()).collect();
    matches!(lp::minimize(&vec![0.0; k], &a, &b), LpOutcome::Optimal { .. })
}

/// A unit direction `omega` with `(xi_i, omega) >= 0` for every vector,
/// preferring one that puts the whole family in the open half-space.
pub fn separating_direction<V: AsRef<[f64]>>(family: &[V], d: usize) -> Option<Vec<f64>> {
    if linalg::rank(family, 1e-10) < d {
        return linalg::null_vector(family, d, 1e-10);
    }
    let k = family.len();
    // max t subject to (xi_i, w+ - w-) - t - s_i = 0, w+_j + w-_j + b_j = 1.
    let n = 2 * d + 1 + k + d;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (i, v) in family.iter().enumerate() {
        let mut row = vec![0.0; n];
        for j in 0..d {
            row[j] = v.as_ref()[j];
            row[d + j] = -v.as_ref()[j];
        }
        row[2 * d] = -1.0;
        row[2 * d + 1 + i] = -1.0;
        a.push(row);
        b.push(0.0);
    }
    for j in 0..d {
        let mut row = vec![0.0; n];
        row[j] = 1.0;
        row[d + j] = 1.0;
        row[2 * d + 1 + k + j] = 1.0;
        a.push(row);
        b.push(1.0);
    }
    let mut c = vec![0.0; n];
    c[2 * d] = -1.0;
    if let LpOutcome::Optimal { x, value } = lp::minimize(&c, &a, &b) {
        if -value > 1e-12 {
            let w: Vec<f64> = (0..d).map(|j| x[j] - x[d + j]).collect();
            let nw = norm(&w);
            return Some(w.iter().map(|v| v / nw).collect());
        }
    }
    // Only a closed half-space: (xi_i, w) = s_i >= 0 with sum s_i = 1.
    let n = 2 * d + k;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (i, v) in family.iter().enumerate() {
        let mut row = vec![0.0; n];
        for j in 0..d {
            row[j] = v.as_ref()[j];
            row[d + j] = -v.as_ref()[j];
        }
        row[2 * d + i] = -1.0;
        a.push(row);
        b.push(0.0);
    }
    let mut row = vec![0.0; n];
    for v in row.iter_mut().skip(2 * d) {
        *v = 1.0;
    }
    a.push(row);
    b.push(1.0);
    match lp::minimize(&vec![0.0; n], &a, &b) {
        LpOutcome::Optimal { x, .. } => {
            let w: Vec<f64> = (0..d).map(|j| x[j] - x[d + j]).collect();
            let nw = norm(&w);
            (nw > 0.0).then(|| w.iter().map(|v| v / nw).collect())
        }
        _ => None,
    }
}

/// Checks the two general-position conditions for a family in `R^d`.
pub fn is_general_position<V: AsRef<[f64]>>(family: &[V], d: usize) -> Result<GeneralPositionReport> {
    if family.iter().any(|v| v.as_ref().len() != d) {
        return arg(format!("all vectors must have length {d}"));
    }
    let dependent_subset = dependent_subset(family, d);
    let surrounds_origin = family.len() > d && origin_interior(family, d);
    let separating_direction = if surrounds_origin { None } else { separating_direction(family, d) };
    Ok(GeneralPositionReport {
        independent: dependent_subset.is_none(),
        dependent_subset,
        surrounds_origin,
        separating_direction,
    })
}

/// Distance from the origin to the hyperplane through the end points of
/// `d` vectors, `|D| / |R~|`.
pub fn perpendicular_length<V: AsRef<[f64]>>(vectors: &[V]) -> Result<f64> {
    let d = vectors.len();
    check_dims(vectors, d, d)?;
    let rows: Vec<&[f64]> = vectors.iter().map(|v| v.as_ref()).collect();
    let r = rotor_tilde_unchecked(vectors, d);
    Ok(linalg::det(&rows).abs() / norm(&r))
}

/// Spread characteristics of a family satisfying condition (i).
///
/// `kappa2` is the smallest perpendicular from the origin to a hyperplane
/// through d end points. `kappa1` is the smallest distance from the origin
/// to the convex hull of a subfamily lying in a half-space; the nearest
/// point of such a hull lies in the relative interior of a face spanned by
/// at most d vectors, so it suffices to project the origin onto the affine
/// hull of every subset of size at most d and keep the projections that
/// land strictly inside.
pub fn spread_characteristics<V: AsRef<[f64]>>(family: &[V]) -> Result<SpreadCharacteristics> {
    let d = family_dim(family)?;
    if family.len() < d {
        return arg("family needs at least d vectors");
    }
    if let Some(s) = dependent_subset(family, d) {
        return Err(HedgeError::Degenerate(format!("vectors {s:?} are linearly dependent")));
    }
    let mut kappa2 = f64::INFINITY;
    for s in Combinations::new(family.len(), d) {
        let sub: Vec<&[f64]> = s.iter().map(|&i| family[i].as_ref()).collect();
        kappa2 = kappa2.min(perpendicular_length(&sub)?);
    }
    let mut kappa1 = f64::INFINITY;
    for m in 1..=d {
        for s in Combinations::new(family.len(), m) {
            let sub: Vec<&[f64]> = s.iter().map(|&i| family[i].as_ref()).collect();
            if let Some((point, bary)) = linalg::project_origin_affine(&sub) {
                if bary.iter().all(|&b| b > 0.0) {
                    kappa1 = kappa1.min(norm(&point));
                }
            }
        }
    }
    Ok(SpreadCharacteristics { kappa1, kappa2, delta: 1.0 })
}

/// `max z / min z` for a strictly positive vector.
pub fn coordinate_ratio(z: &[f64]) -> Result<f64> {
    if z.is_empty() || z.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return arg("scaling vector must have strictly positive finite coordinates");
    }
    let max = z.iter().cloned().fold(f64::MIN, f64::max);
    let min = z.iter().cloned().fold(f64::MAX, f64::min);
    Ok(max / min)
}

/// Lower bounds on `(kappa1(z), kappa2(z))` for the family scaled
/// coordinate-wise by `z`:
/// `|z| kappa1 / (d delta(z))` and `|z| kappa2 / (sqrt(d) delta(z))`.
pub fn scaling_bounds(spread: &SpreadCharacteristics, z: &[f64]) -> Result<(f64, f64)> {
    let delta = coordinate_ratio(z)?;
    let d = z.len() as f64;
    let zn = norm(z);
    Ok((zn * spread.kappa1 / (d * delta), zn * spread.kappa2 / (d.sqrt() * delta)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn oriented_volume_examples() {
        assert_eq!(oriented_volume(&[[1.0, 0.0], [0.0, 1.0]]).unwrap(), 1.0);
        assert_eq!(oriented_volume(&[[0.0, 1.0], [1.0, 0.0]]).unwrap(), -1.0);
        assert_eq!(oriented_volume(&[[1.0, 2.0], [3.0, 4.0]]).unwrap(), -2.0);
        assert!(matches!(oriented_volume(&[vec![1.0, 2.0]]), Err(HedgeError::Argument(_))));
    }

    #[test]
    fn rotor_examples() {
        assert_eq!(rotor(&[[1.0, 0.0]]).unwrap(), vec![0.0, -1.0]);
        assert_eq!(rotor(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap(), vec![0.0, 0.0, 1.0]);
        assert_eq!(rotor(&[[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]).unwrap(), vec![0.0, 0.0, -1.0]);
        let empty: [[f64; 1]; 0] = [];
        assert_eq!(rotor(&empty).unwrap(), vec![1.0]);
        assert!(rotor(&[[1.0, 0.0], [0.0, 1.0]]).is_err());
    }

    #[test]
    fn rotor_tilde_examples() {
        assert_eq!(rotor_tilde(&[[1.0, 0.0], [0.0, 1.0]]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(rotor_tilde(&[[0.3, 0.7], [0.3, 0.7]]).unwrap(), vec![0.0, 0.0]);
        let e = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(rotor_tilde(&e).unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn simplex_examples() {
        let m = simplex_risk_neutral(&[[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]]).unwrap();
        for p in &m.weights {
            assert!(close(*p, 1.0 / 3.0, 1e-15));
        }
        let m = simplex_risk_neutral(&[[0.2], [-0.1]]).unwrap();
        assert!(close(m.weights[0], 1.0 / 3.0, 1e-15));
        assert!(close(m.weights[1], 2.0 / 3.0, 1e-15));
        // 2 p1 = p3, p2 = p3, sum = 1.
        let m = simplex_risk_neutral(&[[2.0, 0.0], [0.0, 1.0], [-1.0, -1.0]]).unwrap();
        assert!(close(m.weights[0], 0.2, 1e-15));
        assert!(close(m.weights[1], 0.4, 1e-15));
        assert!(close(m.weights[2], 0.4, 1e-15));
    }

    #[test]
    fn simplex_errors() {
        let e = simplex_risk_neutral(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap_err();
        assert!(matches!(e, HedgeError::Infeasible(_)));
        let e = simplex_risk_neutral(&[[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]]).unwrap_err();
        assert!(matches!(e, HedgeError::Degenerate(_)));
    }

    #[test]
    fn general_position_examples() {
        let square = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
        let r = is_general_position(&square, 2).unwrap();
        assert!(!r.independent && r.surrounds_origin);
        let r = is_general_position(&[[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]], 2).unwrap();
        assert!(r.holds());
        let fam = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let r = is_general_position(&fam, 2).unwrap();
        assert!(r.independent && !r.surrounds_origin);
        let w = r.separating_direction.unwrap();
        assert!(close(w[0], 1.0 / 2f64.sqrt(), 1e-12) && close(w[1], 1.0 / 2f64.sqrt(), 1e-12));
    }

    #[test]
    fn closed_half_space_witness() {
        // Origin on the boundary: (1,0), (-1,0) collinear, (0,1) above.
        let fam = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]];
        let r = is_general_position(&fam, 2).unwrap();
        assert!(!r.surrounds_origin);
        let w = r.separating_direction.unwrap();
        for v in &fam {
            assert!(dot(v, &w) >= -1e-12);
        }
    }

    #[test]
    fn spread_examples() {
        let s = spread_characteristics(&[[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]]).unwrap();
        assert!(close(s.kappa2, 1.0 / 5f64.sqrt(), 1e-15));
        assert!(s.kappa2 <= 1.0 / 2f64.sqrt());
        let s = spread_characteristics(&[[0.3], [-0.5]]).unwrap();
        assert!(close(s.kappa2, 0.3, 1e-15));
        assert!(close(s.kappa1, 0.3, 1e-15));
    }

    #[test]
    fn scaling_bound_examples() {
        let s = SpreadCharacteristics { kappa1: 0.6, kappa2: 0.4, delta: 1.0 };
        let (a, b) = scaling_bounds(&s, &[1.0, 1.0]).unwrap();
        assert!(close(a, 0.6 / 2f64.sqrt(), 1e-15) && close(b, 0.4, 1e-15));
        let (a, b) = scaling_bounds(&s, &[1.0, 2.0]).unwrap();
        assert!(close(a, 5f64.sqrt() * 0.6 / 4.0, 1e-15));
        assert!(close(b, 5f64.sqrt() * 0.4 / (2.0 * 2f64.sqrt()), 1e-15));
        assert!(scaling_bounds(&s, &[1.0, 0.0]).is_err());
    }
}
