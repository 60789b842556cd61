//! Small dense linear algebra used by the geometry and minmax code.
//!
//! Dimensions here are tiny (d <= 4 in practice), so everything works on
//! row-major `Vec<Vec<f64>>` without any attempt at blocking.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Determinant of a square matrix given by rows.
///
/// Uses Laplace expansion along the first row up to 4x4, which keeps the
/// result an exact polynomial in the entries (so row swaps negate it
/// bit-for-bit), and LU with partial pivoting beyond that.
pub fn det(rows: &[&[f64]]) -> f64 {
    let n = rows.len();
    match n {
        0 => 1.0,
        1 => rows[0][0],
        2 => rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0],
        3 => {
            let (a, b, c) = (rows[0], rows[1], rows[2]);
            a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
                + a[2] * (b[0] * c[1] - b[1] * c[0])
        }
        4 => {
            let mut total = 0.0;
            let mut minor: Vec<Vec<f64>> = vec![vec![0.0; 3]; 3];
            for col in 0..4 {
                for r in 1..4 {
                    let mut k = 0;
                    for c in 0..4 {
                        if c != col {
                            minor[r - 1][k] = rows[r][c];
                            k += 1;
                        }
                    }
                }
                let m: Vec<&[f64]> = minor.iter().map(|r| r.as_slice()).collect();
                let sign = if col % 2 == 0 { 1.0 } else { -1.0 };
                total += sign * rows[0][col] * det(&m);
            }
            total
        }
        _ => det_lu(rows),
    }
}

fn det_lu(rows: &[&[f64]]) -> f64 {
    let n = rows.len();
    let mut a: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
    let mut sign = 1.0;
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        if a[p][k] == 0.0 {
            return 0.0;
        }
        if p != k {
            a.swap(p, k);
            sign = -sign;
        }
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
        }
    }
    sign * (0..n).map(|i| a[i][i]).product::<f64>()
}

/// LU factorisation with partial pivoting of a square matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Vec<Vec<f64>>,
    perm: Vec<usize>,
}

impl Lu {
    /// Factorises `a`; returns `None` when a pivot falls below
    /// `rel_tol` times the largest entry.
    pub fn new(a: &[Vec<f64>], rel_tol: f64) -> Option<Self> {
        let n = a.len();
        let mut lu: Vec<Vec<f64>> = a.to_vec();
        let scale = lu.iter().map(|r| max_abs(r)).fold(0.0, f64::max);
        if scale == 0.0 && n > 0 {
            return None;
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| lu[i][k].abs().total_cmp(&lu[j][k].abs()))
                .unwrap();
            if lu[p][k].abs() <= rel_tol * scale {
                return None;
            }
            lu.swap(p, k);
            perm.swap(p, k);
            for i in k + 1..n {
                let f = lu[i][k] / lu[k][k];
                lu[i][k] = f;
                for j in k + 1..n {
                    lu[i][j] -= f * lu[k][j];
                }
            }
        }
        Some(Self { lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.len();
        let mut x: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[i][j] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[i][j] * x[j];
            }
            x[i] /= self.lu[i][i];
        }
        x
    }
}

/// Solves `a x = b`, or `None` if `a` is numerically singular.
pub fn solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    Lu::new(a, 1e-14).map(|lu| lu.solve(b))
}

/// Numerical rank of the row set.
pub fn rank<V: AsRef<[f64]>>(rows: &[V], rel_tol: f64) -> usize {
    orthonormal_basis(rows, rel_tol).len()
}

/// Modified Gram-Schmidt on the rows, dropping those that are dependent
/// up to `rel_tol` relative to their own length.
pub fn orthonormal_basis<V: AsRef<[f64]>>(rows: &[V], rel_tol: f64) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        let r = r.as_ref();
        let len = norm(r);
        if len == 0.0 {
            continue;
        }
        let mut v = r.to_vec();
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&v, q);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
        let n = norm(&v);
        if n > rel_tol * len {
            basis.push(v.iter().map(|x| x / n).collect());
        }
    }
    basis
}

/// A unit vector orthogonal to every row, if the rows do not span the space.
pub fn null_vector<V: AsRef<[f64]>>(rows: &[V], dim: usize, rel_tol: f64) -> Option<Vec<f64>> {
    let basis = orthonormal_basis(rows, rel_tol);
    if basis.len() >= dim {
        return None;
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for j in 0..dim {
        let mut v = vec![0.0; dim];
        v[j] = 1.0;
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&v, q);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
        let n = norm(&v);
        if best.as_ref().map_or(true, |(bn, _)| n > *bn) {
            best = Some((n, v));
        }
    }
    best.map(|(n, v)| v.iter().map(|x| x / n).collect())
}

/// Orthogonal projection of the origin onto the affine hull of `points`.
///
/// Returns the projected point and its barycentric coordinates, or `None`
/// when the points are affinely dependent.
pub fn project_origin_affine<V: AsRef<[f64]>>(points: &[V]) -> Option<(Vec<f64>, Vec<f64>)> {
    let m = points.len();
    if m == 0 {
        return None;
    }
    let x0 = points[0].as_ref();
    if m == 1 {
        return Some((x0.to_vec(), vec![1.0]));
    }
    let dirs: Vec<Vec<f64>> = points[1..].iter().map(|p| sub(p.as_ref(), x0)).collect();
    let gram: Vec<Vec<f64>> = dirs
        .iter()
        .map(|a| dirs.iter().map(|b| dot(a, b)).collect())
        .collect();
    let rhs: Vec<f64> = dirs.iter().map(|a| -dot(a, x0)).collect();
    let mu = Lu::new(&gram, 1e-12)?.solve(&rhs);
    let mut point = x0.to_vec();
    for (c, dir) in mu.iter().zip(&dirs) {
        for (p, v) in point.iter_mut().zip(dir) {
            *p += c * v;
        }
    }
    let mut bary = Vec::with_capacity(m);
    bary.push(1.0 - mu.iter().sum::<f64>());
    bary.extend_from_slice(&mu);
    Some((point, bary))
}

/// Iterator over all `k`-subsets of `0..n` in lexicographic order.
pub struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Self {
        Self { n, idx: (0..k).collect(), done: k > n }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}
