//! A small dense two-phase simplex solver.
//!
//! Problems here have at most a few dozen rows and columns (interior tests
//! and hedge-vector feasibility for J <= 4), so a plain tableau with
//! Bland's anti-cycling rule is plenty.

use crate::linalg::max_abs;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

const PIVOT_EPS: f64 = 1e-12;
const COST_EPS: f64 = 1e-11;

struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        self.rhs[r] /= p;
        for i in 0..self.rows.len() {
            if i != r {
                let f = self.rows[i][c];
                if f != 0.0 {
                    for j in 0..self.rows[i].len() {
                        self.rows[i][j] -= f * self.rows[r][j];
                    }
                    self.rhs[i] -= f * self.rhs[r];
                }
            }
        }
        self.basis[r] = c;
    }

    /// Runs primal simplex for `min cost . x` over the first `ncols`
    /// columns. Returns false when unbounded.
    fn optimize(&mut self, cost: &[f64], ncols: usize) -> bool {
        let scale = 1.0 + max_abs(cost);
        for _ in 0..10_000 {
            let mut entering = None;
            for j in 0..ncols {
                if self.basis.contains(&j) {
                    continue;
                }
                let mut reduced = cost[j];
                for (i, &b) in self.basis.iter().enumerate() {
                    reduced -= cost[b] * self.rows[i][j];
                }
                if reduced < -COST_EPS * scale {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else { return true };
            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][c];
                if a > PIVOT_EPS {
                    let ratio = self.rhs[i] / a;
                    leaving = match leaving {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-15
                                || (ratio <= lr + 1e-15 && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            match leaving {
                None => return false,
                Some((r, _)) => self.pivot(r, c),
            }
        }
        true
    }
}

/// Solves `min c.x` subject to `a x = b`, `x >= 0`.
pub fn minimize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> LpOutcome {
    let m = a.len();
    let n = c.len();
    let mut rows = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = a[i].clone();
        row.resize(n + m, 0.0);
        row[n + i] = 1.0;
        let mut bi = b[i];
        if bi < 0.0 {
            for v in row.iter_mut().take(n) {
                *v = -*v;
            }
            bi = -bi;
        }
        rows.push(row);
        rhs.push(bi);
    }
    let mut t = Tableau { rows, rhs, basis: (n..n + m).collect() };

    let mut phase1 = vec![0.0; n + m];
    for v in phase1.iter_mut().skip(n) {
        *v = 1.0;
    }
    t.optimize(&phase1, n + m);
    let infeas: f64 = t
        .basis
        .iter()
        .zip(&t.rhs)
        .filter(|(&bv, _)| bv >= n)
        .map(|(_, &v)| v)
        .sum();
    let bscale = 1.0 + max_abs(b);
    if infeas > 1e-9 * bscale {
        return LpOutcome::Infeasible;
    }

    // Drive remaining artificials out of the basis; drop redundant rows.
    let mut i = 0;
    while i < t.rows.len() {
        if t.basis[i] >= n {
            let col = (0..n).find(|&j| t.rows[i][j].abs() > 1e-9);
            match col {
                Some(j) => {
                    t.pivot(i, j);
                    i += 1;
                }
                None => {
                    t.rows.remove(i);
                    t.rhs.remove(i);
                    t.basis.remove(i);
                }
            }
        } else {
            i += 1;
        }
    }

    let mut cost = c.to_vec();
    cost.resize(n + m, 0.0);
    if !t.optimize(&cost, n) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for (i, &bv) in t.basis.iter().enumerate() {
        if bv < n {
            x[bv] = t.rhs[i].max(0.0);
        }
    }
    let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    LpOutcome::Optimal { x, value }
}

/// Finds a free vector `g` with `(v_i, g) <= h_i` for every row, minimising
/// the l1 norm of `g`. Used to recover hedge vectors when the active
/// extreme measure has fewer than d + 1 atoms.
pub fn free_feasible_min_l1(vectors: &[Vec<f64>], h: &[f64]) -> Option<Vec<f64>> {
    let d = vectors.first().map_or(0, |v| v.len());
    let k = vectors.len();
    // Variables: g+ (d), g- (d), slack (k).
    let n = 2 * d + k;
    let mut a = Vec::with_capacity(k);
    for (i, v) in vectors.iter().enumerate() {
        let mut row = vec![0.0; n];
        for j in 0..d {
            row[j] = v[j];
            row[d + j] = -v[j];
        }
        row[2 * d + i] = 1.0;
        a.push(row);
    }
    let mut c = vec![0.0; n];
    for v in c.iter_mut().take(2 * d) {
        *v = 1.0;
    }
    match minimize(&c, &a, h) {
        LpOutcome::Optimal { x, .. } => Some((0..d).map(|j| x[j] - x[d + j]).collect()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_lp() {
        // min -x - y st x + 2y + s1 = 4, 3x + y + s2 = 6
        let a = vec![vec![1.0, 2.0, 1.0, 0.0], vec![3.0, 1.0, 0.0, 1.0]];
        let out = minimize(&[-1.0, -1.0, 0.0, 0.0], &a, &[4.0, 6.0]);
        match out {
            LpOutcome::Optimal { x, value } => {
                assert!((value + 2.8).abs() < 1e-12);
                assert!((x[0] - 1.6).abs() < 1e-12 && (x[1] - 1.2).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn infeasible_and_unbounded() {
        let a = vec![vec![1.0, 1.0]];
        assert_eq!(minimize(&[0.0, 0.0], &a, &[-1.0]), LpOutcome::Infeasible);
        let a = vec![vec![1.0, -1.0]];
        assert_eq!(minimize(&[-1.0, 0.0], &a, &[1.0]), LpOutcome::Unbounded);
    }

    #[test]
    fn redundant_rows() {
        let a = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
        match minimize(&[1.0, 2.0], &a, &[1.0, 2.0]) {
            LpOutcome::Optimal { value, .. } => assert!((value - 1.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn free_vector_feasibility() {
        let g = free_feasible_min_l1(&[vec![1.0], vec![-1.0]], &[2.0, -1.0]).unwrap();
        assert!(g[0] >= 1.0 - 1e-12 && g[0] <= 2.0 + 1e-12);
        assert!((g[0] - 1.0).abs() < 1e-12);
    }
}
