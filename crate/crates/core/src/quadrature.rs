//! Adaptive Gauss-Kronrod (7/15) quadrature.
//!
//! Globally adaptive: the interval with the largest error estimate is
//! bisected until the summed estimate meets the tolerance. Kinks in option
//! payoffs are handled by bisection without having to be located.

use std::collections::BinaryHeap;

use crate::error::{arg, HedgeError, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

pub const MAX_INTERVALS: usize = 5000;
pub const INITIAL_PIECES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

fn rule(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

// Value from the two halves; the error is the larger of the Gauss/Kronrod
// gap and the disagreement with the whole-interval rule. The gap alone
// misses kinks sitting near the midpoint.
fn kronrod(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let m = 0.5 * (a + b);
    let (whole, _) = rule(f, a, b);
    let (l, el) = rule(f, a, m);
    let (r, er) = rule(f, m, b);
    (l + r, (el + er).max((l + r - whole).abs()))
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&o.error)
    }
}

/// `int_a^b f` to `max(abs_tol, rel_tol |value|)`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<Estimate> {
    if !(a.is_finite() && b.is_finite()) || a > b {
        return arg("integration bounds must be finite and ordered");
    }
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0, intervals: 0 });
    }
    let mut heap = BinaryHeap::new();
    let (mut total, mut err) = (0.0, 0.0);
    let h = (b - a) / INITIAL_PIECES as f64;
    for i in 0..INITIAL_PIECES {
        let lo = a + h * i as f64;
        let hi = if i + 1 == INITIAL_PIECES { b } else { lo + h };
        let (v, e) = kronrod(f, lo, hi);
        total += v;
        err += e;
        heap.push(Piece { a: lo, b: hi, value: v, error: e });
    }
    loop {
        if !total.is_finite() {
            return Err(HedgeError::Numeric("integrand is not finite".into()));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(Estimate { value: total, error: err, intervals: heap.len() });
        }
        if heap.len() >= MAX_INTERVALS {
            return Err(HedgeError::Numeric(format!(
                "quadrature did not reach tolerance: estimate {total}, error {err:e}"
            )));
        }
        let p = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (p.a + p.b);
        let (v1, e1) = kronrod(f, p.a, mid);
        let (v2, e2) = kronrod(f, mid, p.b);
        total += v1 + v2 - p.value;
        err += e1 + e2 - p.error;
        heap.push(Piece { a: p.a, b: mid, value: v1, error: e1 });
        heap.push(Piece { a: mid, b: p.b, value: v2, error: e2 });
        // Recompute sums now and then to shed accumulated rounding.
        if heap.len() % 64 == 0 {
            total = heap.iter().map(|p| p.value).sum();
            err = heap.iter().map(|p| p.error).sum();
        }
    }
}

/// Standard normal density.
pub fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Truncation of standard normal integrals; the tail mass beyond is
/// below 1e-32.
pub const NORMAL_CUTOFF: f64 = 12.0;

/// `E g(X)` for standard normal `X`, truncated at [`NORMAL_CUTOFF`].
pub fn normal_expectation(g: &dyn Fn(f64) -> f64, rel_tol: f64) -> Result<Estimate> {
    let h = |x: f64| phi(x) * g(x);
    integrate(&h, -NORMAL_CUTOFF, NORMAL_CUTOFF, rel_tol, 1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_and_kinks() {
        let e = integrate(&|x| x.powi(5) - 2.0 * x, 0.0, 2.0, 1e-14, 0.0).unwrap();
        assert!((e.value - (64.0 / 6.0 - 4.0)).abs() < 1e-13);
        let e = integrate(&|x: f64| (x - 0.3).abs(), -1.0, 1.0, 1e-12, 1e-15).unwrap();
        assert!((e.value - (1.3f64.powi(2) + 0.7f64.powi(2)) / 2.0).abs() < 1e-11);
    }

    #[test]
    fn normal_moments() {
        let m0 = normal_expectation(&|_| 1.0, 1e-13).unwrap().value;
        let m2 = normal_expectation(&|x| x * x, 1e-13).unwrap().value;
        assert!((m0 - 1.0).abs() < 1e-13 && (m2 - 1.0).abs() < 1e-12);
        let lognormal = normal_expectation(&|x| (0.3 * x).exp(), 1e-13).unwrap().value;
        assert!((lognormal - (0.045f64).exp()).abs() < 1e-12);
    }
}
