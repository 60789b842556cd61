//! Rainbow payoffs, structural checks and power-function fits.

use std::fmt;
use std::sync::Arc;

use crate::error::{arg, Result};

pub type PayoffFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PayoffKind {
    /// `max(S1, ..., SJ, K)`
    BestOf,
    /// `max(0, max(S1, ..., SJ) - K)`
    CallOnMax,
    /// `max(0, S1 - K1, ..., SJ - KJ)`
    MultiStrike,
    /// `max(0, n1 S1 + ... + nJ SJ - K)`
    Portfolio,
    /// `max(0, S2 - S1 - K)`
    Spread,
    /// `c * S1^i1 * ... * SJ^iJ`
    Power,
    Custom,
}

impl PayoffKind {
    pub fn name(self) -> &'static str {
        match self {
            PayoffKind::BestOf => "best-of",
            PayoffKind::CallOnMax => "call-on-max",
            PayoffKind::MultiStrike => "multi-strike",
            PayoffKind::Portfolio => "portfolio",
            PayoffKind::Spread => "spread",
            PayoffKind::Power => "power",
            PayoffKind::Custom => "custom",
        }
    }
}

/// Parameters for [`make_payoff`]; which fields are needed depends on the kind.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PayoffParams {
    pub strike: Option<f64>,
    pub strikes: Option<Vec<f64>>,
    pub weights: Option<Vec<f64>>,
    pub exponents: Option<Vec<u32>>,
    pub coeff: Option<f64>,
}

/// An evaluable payoff on positive price vectors.
#[derive(Clone)]
pub struct Payoff {
    pub kind: PayoffKind,
    pub params: PayoffParams,
    eval: PayoffFn,
    /// `None` when the property is not known.
    pub convex: Option<bool>,
    pub submodular: Option<bool>,
}

impl fmt::Debug for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Payoff")
            .field("kind", &self.kind)
            .field("params", &self.params)
            .field("convex", &self.convex)
            .field("submodular", &self.submodular)
            .finish()
    }
}

impl Payoff {
    pub fn eval(&self, z: &[f64]) -> f64 {
        (self.eval)(z)
    }

    pub fn function(&self) -> PayoffFn {
        self.eval.clone()
    }

    pub fn custom(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            kind: PayoffKind::Custom,
            params: PayoffParams::default(),
            eval: Arc::new(f),
            convex: None,
            submodular: None,
        }
    }

    pub fn with_flags(mut self, convex: Option<bool>, submodular: Option<bool>) -> Self {
        self.convex = convex;
        self.submodular = submodular;
        self
    }

    pub fn power(coeff: f64, exponents: Vec<u32>) -> Self {
        let e = exponents.clone();
        Self {
            kind: PayoffKind::Power,
            params: PayoffParams { exponents: Some(exponents), coeff: Some(coeff), ..Default::default() },
            eval: Arc::new(move |z: &[f64]| coeff * power_monomial(&e, z)),
            convex: None,
            submodular: None,
        }
    }
}

pub fn power_monomial(exponents: &[u32], z: &[f64]) -> f64 {
    exponents.iter().zip(z).map(|(&e, &x)| x.powi(e as i32)).product()
}

fn need<T: Clone>(v: &Option<T>, what: &str, kind: PayoffKind) -> Result<T> {
    match v {
        Some(x) => Ok(x.clone()),
        None => arg(format!("{} payoff needs {what}", kind.name())),
    }
}

/// Builds one of the named payoffs.
pub fn make_payoff(kind: PayoffKind, params: PayoffParams) -> Result<Payoff> {
    let (eval, submodular): (PayoffFn, Option<bool>) = match kind {
        PayoffKind::BestOf => {
            let k = need(&params.strike, "a strike", kind)?;
            (Arc::new(move |z: &[f64]| z.iter().cloned().fold(k, f64::max)), Some(true))
        }
        PayoffKind::CallOnMax => {
            let k = need(&params.strike, "a strike", kind)?;
            (
                Arc::new(move |z: &[f64]| (z.iter().cloned().fold(f64::MIN, f64::max) - k).max(0.0)),
                Some(true),
            )
        }
        PayoffKind::MultiStrike => {
            let ks = need(&params.strikes, "per-asset strikes", kind)?;
            (
                Arc::new(move |z: &[f64]| z.iter().zip(&ks).map(|(x, k)| x - k).fold(0.0, f64::max)),
                Some(true),
            )
        }
        PayoffKind::Portfolio => {
            let k = need(&params.strike, "a strike", kind)?;
            let w = need(&params.weights, "weights", kind)?;
            (
                Arc::new(move |z: &[f64]| (z.iter().zip(&w).map(|(x, n)| x * n).sum::<f64>() - k).max(0.0)),
                None,
            )
        }
        PayoffKind::Spread => {
            let k = need(&params.strike, "a strike", kind)?;
            (Arc::new(move |z: &[f64]| (z[1] - z[0] - k).max(0.0)), Some(true))
        }
        PayoffKind::Power => {
            let e = need(&params.exponents, "exponents", kind)?;
            let c = params.coeff.unwrap_or(1.0);
            return Ok(Payoff::power(c, e));
        }
        PayoffKind::Custom => return arg("custom payoffs are built with Payoff::custom"),
    };
    if let Some(s) = &params.strikes {
        if s.iter().any(|x| !x.is_finite()) {
            return arg("strikes must be finite");
        }
    }
    Ok(Payoff { kind, params, eval, convex: Some(true), submodular })
}

/// Result of a sub-modularity scan.
#[derive(Debug, Clone, PartialEq)]
pub struct SubmodularReport {
    pub passed: bool,
    /// Largest positive mixed difference found (0 when none).
    pub worst_violation: f64,
    /// Largest mixed difference of any sign.
    pub max_mixed_difference: f64,
    /// Coordinate pair and lower cell corner of the worst violation.
    pub worst_at: Option<(usize, usize, Vec<f64>)>,
}

fn grid_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn validate_box(lo: &[f64], hi: &[f64]) -> Result<()> {
    if lo.len() != hi.len() || lo.is_empty() {
        return arg("box bounds must be non-empty and of equal length");
    }
    if lo.iter().zip(hi).any(|(&a, &b)| !(a > 0.0) || !(b >= a)) {
        return arg("box must be strictly positive with lo <= hi");
    }
    Ok(())
}

/// Scans adjacent grid cells for the rectangle inequality
/// `f(a_i, b_j) + f(b_i, a_j) >= f(a_i, a_j) + f(b_i, b_j)` on every
/// coordinate pair, i.e. non-positive mixed differences. Coordinates
/// outside the pair are held at the box corners and midpoint.
///
/// (A printed variant of this inequality that mixes up its arguments is
/// sometimes quoted; the form here is the one equivalent to a non-positive
/// mixed second derivative.)
pub fn check_submodular(p: &Payoff, lo: &[f64], hi: &[f64], grid: usize) -> Result<SubmodularReport> {
    validate_box(lo, hi)?;
    if grid < 2 {
        return arg("grid needs at least two points per coordinate");
    }
    let dim = lo.len();
    let axes: Vec<Vec<f64>> = (0..dim).map(|j| grid_points(lo[j], hi[j], grid)).collect();
    let others: Vec<Vec<f64>> = (0..dim).map(|j| grid_points(lo[j], hi[j], 3)).collect();
    let scale = {
        let mid: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
        1.0 + p.eval(&mid).abs() + p.eval(hi).abs()
    };
    let tol = 1e-12 * scale;
    let mut worst = 0.0_f64;
    let mut max_mixed = f64::NEG_INFINITY;
    let mut worst_at = None;
    for i in 0..dim {
        for j in i + 1..dim {
            let rest: Vec<usize> = (0..dim).filter(|&k| k != i && k != j).collect();
            let combos = 3usize.pow(rest.len() as u32);
            for c in 0..combos {
                let mut z = vec![0.0; dim];
                let mut code = c;
                for &k in &rest {
                    z[k] = others[k][code % 3];
                    code /= 3;
                }
                for a in 0..grid - 1 {
                    for b in 0..grid - 1 {
                        let (ai, bi) = (axes[i][a], axes[i][a + 1]);
                        let (aj, bj) = (axes[j][b], axes[j][b + 1]);
                        let mut at = |x: f64, y: f64| {
                            z[i] = x;
                            z[j] = y;
                            p.eval(&z)
                        };
                        let mixed = at(bi, bj) + at(ai, aj) - at(ai, bj) - at(bi, aj);
                        max_mixed = max_mixed.max(mixed);
                        if mixed > worst {
                            worst = mixed;
                            z[i] = ai;
                            z[j] = aj;
                            worst_at = Some((i, j, z.clone()));
                        }
                    }
                }
            }
        }
    }
    if dim < 2 {
        max_mixed = 0.0;
    }
    Ok(SubmodularReport { passed: worst <= tol, worst_violation: worst, max_mixed_difference: max_mixed, worst_at })
}

/// A fit `scale + coeff * z1^i1 ... zJ^iJ` with its certified sample error.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerFit {
    pub exponents: Vec<u32>,
    pub scale: f64,
    pub coeff: f64,
    pub sup_error: f64,
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
}

impl PowerFit {
    pub fn eval(&self, z: &[f64]) -> f64 {
        self.scale + self.coeff * power_monomial(&self.exponents, z)
    }
}

fn sample_box(lo: &[f64], hi: &[f64], grid: usize) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = lo.iter().zip(hi).map(|(&a, &b)| grid_points(a, b, grid)).collect();
    let total: usize = axes.iter().map(|a| a.len()).product();
    (0..total)
        .map(|mut c| {
            axes.iter()
                .map(|a| {
                    let x = a[c % a.len()];
                    c /= a.len();
                    x
                })
                .collect()
        })
        .collect()
}

/// Half the spread of `f - c g` over the samples: the best sup error for
/// a fixed `c` once the constant is chosen optimally.
fn fit_error(f: &[f64], g: &[f64], c: f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (a, b) in f.iter().zip(g) {
        let r = a - c * b;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    (0.5 * (hi - lo), 0.5 * (hi + lo))
}

/// Least-max fit of `scale + coeff * z^i` over a sampled box, trying every
/// exponent vector with entries in `0..=budget`.
///
/// For fixed exponents the sup error is a convex function of `coeff`
/// (the constant is then the mid-range of the residual), minimised by
/// golden-section search. Ties between exponent vectors go to the first
/// in lexicographic order.
pub fn power_fit(p: &Payoff, lo: &[f64], hi: &[f64], budget: u32, grid: usize) -> Result<PowerFit> {
    validate_box(lo, hi)?;
    if grid < 2 {
        return arg("grid needs at least two points per coordinate");
    }
    let samples = sample_box(lo, hi, grid);
    let f: Vec<f64> = samples.iter().map(|z| p.eval(z)).collect();
    let f_range = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - f.iter().cloned().fold(f64::INFINITY, f64::min);
    let dim = lo.len();
    let n_exp = (budget as usize + 1).pow(dim as u32);
    let mut best: Option<PowerFit> = None;
    for code in 0..n_exp {
        let mut c = code;
        let mut exps = vec![0u32; dim];
        // Most significant digit first so the order is lexicographic.
        for e in exps.iter_mut().rev() {
            *e = (c % (budget as usize + 1)) as u32;
            c /= budget as usize + 1;
        }
        let g: Vec<f64> = samples.iter().map(|z| power_monomial(&exps, z)).collect();
        let g_range = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - g.iter().cloned().fold(f64::INFINITY, f64::min);
        let (err, scale, coeff) = if g_range <= 1e-14 * g[0].abs().max(1e-300) {
            let (e, mid) = fit_error(&f, &g, 0.0);
            (e, 0.0, mid / g[0])
        } else {
            let bound = 2.0 * f_range / g_range + 1e-300;
            let (mut a, mut b) = (-bound, bound);
            let phi = 0.5 * (5f64.sqrt() - 1.0);
            let mut x1 = b - phi * (b - a);
            let mut x2 = a + phi * (b - a);
            let mut e1 = fit_error(&f, &g, x1).0;
            let mut e2 = fit_error(&f, &g, x2).0;
            for _ in 0..200 {
                if (b - a) <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
                    break;
                }
                if e1 <= e2 {
                    b = x2;
                    x2 = x1;
                    e2 = e1;
                    x1 = b - phi * (b - a);
                    e1 = fit_error(&f, &g, x1).0;
                } else {
                    a = x1;
                    x1 = x2;
                    e1 = e2;
                    x2 = a + phi * (b - a);
                    e2 = fit_error(&f, &g, x2).0;
                }
            }
            let c = if e1 <= e2 { x1 } else { x2 };
            let (e, mid) = fit_error(&f, &g, c);
            (e, mid, c)
        };
        let better = match &best {
            None => true,
            Some(b) => err < b.sup_error - 1e-14 * (1.0 + f_range),
        };
        if better {
            best = Some(PowerFit {
                exponents: exps,
                scale,
                coeff,
                sup_error: err,
                box_lo: lo.to_vec(),
                box_hi: hi.to_vec(),
            });
        }
    }
    // Certify on the samples with the final parameters.
    let mut fit = best.expect("at least the zero exponent is tried");
    fit.sup_error = samples
        .iter()
        .zip(&f)
        .map(|(z, v)| (v - fit.eval(z)).abs())
        .fold(0.0, f64::max);
    Ok(fit)
}
