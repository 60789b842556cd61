//! Continuous-time limits of the interval model with
//! `u_i = 1 + sigma_i sqrt(tau)`, `d_i = 1 - sigma_i sqrt(tau)`,
//! `rho = 1 + r tau`.
//!
//! For two assets and a sub-modular payoff the upper price solves the
//! degenerate equation
//!
//! ```text
//! r f = f_t + r (z, f_z) + 1/2 [s1^2 z1^2 f_11 - 2 s1 s2 z1 z2 f_12 + s2^2 z2^2 f_22]
//! ```
//!
//! and the lower price the same with `+2` at the mixed term. In log prices
//! `y_i = log z_i` both are constant-coefficient equations with drift
//! `r - s_i^2 / 2` and a rank-one diffusion along `(s1, -s2)` (upper) or
//! `(s1, s2)` (lower). The Green function is therefore a Dirac factor
//! along the orthogonal direction times a one-dimensional Gaussian:
//! with `s = T - t` and `X` standard normal,
//!
//! ```text
//! f_u(t, z) = e^{-r s} E f_T(z1 e^{m1 s + s1 sqrt(s) X}, z2 e^{m2 s - s2 sqrt(s) X})
//! f_l(t, z) = e^{-r s} E f_T(z1 e^{m1 s + s1 sqrt(s) X}, z2 e^{m2 s + s2 sqrt(s) X})
//! ```
//!
//! with `m_i = r - s_i^2 / 2`. Integrating the Dirac factor out in `w2`
//! leaves the density `e^{-r s} phi(x) / (s1 sqrt(s) w1)` in `w1`, whose
//! Jacobian is absorbed by the change of variables to `x`. The
//! complete-market price (no mixed term) uses two independent normals.

use rayon::prelude::*;

use crate::error::{arg, HedgeError, Result};
use crate::lattice::{price_european_with, MarketSpec, PricingOptions, StepGeometry};
use crate::minmax::{GeometryMode, Sense};
use crate::payoffs::{Payoff, PayoffFn};
use crate::quadrature::{integrate, normal_expectation, phi, NORMAL_CUTOFF};

/// Relative tolerance of the Green-function quadratures.
pub const QUAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumSpec {
    pub sigma: Vec<f64>,
    pub r: f64,
    pub maturity: f64,
    /// Jump scaling exponent: increments of order `tau^alpha`.
    pub alpha: f64,
}

impl ContinuumSpec {
    pub fn new(sigma: Vec<f64>, r: f64, maturity: f64, alpha: f64) -> Result<Self> {
        if sigma.is_empty() || sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return arg("volatilities must be positive");
        }
        if !(r.is_finite() && r >= 0.0) {
            return arg("rate must be non-negative");
        }
        if !(maturity.is_finite() && maturity > 0.0) {
            return arg("maturity must be positive");
        }
        if !(0.5..=1.0).contains(&alpha) {
            return arg("jump exponent must lie in [1/2, 1]");
        }
        Ok(Self { sigma, r, maturity, alpha })
    }

    pub fn assets(&self) -> usize {
        self.sigma.len()
    }

    fn remaining(&self, t: f64) -> Result<f64> {
        if !(t.is_finite() && t >= 0.0 && t <= self.maturity) {
            return arg(format!("time {t} outside [0, T]"));
        }
        Ok(self.maturity - t)
    }

    /// Lattice with step `tau`.
    pub fn market(&self, tau: f64, steps: usize) -> Result<MarketSpec> {
        let h = tau.sqrt();
        let d: Vec<f64> = self.sigma.iter().map(|s| 1.0 - s * h).collect();
        if d.iter().any(|x| *x <= 0.0) {
            return arg(format!("step τ = {tau} gives a non-positive down factor"));
        }
        let u = self.sigma.iter().map(|s| 1.0 + s * h).collect();
        MarketSpec::new(d, u, 1.0 + self.r * tau, steps)
    }
}

/// Limit for `alpha > 1/2`, where the diffusion term vanishes:
/// `f(t, z) = e^{-r s} f_T(e^{r s} z)`, `s = T - t`.
pub fn first_order_price(f: &dyn Fn(&[f64]) -> f64, z: &[f64], t: f64, spec: &ContinuumSpec) -> Result<f64> {
    if spec.alpha <= 0.5 {
        return Err(HedgeError::Precondition {
            msg: "the first-order limit needs α > 1/2".into(),
            max_admissible: None,
        });
    }
    let s = spec.remaining(t)?;
    let g = (spec.r * s).exp();
    let w: Vec<f64> = z.iter().map(|x| x * g).collect();
    Ok(f(&w) / g)
}

/// First-order price plus the running cost source:
/// `e^{-r s} f_T(e^{r s} z) + int_0^s e^{-r v} psi(e^{r v} z) dv`.
pub fn duhamel_cost_price(
    f: &dyn Fn(&[f64]) -> f64,
    z: &[f64],
    t: f64,
    spec: &ContinuumSpec,
    psi: &dyn Fn(&[f64]) -> f64,
) -> Result<f64> {
    if spec.alpha != 1.0 {
        return Err(HedgeError::Precondition { msg: "the cost limit needs α = 1".into(), max_admissible: None });
    }
    let s = spec.remaining(t)?;
    let head = first_order_price(f, z, t, spec)?;
    let r = spec.r;
    let integrand = |v: f64| {
        let g = (r * v).exp();
        let w: Vec<f64> = z.iter().map(|x| x * g).collect();
        psi(&w) / g
    };
    Ok(head + integrate(&integrand, 0.0, s, 1e-13, 1e-15)?.value)
}

/// Which Green function to integrate against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// `G^-`: perfectly anti-correlated log prices, the upper price.
    Upper,
    /// `G^+`: perfectly correlated log prices, the lower price.
    Lower,
    /// Independent log prices, the complete-market price.
    Complete,
}

#[derive(Clone)]
pub struct GreenFunctionQuery {
    pub which: Kernel,
    pub t: f64,
    pub z: Vec<f64>,
    pub payoff: PayoffFn,
}

fn terminal(z: f64, sigma: f64, r: f64, s: f64, x: f64) -> f64 {
    z * ((r - 0.5 * sigma * sigma) * s + sigma * s.sqrt() * x).exp()
}

/// `int int G(z; w) f_T(w) dw` for two assets.
pub fn green_price(q: &GreenFunctionQuery, spec: &ContinuumSpec) -> Result<f64> {
    if spec.assets() != 2 || q.z.len() != 2 {
        return arg("Green-function prices are defined for two assets");
    }
    let s = spec.remaining(q.t)?;
    if s == 0.0 {
        return Ok((q.payoff)(&q.z));
    }
    let (s1, s2, r) = (spec.sigma[0], spec.sigma[1], spec.r);
    let (z1, z2) = (q.z[0], q.z[1]);
    let f = &q.payoff;
    let value = match q.which {
        Kernel::Upper | Kernel::Lower => {
            let sign = if q.which == Kernel::Upper { -1.0 } else { 1.0 };
            let g = |x: f64| f(&[terminal(z1, s1, r, s, x), terminal(z2, s2, r, s, sign * x)]);
            normal_expectation(&g, QUAD_TOL)?.value
        }
        Kernel::Complete => {
            let inner = |x: f64| -> f64 {
                let w1 = terminal(z1, s1, r, s, x);
                let g = |y: f64| f(&[w1, terminal(z2, s2, r, s, y)]);
                normal_expectation(&g, QUAD_TOL).map(|e| e.value).unwrap_or(f64::NAN)
            };
            normal_expectation(&inner, QUAD_TOL)?.value
        }
    };
    if !value.is_finite() {
        return Err(HedgeError::Numeric("Green-function quadrature failed".into()));
    }
    Ok((-r * s).exp() * value)
}

/// Total mass of a reduced kernel, integrated in `w1` over
/// `+-12` standard deviations; equals `e^{-r s}` up to quadrature error.
pub fn kernel_mass(which: Kernel, t: f64, z: &[f64], spec: &ContinuumSpec) -> Result<f64> {
    if spec.assets() != 2 || z.len() != 2 {
        return arg("kernels are defined for two assets");
    }
    let s = spec.remaining(t)?;
    if s == 0.0 {
        return Ok(1.0);
    }
    let (s1, r) = (spec.sigma[0], spec.r);
    let sd = s1 * s.sqrt();
    let mean = z[0].ln() + (r - 0.5 * s1 * s1) * s;
    // Density in w1 after the Dirac factor is integrated out; in the
    // variable y = log w1 the factor w1 cancels.
    let density_w1 = |w1: f64| (-r * s).exp() * phi((w1.ln() - mean) / sd) / (sd * w1);
    let in_log = |y: f64| {
        let w1 = y.exp();
        density_w1(w1) * w1
    };
    let lo = mean - NORMAL_CUTOFF * sd;
    let hi = mean + NORMAL_CUTOFF * sd;
    let mass = match which {
        Kernel::Upper | Kernel::Lower => integrate(&in_log, lo, hi, 1e-13, 1e-300)?.value,
        Kernel::Complete => {
            let s2 = spec.sigma[1];
            let sd2 = s2 * s.sqrt();
            let inner = |_: f64| {
                integrate(&|y2: f64| phi(y2 / sd2) / sd2, -NORMAL_CUTOFF * sd2, NORMAL_CUTOFF * sd2, 1e-13, 1e-300)
                    .map(|e| e.value)
                    .unwrap_or(f64::NAN)
            };
            integrate(&|y: f64| in_log(y) * inner(y), lo, hi, 1e-13, 1e-300)?.value
        }
    };
    Ok(mass)
}

/// One-asset price `e^{-r s} E f_T(z e^{(r - sigma^2/2) s + sigma sqrt(s) X})`.
pub fn lognormal_price(f: &dyn Fn(&[f64]) -> f64, z: f64, t: f64, spec: &ContinuumSpec) -> Result<f64> {
    if spec.assets() != 1 {
        return arg("lognormal price is for one asset");
    }
    let s = spec.remaining(t)?;
    if s == 0.0 {
        return Ok(f(&[z]));
    }
    let (sg, r) = (spec.sigma[0], spec.r);
    let g = |x: f64| f(&[terminal(z, sg, r, s, x)]);
    Ok((-r * s).exp() * normal_expectation(&g, QUAD_TOL)?.value)
}

/// Values on a rectangular grid in log prices; the first coordinate varies
/// fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeGrid {
    /// `log z` nodes per asset, equally spaced.
    pub axes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

impl PdeGrid {
    /// Grid over `[log lo_j, log hi_j]` with `nodes` points per axis,
    /// filled with `f`.
    pub fn new(f: &dyn Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], nodes: usize) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || nodes < 3 {
            return arg("grid needs matching bounds and at least three nodes per axis");
        }
        if lo.iter().zip(hi).any(|(a, b)| !(*a > 0.0 && a < b)) {
            return arg("grid bounds must be positive and ordered");
        }
        let axes: Vec<Vec<f64>> = lo
            .iter()
            .zip(hi)
            .map(|(a, b)| {
                let (la, lb) = (a.ln(), b.ln());
                (0..nodes).map(|i| la + (lb - la) * i as f64 / (nodes - 1) as f64).collect()
            })
            .collect();
        let mut g = Self { axes, values: Vec::new() };
        g.values = (0..g.len()).map(|i| f(&g.point(i))).collect();
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn coords(&self, mut idx: usize) -> Vec<usize> {
        self.axes
            .iter()
            .map(|a| {
                let c = idx % a.len();
                idx /= a.len();
                c
            })
            .collect()
    }

    fn index(&self, c: &[usize]) -> usize {
        c.iter().zip(&self.axes).rev().fold(0, |acc, (&x, a)| acc * a.len() + x)
    }

    fn spacing(&self, j: usize) -> f64 {
        self.axes[j][1] - self.axes[j][0]
    }

    /// Price vector of node `idx`.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.coords(idx).iter().zip(&self.axes).map(|(&c, a)| a[c].exp()).collect()
    }

    /// Multilinear interpolation at price `z`.
    pub fn interpolate(&self, z: &[f64]) -> Result<f64> {
        let mut base = Vec::with_capacity(z.len());
        let mut frac = Vec::with_capacity(z.len());
        for (j, a) in self.axes.iter().enumerate() {
            let y = z[j].ln();
            let h = self.spacing(j);
            let x = (y - a[0]) / h;
            if x < 0.0 || x > (a.len() - 1) as f64 {
                return arg(format!("point {z:?} is outside the grid"));
            }
            let i = (x.floor() as usize).min(a.len() - 2);
            base.push(i);
            frac.push(x - i as f64);
        }
        let mut total = 0.0;
        for corner in 0..1usize << z.len() {
            let mut w = 1.0;
            let mut c = base.clone();
            for j in 0..z.len() {
                if corner >> j & 1 == 1 {
                    c[j] += 1;
                    w *= frac[j];
                } else {
                    w *= 1.0 - frac[j];
                }
            }
            total += w * self.values[self.index(&c)];
        }
        Ok(total)
    }
}

/// Limit weights of the extreme measures: for every candidate, the
/// correlation matrix `E_I[s_j s_l]` of the jump signs under
/// `lim_{tau -> 0} p^I(tau)`.
///
/// The weights are evaluated at `tau = 1e-8` and `4e-8`; with
/// `p(tau) = p0 + a sqrt(tau) + O(tau)` the combination `2 p(tau) - p(4 tau)`
/// removes the leading correction.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitCandidates {
    pub sign_moments: Vec<Vec<Vec<f64>>>,
}

pub fn limit_candidates(spec: &ContinuumSpec) -> Result<LimitCandidates> {
    let j = spec.assets();
    let geo_at = |tau: f64| -> Result<StepGeometry> {
        let m = spec.market(tau, 1)?;
        Ok(StepGeometry::vertex(&m.down, &m.up, m.rho, 1.0, None)?.0)
    };
    let g1 = geo_at(1e-8)?;
    let g4 = geo_at(4e-8)?;
    let mut out = Vec::new();
    for c in &g1.extreme.candidates {
        let w4 = g4.extreme.candidates.iter().find(|d| d.indices == c.indices).map(|d| &d.weights);
        let w: Vec<f64> = match w4 {
            Some(w4) => c.weights.iter().zip(w4).map(|(a, b)| (2.0 * a - b).max(0.0)).collect(),
            None => c.weights.clone(),
        };
        let total: f64 = w.iter().sum();
        let mut mom = vec![vec![0.0; j]; j];
        for (&v, p) in c.indices.iter().zip(&w) {
            let sign = |a: usize| if v >> a & 1 == 1 { 1.0 } else { -1.0 };
            for a in 0..j {
                for b in 0..j {
                    mom[a][b] += p / total * sign(a) * sign(b);
                }
            }
        }
        out.push(mom);
    }
    Ok(LimitCandidates { sign_moments: out })
}

/// Largest stable explicit step: `0.4 dy^2 / max sigma^2`.
pub fn max_stable_dt(grid: &PdeGrid, spec: &ContinuumSpec) -> f64 {
    let dy = (0..grid.axes.len()).map(|j| grid.spacing(j)).fold(f64::INFINITY, f64::min);
    let smax = spec.sigma.iter().cloned().fold(0.0, f64::max);
    0.4 * dy * dy / (smax * smax)
}

/// One explicit backward step of
/// `r f = f_t + r (z, f_z) + 1/2 ext_I sum_i p_i^I (f_zz phi_i, phi_i)`
/// on a log grid, `ext` being max (upper) or min (lower). In log prices
/// the bracket is `sum_j s_j^2 (f_jj - f_j) + sum_{j != l} E_I[s_j s_l] s_j s_l f_jl`,
/// so only the mixed part depends on the candidate. Central second
/// differences, upwind first differences, linear extrapolation at the
/// boundary.
pub fn nonlinear_pde_step(
    grid: &PdeGrid,
    spec: &ContinuumSpec,
    limits: &LimitCandidates,
    dt: f64,
    sense: Sense,
) -> Result<PdeGrid> {
    let j = grid.axes.len();
    if j != spec.assets() {
        return arg("grid dimension differs from the asset count");
    }
    let cfl = max_stable_dt(grid, spec);
    if !(dt > 0.0 && dt <= cfl * (1.0 + 1e-12)) {
        return arg(format!("time step {dt:e} violates the stability bound {cfl:e}"));
    }
    let r = spec.r;
    let sg = &spec.sigma;
    let f = &grid.values;
    let h: Vec<f64> = (0..j).map(|a| grid.spacing(a)).collect();
    let interior = |c: &[usize]| c.iter().zip(&grid.axes).all(|(&x, a)| x > 0 && x + 1 < a.len());
    let mut next: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let c = grid.coords(idx);
            if !interior(&c) {
                return f[idx];
            }
            let at = |shift: &[(usize, isize)]| {
                let mut cc = c.clone();
                for &(a, s) in shift {
                    cc[a] = (cc[a] as isize + s) as usize;
                }
                f[grid.index(&cc)]
            };
            let f0 = f[idx];
            let mut lf = -r * f0;
            for a in 0..j {
                let (fp, fm) = (at(&[(a, 1)]), at(&[(a, -1)]));
                let b = r - 0.5 * sg[a] * sg[a];
                let d1 = if b >= 0.0 { (fp - f0) / h[a] } else { (f0 - fm) / h[a] };
                lf += b * d1 + 0.5 * sg[a] * sg[a] * (fp - 2.0 * f0 + fm) / (h[a] * h[a]);
            }
            if j > 1 {
                let mut mixed = vec![vec![0.0; j]; j];
                for a in 0..j {
                    for b in a + 1..j {
                        let v = (at(&[(a, 1), (b, 1)]) - at(&[(a, 1), (b, -1)]) - at(&[(a, -1), (b, 1)])
                            + at(&[(a, -1), (b, -1)]))
                            / (4.0 * h[a] * h[b]);
                        mixed[a][b] = v;
                    }
                }
                let terms = limits.sign_moments.iter().map(|mom| {
                    let mut t = 0.0;
                    for a in 0..j {
                        for b in a + 1..j {
                            t += 2.0 * mom[a][b] * sg[a] * sg[b] * mixed[a][b];
                        }
                    }
                    t
                });
                let ext = match sense {
                    Sense::Upper => terms.fold(f64::NEG_INFINITY, f64::max),
                    Sense::Lower => terms.fold(f64::INFINITY, f64::min),
                };
                lf += 0.5 * ext;
            }
            f0 + dt * lf
        })
        .collect();
    extrapolate_boundary(grid, &mut next);
    Ok(PdeGrid { axes: grid.axes.clone(), values: next })
}

fn extrapolate_boundary(grid: &PdeGrid, v: &mut [f64]) {
    // Axis by axis, so corners take values extrapolated from edges.
    for a in 0..grid.axes.len() {
        let n = grid.axes[a].len();
        for idx in 0..grid.len() {
            let c = grid.coords(idx);
            if c[a] == 0 || c[a] == n - 1 {
                let (i1, i2) = if c[a] == 0 { (1, 2) } else { (n - 2, n - 3) };
                let mut c1 = c.clone();
                c1[a] = i1;
                let mut c2 = c.clone();
                c2[a] = i2;
                v[idx] = 2.0 * v[grid.index(&c1)] - v[grid.index(&c2)];
            }
        }
    }
}

/// Runs the explicit scheme from maturity back to `t`, with the largest
/// stable step that divides the interval evenly.
pub fn solve_pde(grid: PdeGrid, spec: &ContinuumSpec, t: f64, sense: Sense) -> Result<PdeGrid> {
    let s = spec.remaining(t)?;
    let limits = limit_candidates(spec)?;
    let cfl = max_stable_dt(&grid, spec);
    let steps = (s / cfl).ceil().max(1.0) as usize;
    let dt = s / steps as f64;
    let mut g = grid;
    for _ in 0..steps {
        g = nonlinear_pde_step(&g, spec, &limits, dt, sense)?;
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub steps: usize,
    pub tau: f64,
    pub discrete: f64,
    pub continuum: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// `log(e_k / e_{k+1}) / log(tau_k / tau_{k+1})` for consecutive rows.
    pub orders: Vec<f64>,
    pub monotone: bool,
}

/// Discrete upper prices for `tau = T / n` against the continuum price
/// (lognormal for one asset, the upper Green function for two).
pub fn convergence_harness(p: &Payoff, z0: &[f64], spec: &ContinuumSpec, steps: &[usize]) -> Result<ConvergenceReport> {
    let j = spec.assets();
    if !(1..=2).contains(&j) || z0.len() != j {
        return arg("convergence harness supports one or two assets");
    }
    if steps.windows(2).any(|w| w[0] >= w[1]) || steps.first() == Some(&0) {
        return arg("step counts must be positive and increasing");
    }
    let f = p.function();
    let continuum = if spec.sigma.iter().all(|s| *s == 0.0) {
        let g = (spec.r * spec.maturity).exp();
        f(&z0.iter().map(|x| x * g).collect::<Vec<_>>()) / g
    } else if j == 1 {
        lognormal_price(f.as_ref(), z0[0], 0.0, spec)?
    } else {
        green_price(&GreenFunctionQuery { which: Kernel::Upper, t: 0.0, z: z0.to_vec(), payoff: f.clone() }, spec)?
    };
    let opts = PricingOptions { store_tables: false, ..Default::default() };
    let mut rows = Vec::with_capacity(steps.len());
    for &n in steps {
        let tau = spec.maturity / n as f64;
        let discrete = if spec.sigma.iter().all(|s| *s == 0.0) {
            let rho: f64 = 1.0 + spec.r * tau;
            let g = rho.powi(n as i32);
            f(&z0.iter().map(|x| x * g).collect::<Vec<_>>()) / g
        } else {
            price_european_with(p, z0, &spec.market(tau, n)?, &opts)?.price
        };
        rows.push(ConvergenceRow { steps: n, tau, discrete, continuum, error: (discrete - continuum).abs() });
    }
    let orders = rows
        .windows(2)
        .map(|w| (w[0].error / w[1].error).ln() / (w[0].tau / w[1].tau).ln())
        .collect();
    let monotone = rows.windows(2).all(|w| w[1].error < w[0].error);
    Ok(ConvergenceReport { rows, orders, monotone })
}

/// Whether the extreme measures of the lattice at step `tau` are in
/// general position (used to report the geometry mode).
pub fn limit_mode(spec: &ContinuumSpec) -> Result<GeometryMode> {
    let m = spec.market(1e-8, 1)?;
    Ok(StepGeometry::vertex(&m.down, &m.up, m.rho, 1.0, None)?.0.mode())
}
