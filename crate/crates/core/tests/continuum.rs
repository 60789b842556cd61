use std::sync::Arc;

use rainbow_hedge::continuum::*;
use rainbow_hedge::lattice::{price_european, MarketSpec};
use rainbow_hedge::minmax::Sense;
use rainbow_hedge::payoffs::{make_payoff, Payoff, PayoffKind, PayoffParams};
use statrs::distribution::{ContinuousCDF, Normal};

fn bs_call(z: f64, k: f64, sigma: f64, r: f64, s: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).unwrap();
    let sd = sigma * s.sqrt();
    let d1 = ((z / k).ln() + (r + 0.5 * sigma * sigma) * s) / sd;
    z * n.cdf(d1) - k * (-r * s).exp() * n.cdf(d1 - sd)
}

fn call_on_max(k: f64) -> Payoff {
    make_payoff(PayoffKind::CallOnMax, PayoffParams { strike: Some(k), ..Default::default() }).unwrap()
}

fn spec2() -> ContinuumSpec {
    ContinuumSpec::new(vec![0.2, 0.3], 0.05, 1.0, 0.5).unwrap()
}

#[test]
fn spec_validation() {
    assert!(ContinuumSpec::new(vec![0.0], 0.05, 1.0, 0.5).is_err());
    assert!(ContinuumSpec::new(vec![0.2], 0.05, 0.0, 0.5).is_err());
    assert!(ContinuumSpec::new(vec![0.2], 0.05, 1.0, 0.4).is_err());
    assert!(ContinuumSpec::new(vec![0.2], 0.05, 1.0, 1.0).unwrap().market(30.0, 1).is_err());
}

#[test]
fn first_order_limit() {
    let spec = ContinuumSpec::new(vec![0.2, 0.3], 0.05, 1.0, 1.0).unwrap();
    let f = |z: &[f64]| z[0];
    assert!((first_order_price(&f, &[1.3, 0.7], 0.4, &spec).unwrap() - 1.3).abs() < 1e-14);
    assert_eq!(first_order_price(&f, &[1.3, 0.7], 1.0, &spec).unwrap(), 1.3);
    let zero_rate = ContinuumSpec::new(vec![0.2], 0.0, 1.0, 0.75).unwrap();
    let g = |z: &[f64]| (z[0] - 1.0).max(0.0);
    assert_eq!(first_order_price(&g, &[1.2], 0.0, &zero_rate).unwrap(), g(&[1.2]));
    assert!(first_order_price(&f, &[1.0], 0.0, &ContinuumSpec::new(vec![0.2], 0.0, 1.0, 0.5).unwrap()).is_err());
}

#[test]
fn first_order_matches_small_jump_lattice() {
    // Jumps of size sigma tau: the lattice upper price tends to the
    // discounted payoff of the forward.
    let spec = ContinuumSpec::new(vec![0.2, 0.3], 0.05, 1.0, 1.0).unwrap();
    let p = call_on_max(1.0);
    let n = 100;
    let tau = 1.0 / n as f64;
    let d = spec.sigma.iter().map(|s| 1.0 - s * tau).collect();
    let u = spec.sigma.iter().map(|s| 1.0 + s * tau).collect();
    let m = MarketSpec::new(d, u, 1.0 + spec.r * tau, n).unwrap();
    let lattice = price_european(&p, &[1.0, 1.0], &m).unwrap().price;
    let limit = first_order_price(p.function().as_ref(), &[1.0, 1.0], 0.0, &spec).unwrap();
    assert!((lattice - limit).abs() < 0.02, "{lattice} vs {limit}");
}

#[test]
fn duhamel_closed_forms() {
    let spec = ContinuumSpec::new(vec![0.2], 0.05, 2.0, 1.0).unwrap();
    let f = |z: &[f64]| (z[0] - 1.0).max(0.0);
    let z = [1.1];
    let head = first_order_price(&f, &z, 0.5, &spec).unwrap();
    let zero = duhamel_cost_price(&f, &z, 0.5, &spec, &|_| 0.0).unwrap();
    assert_eq!(zero, head);
    let s = 1.5;
    let lin = duhamel_cost_price(&f, &z, 0.5, &spec, &|w| w[0]).unwrap();
    assert!((lin - head - s * z[0]).abs() < 1e-10);
    let sq = duhamel_cost_price(&f, &z, 0.5, &spec, &|w| w[0] * w[0]).unwrap();
    let exact = z[0] * z[0] * ((spec.r * s).exp() - 1.0) / spec.r;
    assert!((sq - head - exact).abs() < 1e-10);
    let flat = ContinuumSpec::new(vec![0.2], 0.0, 2.0, 1.0).unwrap();
    let c = duhamel_cost_price(&f, &z, 0.5, &flat, &|_| 0.3).unwrap();
    assert!((c - f(&z) - 0.3 * s).abs() < 1e-12);
    assert!(duhamel_cost_price(&f, &z, 0.5, &ContinuumSpec::new(vec![0.2], 0.0, 2.0, 0.75).unwrap(), &|_| 0.0).is_err());
}

#[test]
fn lognormal_matches_black_scholes() {
    let spec = ContinuumSpec::new(vec![0.25], 0.03, 1.5, 0.5).unwrap();
    for z in [0.7, 1.0, 1.4] {
        let q = lognormal_price(&|w: &[f64]| (w[0] - 1.0).max(0.0), z, 0.0, &spec).unwrap();
        assert!((q - bs_call(z, 1.0, 0.25, 0.03, 1.5)).abs() < 1e-9, "{q} vs {}", bs_call(z, 1.0, 0.25, 0.03, 1.5));
    }
}

#[test]
fn green_identities() {
    let spec = spec2();
    let q = |which, payoff: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>| GreenFunctionQuery {
        which,
        t: 0.25,
        z: vec![1.1, 0.9],
        payoff,
    };
    let disc = (-0.05f64 * 0.75).exp();
    for k in [Kernel::Upper, Kernel::Lower, Kernel::Complete] {
        assert!((green_price(&q(k, Arc::new(|_| 1.0)), &spec).unwrap() - disc).abs() < 1e-10);
        assert!((green_price(&q(k, Arc::new(|w| w[0])), &spec).unwrap() - 1.1).abs() < 1e-9);
        assert!((green_price(&q(k, Arc::new(|w| w[1])), &spec).unwrap() - 0.9).abs() < 1e-9);
        assert!((kernel_mass(k, 0.25, &[1.1, 0.9], &spec).unwrap() - disc).abs() < 1e-8);
    }
    // Only the first asset is random in a one-asset payoff.
    let one = green_price(&q(Kernel::Upper, Arc::new(|w| (w[0] - 1.0).max(0.0))), &spec).unwrap();
    assert!((one - bs_call(1.1, 1.0, 0.2, 0.05, 0.75)).abs() < 1e-9);
}

#[test]
fn green_ordering_and_short_time() {
    let spec = ContinuumSpec::new(vec![0.25, 0.25], 0.05, 1.0, 0.5).unwrap();
    let f = call_on_max(1.0).function();
    for z in [[0.8, 1.2], [1.0, 1.0], [1.3, 0.9]] {
        let price = |k| green_price(&GreenFunctionQuery { which: k, t: 0.0, z: z.to_vec(), payoff: f.clone() }, &spec).unwrap();
        let (u, c, l) = (price(Kernel::Upper), price(Kernel::Complete), price(Kernel::Lower));
        assert!(l <= c + 1e-12 && c <= u + 1e-12, "{l} {c} {u}");
        assert!(u > l);
    }
    let near = GreenFunctionQuery { which: Kernel::Upper, t: 1.0 - 1e-4, z: vec![1.2, 0.9], payoff: f.clone() };
    assert!((green_price(&near, &spec).unwrap() - f(&[1.2, 0.9])).abs() < 1e-3);
}

#[test]
fn pde_constant_decays() {
    let spec = spec2();
    let g = PdeGrid::new(&|_| 2.0, &[0.5, 0.5], &[2.0, 2.0], 11).unwrap();
    let lim = limit_candidates(&spec).unwrap();
    let dt = max_stable_dt(&g, &spec);
    let next = nonlinear_pde_step(&g, &spec, &lim, dt, Sense::Upper).unwrap();
    for v in &next.values {
        assert!((v - 2.0 * (1.0 - 0.05 * dt)).abs() < 1e-14);
    }
    assert!(nonlinear_pde_step(&g, &spec, &lim, 2.0 * dt, Sense::Upper).is_err());
}

#[test]
fn pde_one_asset_theta() {
    let spec = ContinuumSpec::new(vec![0.3], 0.04, 1.0, 0.5).unwrap();
    let s = 0.5;
    let g = PdeGrid::new(&|z| bs_call(z[0], 1.0, 0.3, 0.04, s), &[0.3], &[3.0], 401).unwrap();
    let lim = limit_candidates(&spec).unwrap();
    let dt = max_stable_dt(&g, &spec);
    let next = nonlinear_pde_step(&g, &spec, &lim, dt, Sense::Upper).unwrap();
    let z = 1.1;
    let numeric = (next.interpolate(&[z]).unwrap() - g.interpolate(&[z]).unwrap()) / dt;
    let h = 1e-5;
    let exact = (bs_call(z, 1.0, 0.3, 0.04, s + h) - bs_call(z, 1.0, 0.3, 0.04, s - h)) / (2.0 * h);
    assert!((numeric - exact).abs() < 2e-3 * exact.abs().max(1.0), "{numeric} vs {exact}");
}

#[test]
fn limit_weights_are_perfectly_anti_or_co_monotone() {
    let lim = limit_candidates(&spec2()).unwrap();
    assert_eq!(lim.sign_moments.len(), 2);
    let mut c: Vec<f64> = lim.sign_moments.iter().map(|m| m[0][1]).collect();
    c.sort_by(f64::total_cmp);
    assert!((c[0] + 1.0).abs() < 1e-6 && (c[1] - 1.0).abs() < 1e-6, "{c:?}");
}

#[test]
fn pde_matches_green_functions() {
    // The central mixed difference is not monotone for a rank-one diffusion,
    // so the error is first order in the spacing; check it shrinks.
    let spec = spec2();
    let f = call_on_max(1.0).function();
    let z = [1.0, 1.0];
    for (sense, kernel) in [(Sense::Upper, Kernel::Upper), (Sense::Lower, Kernel::Lower)] {
        let green = green_price(&GreenFunctionQuery { which: kernel, t: 0.0, z: z.to_vec(), payoff: f.clone() }, &spec).unwrap();
        let err = |nodes| {
            let grid = PdeGrid::new(f.as_ref(), &[0.15, 0.15], &[6.0, 6.0], nodes).unwrap();
            (solve_pde(grid, &spec, 0.0, sense).unwrap().interpolate(&z).unwrap() - green).abs()
        };
        let (coarse, fine) = (err(41), err(81));
        assert!(fine < 0.7 * coarse && fine < 1e-2, "{sense:?}: {coarse} {fine}");
    }
}

#[test]
fn harness_one_asset_and_zero_volatility() {
    let spec = ContinuumSpec::new(vec![0.2], 0.05, 1.0, 0.5).unwrap();
    let p = make_payoff(PayoffKind::CallOnMax, PayoffParams { strike: Some(1.0), ..Default::default() }).unwrap();
    let rep = convergence_harness(&p, &[1.0], &spec, &[8, 16, 32, 64]).unwrap();
    assert_eq!(rep.rows.len(), 4);
    assert!((rep.rows[0].continuum - bs_call(1.0, 1.0, 0.2, 0.05, 1.0)).abs() < 1e-9);
    assert!(rep.rows[3].error < rep.rows[0].error);
    assert_eq!(rep.orders.len(), 3);
    let flat = ContinuumSpec { sigma: vec![0.0], ..spec.clone() };
    let rep = convergence_harness(&p, &[1.0], &flat, &[4, 8]).unwrap();
    let fwd = (0.05f64).exp() - 1.0;
    assert!((rep.rows[0].continuum - fwd * (-0.05f64).exp()).abs() < 1e-14);
    let rho: f64 = 1.0 + 0.05 / 4.0;
    assert!((rep.rows[0].discrete - (rho.powi(4) - 1.0) / rho.powi(4)).abs() < 1e-14);
    let wide = ContinuumSpec::new(vec![2.0], 0.05, 1.0, 0.5).unwrap();
    assert!(convergence_harness(&p, &[1.0], &wide, &[1, 2]).is_err());
}
