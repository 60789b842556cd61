use std::sync::Arc;

use rainbow_hedge::lattice::*;
use rainbow_hedge::minmax::Sense;
use rainbow_hedge::payoffs::{make_payoff, Payoff, PayoffKind, PayoffParams};
use rainbow_hedge::HedgeError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn named(kind: PayoffKind, k: f64) -> Payoff {
    make_payoff(kind, PayoffParams { strike: Some(k), ..Default::default() }).unwrap()
}

fn crr(u: f64, d: f64, rho: f64, n: usize, s0: f64, f: impl Fn(f64) -> f64) -> f64 {
    let q = (rho - d) / (u - d);
    let mut v: Vec<f64> = (0..=n).map(|k| f(s0 * u.powi(k as i32) * d.powi((n - k) as i32))).collect();
    for step in (0..n).rev() {
        v = (0..=step).map(|k| (q * v[k + 1] + (1.0 - q) * v[k]) / rho).collect();
    }
    v[0]
}

#[test]
fn one_asset_matches_binomial() {
    let m = MarketSpec::new(vec![0.9], vec![1.2], 1.05, 5).unwrap();
    let h = price_european(&named(PayoffKind::CallOnMax, 1.0), &[1.0], &m).unwrap();
    let want = crr(1.2, 0.9, 1.05, 5, 1.0, |s| (s - 1.0).max(0.0));
    assert!((h.price - want).abs() < 1e-12, "{} vs {want}", h.price);
}

#[test]
fn one_asset_delta_matches_binomial_delta() {
    let (u, d, rho) = (1.15, 0.88, 1.02);
    let m = MarketSpec::new(vec![d], vec![u], rho, 4).unwrap();
    let f = |s: f64| (s - 1.0).max(0.0);
    let h = price_european(&named(PayoffKind::CallOnMax, 1.0), &[1.0], &m).unwrap();
    for path in 0..16usize {
        let steps: Vec<usize> = (0..4).map(|s| path >> s & 1).collect();
        let gam = extract_strategy(&h, &steps).unwrap();
        let mut s = 1.0;
        for (step, &b) in steps.iter().enumerate() {
            let left = 4 - step - 1;
            let up = crr(u, d, rho, left, s * u, f);
            let down = crr(u, d, rho, left, s * d, f);
            let delta = (up - down) / (s * (u - d));
            assert!((gam[step][0] - delta).abs() < 1e-10, "step {step}: {} vs {delta}", gam[step][0]);
            s *= if b == 1 { u } else { d };
        }
    }
    assert!(extract_strategy(&h, &[]).unwrap().is_empty());
    assert!(matches!(extract_strategy(&h, &[2]), Err(HedgeError::Argument(_))));
}

#[test]
fn dominance_replay_over_all_paths() {
    let m = MarketSpec::new(vec![0.9, 0.85], vec![1.12, 1.2], 1.01, 4).unwrap();
    let p = named(PayoffKind::CallOnMax, 1.0);
    let h = price_european(&p, &[1.0, 1.05], &m).unwrap();
    let mut tight = f64::INFINITY;
    for code in 0..(1usize << 8) {
        let path: Vec<usize> = (0..4).map(|s| code >> (2 * s) & 3).collect();
        let r = replay(&h, &m, &path).unwrap();
        let slack = r.capital[4] - p.eval(&r.prices[4]);
        assert!(slack >= -1e-9, "path {path:?}: slack {slack}");
        tight = tight.min(slack.abs());
    }
    assert!(tight < 1e-9);
}

#[test]
fn order_relations() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let rho = 1.0 + 0.03 * rng.random::<f64>();
        let d: Vec<f64> = (0..2).map(|_| rho - 0.05 - 0.2 * rng.random::<f64>()).collect();
        let u: Vec<f64> = (0..2).map(|_| rho + 0.05 + 0.2 * rng.random::<f64>()).collect();
        let m = MarketSpec::new(d, u, rho, 3).unwrap();
        let p = named(PayoffKind::CallOnMax, 1.0);
        let z = [0.9 + 0.2 * rng.random::<f64>(), 0.9 + 0.2 * rng.random::<f64>()];
        let e = price_european(&p, &z, &m).unwrap();
        let a = price_american(&p, &z, &m).unwrap();
        let l = price_lower(&p, &z, &m).unwrap();
        assert!(l.price <= e.price + 1e-12 && e.price <= a.price + 1e-12);
        for s in 0..3 {
            for i in 0..e.layers[s].len() {
                assert!(l.layers[s].values[i] <= e.layers[s].values[i] + 1e-12);
                assert!(e.layers[s].values[i] <= a.layers[s].values[i] + 1e-12);
            }
        }
        assert!(e.price - l.price > 0.0, "two-asset interval should have positive width");
    }
}

#[test]
fn american_call_never_exercised_early() {
    let m = MarketSpec::new(vec![0.9], vec![1.15], 1.03, 6).unwrap();
    let p = named(PayoffKind::CallOnMax, 1.0);
    let a = price_american(&p, &[1.0], &m).unwrap();
    let e = price_european(&p, &[1.0], &m).unwrap();
    assert!(a.layers.iter().all(|l| l.exercise.as_ref().unwrap().iter().all(|x| !x)));
    assert!((a.price - e.price).abs() < 1e-14);
    let put = Payoff::custom(|z| (1.0 - z[0]).max(0.0)).with_flags(Some(true), None);
    let ap = price_american(&put, &[1.0], &m).unwrap();
    assert!(ap.layers.iter().any(|l| l.exercise.as_ref().unwrap().iter().any(|x| *x)));
    let zero = price_american(&Payoff::custom(|_| 0.0), &[1.0], &m).unwrap();
    assert_eq!(zero.price, 0.0);
}

#[test]
fn one_asset_interval_collapses() {
    let m = MarketSpec::new(vec![0.92], vec![1.1], 1.01, 5).unwrap();
    let p = named(PayoffKind::CallOnMax, 1.0);
    let u = price_european(&p, &[1.0], &m).unwrap().price;
    let l = price_lower(&p, &[1.0], &m).unwrap().price;
    assert!((u - l).abs() < 1e-14);
}

/// Exhaustive minimax over the path tree with the hedge searched on a grid.
fn grid_game(path: &mut Vec<f64>, n: usize, u: f64, d: f64, rho: f64, f: &dyn Fn(&[f64]) -> f64) -> f64 {
    if path.len() == n + 1 {
        return f(path);
    }
    let z = *path.last().unwrap();
    let mut kids = [0.0; 2];
    for (i, x) in [u, d].iter().enumerate() {
        path.push(z * x);
        kids[i] = grid_game(path, n, u, d, rho, f);
        path.pop();
    }
    let mut best = f64::INFINITY;
    for g in 0..=20_000 {
        let gamma = -2.0 + 4.0 * g as f64 / 20_000.0;
        let worst = (kids[0] - gamma * (u - rho) * z).max(kids[1] - gamma * (d - rho) * z);
        best = best.min(worst);
    }
    best / rho
}

#[test]
fn lookback_matches_game_tree() {
    let (u, d, rho) = (1.2, 0.9, 1.02);
    let m = MarketSpec::new(vec![d], vec![u], rho, 3).unwrap();
    let look = |p: &[f64]| p.iter().cloned().fold(f64::MIN, f64::max) - p[p.len() - 1];
    let pp: PathPayoff = Arc::new(move |p: &[Vec<f64>]| {
        let xs: Vec<f64> = p.iter().map(|z| z[0]).collect();
        look(&xs)
    });
    let h = price_path_dependent(&pp, &[1.0], &m).unwrap();
    let want = grid_game(&mut vec![1.0], 3, u, d, rho, &look);
    assert!((h.price - want).abs() < 1e-3, "{} vs {want}", h.price);
}

#[test]
fn path_engine_reductions() {
    let m = MarketSpec::new(vec![0.9, 0.85], vec![1.12, 1.2], 1.01, 3).unwrap();
    let p = named(PayoffKind::BestOf, 1.0);
    let f = p.function();
    let pp: PathPayoff = Arc::new(move |path: &[Vec<f64>]| f(path.last().unwrap()));
    let a = price_path_dependent(&pp, &[1.0, 1.0], &m).unwrap().price;
    let b = price_european(&p, &[1.0, 1.0], &m).unwrap().price;
    assert!((a - b).abs() < 1e-12);
    let c: PathPayoff = Arc::new(|_: &[Vec<f64>]| 3.0);
    let h = price_path_dependent(&c, &[1.0, 1.0], &m).unwrap();
    assert!((h.price - 3.0 / 1.01f64.powi(3)).abs() < 1e-13);

    let big = MarketSpec::new(vec![0.9, 0.85], vec![1.12, 1.2], 1.01, 13).unwrap();
    assert!(matches!(price_path_dependent(&pp, &[1.0, 1.0], &big), Err(HedgeError::Resource(_))));
}

#[test]
fn time_dependent_schedule() {
    let m = MarketSpec::new(vec![0.9, 0.85], vec![1.12, 1.2], 1.01, 3).unwrap();
    let p = named(PayoffKind::CallOnMax, 1.0);
    let flat = m.clone().with_schedule(vec![(m.down.clone(), m.up.clone()); 3]).unwrap();
    let a = price_european(&p, &[1.0, 1.0], &flat).unwrap();
    let b = price_european(&p, &[1.0, 1.0], &m).unwrap();
    assert!((a.price - b.price).abs() < 1e-12);
    assert!(matches!(a.layout, Layout::Tree { branching: 4 }));

    let varying = m
        .clone()
        .with_schedule(vec![
            (vec![0.9, 0.85], vec![1.12, 1.2]),
            (vec![0.95, 0.9], vec![1.05, 1.1]),
            (vec![0.8, 0.8], vec![1.3, 1.25]),
        ])
        .unwrap();
    let h = price_european(&p, &[1.0, 1.0], &varying).unwrap();
    for code in 0..64usize {
        let path: Vec<usize> = (0..3).map(|s| code >> (2 * s) & 3).collect();
        let r = replay(&h, &varying, &path).unwrap();
        assert!(r.capital[3] - p.eval(&r.prices[3]) >= -1e-9);
    }
}

fn vertex_maps(d: Vec<f64>, u: Vec<f64>) -> Vec<JumpMap> {
    vertex_factors(&d, &u)
        .into_iter()
        .map(|xi| -> JumpMap { Arc::new(move |z: &[f64]| xi.iter().zip(z).map(|(a, b)| a * b).collect()) })
        .collect()
}

#[test]
fn jump_maps_recover_vertex_model() {
    let m = MarketSpec::new(vec![0.9, 0.85], vec![1.12, 1.2], 1.01, 3).unwrap();
    let p = named(PayoffKind::CallOnMax, 1.0);
    let j = m.clone().with_jump_maps(vertex_maps(m.down.clone(), m.up.clone())).unwrap();
    let a = price_nonlinear_jumps(&p, &[1.0, 1.0], &j).unwrap();
    let b = price_european(&p, &[1.0, 1.0], &m).unwrap();
    assert!((a.price - b.price).abs() < 1e-12);
}

#[test]
fn complete_jump_markets_are_expectations() {
    // J = 1, two nonlinear maps.
    let rho = 1.01;
    let m = MarketSpec::new(vec![0.9], vec![1.2], rho, 3).unwrap();
    let maps: Vec<JumpMap> = vec![
        Arc::new(|z: &[f64]| vec![z[0] * 1.15 + 0.02]),
        Arc::new(|z: &[f64]| vec![z[0] * 0.9 - 0.01 * z[0] * z[0]]),
    ];
    let jm = m.with_jump_maps(maps.clone()).unwrap();
    let p = named(PayoffKind::CallOnMax, 1.0);
    let h = price_nonlinear_jumps(&p, &[1.0], &jm).unwrap();
    fn expect(z: f64, left: usize, maps: &[JumpMap], rho: f64) -> f64 {
        if left == 0 {
            return (z - 1.0).max(0.0);
        }
        let a = maps[0](&[z])[0];
        let b = maps[1](&[z])[0];
        let q = (rho * z - b) / (a - b);
        (q * expect(a, left - 1, maps, rho) + (1.0 - q) * expect(b, left - 1, maps, rho)) / rho
    }
    let want = expect(1.0, 3, &maps, rho);
    assert!((h.price - want).abs() < 1e-12);

    // J = 2, three maps forming a triangle around rho z.
    let m2 = MarketSpec::new(vec![0.9, 0.9], vec![1.2, 1.2], 1.0, 1).unwrap();
    let tri: Vec<JumpMap> = vec![
        Arc::new(|z: &[f64]| vec![z[0] * 1.2, z[1] * 1.05]),
        Arc::new(|z: &[f64]| vec![z[0] * 0.95, z[1] * 1.2]),
        Arc::new(|z: &[f64]| vec![z[0] * 0.9, z[1] * 0.85]),
    ];
    let jm2 = m2.with_jump_maps(tri.clone()).unwrap();
    let p2 = named(PayoffKind::BestOf, 0.0);
    let h = price_nonlinear_jumps(&p2, &[1.0, 1.0], &jm2).unwrap();
    let pts: Vec<Vec<f64>> = tri.iter().map(|g| g(&[1.0, 1.0])).collect();
    let a = nalgebra::Matrix3::new(
        pts[0][0] - 1.0, pts[1][0] - 1.0, pts[2][0] - 1.0,
        pts[0][1] - 1.0, pts[1][1] - 1.0, pts[2][1] - 1.0,
        1.0, 1.0, 1.0,
    );
    let w = a.lu().solve(&nalgebra::Vector3::new(0.0, 0.0, 1.0)).unwrap();
    let want: f64 = (0..3).map(|i| w[i] * p2.eval(&pts[i])).sum();
    assert!((h.price - want).abs() < 1e-12);
    assert_eq!(h.layers[0].active_measure(0).indices, vec![0, 1, 2]);
}

#[test]
fn jump_maps_without_risk_neutral_law_are_infeasible() {
    let m = MarketSpec::new(vec![0.9], vec![1.2], 1.0, 2).unwrap();
    let maps: Vec<JumpMap> = vec![Arc::new(|z: &[f64]| vec![z[0] * 1.1]), Arc::new(|z: &[f64]| vec![z[0] * 1.2])];
    let jm = m.with_jump_maps(maps).unwrap();
    let e = price_nonlinear_jumps(&named(PayoffKind::CallOnMax, 1.0), &[1.0], &jm).unwrap_err();
    match e {
        HedgeError::Infeasible(msg) => assert!(msg.contains("step 0"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn costs_reduce_to_frictionless_and_grow_with_beta() {
    let m = MarketSpec::new(vec![0.9, 0.85], vec![1.12, 1.2], 1.01, 3).unwrap();
    let z = [1.0, 1.05];
    let p = named(PayoffKind::CallOnMax, 1.0);
    let free = price_european(&p, &z, &m).unwrap().price;
    let zero = price_with_costs(&p, &z, &m, &CostModel::proportional(0.0).unwrap()).unwrap().price;
    assert!((free - zero).abs() < 1e-12, "{free} vs {zero}");
    let gate = cost_gate(&m, &z).unwrap();
    let mut last = zero;
    for frac in [0.25, 0.5, 0.9] {
        let h = price_with_costs(&p, &z, &m, &CostModel::proportional(gate * frac).unwrap()).unwrap();
        assert!(h.price >= last - 1e-14, "β fraction {frac}: {} < {last}", h.price);
        last = h.price;
    }
}

#[test]
fn costed_strategy_covers_payoff() {
    let m = MarketSpec::new(vec![0.9, 0.85], vec![1.12, 1.2], 1.01, 3).unwrap();
    let z = [1.0, 1.05];
    let p = named(PayoffKind::CallOnMax, 1.0);
    let gate = cost_gate(&m, &z).unwrap();
    let h = price_with_costs(&p, &z, &m, &CostModel::proportional(0.5 * gate).unwrap()).unwrap();
    for code in 0..64usize {
        let path: Vec<usize> = (0..3).map(|s| code >> (2 * s) & 3).collect();
        let r = replay(&h, &m, &path).unwrap();
        assert!(r.capital[3] - p.eval(&r.prices[3]) >= -1e-9, "path {path:?}");
    }
}

#[test]
fn fixed_cost_two_ways() {
    let m = MarketSpec::new(vec![0.9, 0.85], vec![1.12, 1.2], 1.01, 4).unwrap();
    let z = [1.0, 1.05];
    let p = named(PayoffKind::CallOnMax, 1.0);
    let bt = 0.99;
    let direct = price_fixed_cost(&p, &z, &m, bt).unwrap();
    let scaled = price_fixed_cost_rescaled(&p, &z, &m, bt).unwrap();
    assert!((direct.price - scaled).abs() < 1e-12 * (1.0 + scaled.abs()), "{} vs {scaled}", direct.price);
    for code in 0..256usize {
        let path: Vec<usize> = (0..4).map(|s| code >> (2 * s) & 3).collect();
        let r = replay(&direct, &m, &path).unwrap();
        assert!(r.capital[4] - p.eval(&r.prices[4]) >= -1e-9);
    }
    assert!(matches!(price_fixed_cost(&p, &z, &m, 0.5), Err(HedgeError::Precondition { .. })));
}

#[test]
fn power_eigenfunction_through_lattice() {
    let m = MarketSpec::new(vec![0.9, 0.85], vec![1.12, 1.2], 1.01, 6).unwrap();
    let e = vec![2u32, 1];
    let lam = power_eigenvalue(&e, &m, Sense::Upper).unwrap();
    let p = Payoff::power(1.0, e.clone());
    let z = [1.1, 0.95];
    let h = price_european(&p, &z, &m).unwrap();
    let want = 1.01f64.powi(-6) * lam.powi(6) * z[0].powi(2) * z[1];
    assert!(((h.price - want) / want).abs() < 1e-9);
}

#[test]
fn degenerate_vertices_fall_back_with_warning() {
    let m = MarketSpec::new(vec![0.9, 0.9], vec![1.2, 1.2], 1.0, 2).unwrap();
    let h = price_european(&named(PayoffKind::BestOf, 0.0), &[1.0, 1.0], &m).unwrap();
    assert!(!h.metadata.warnings.is_empty());
    let step = bellman_step(&|z: &[f64]| z[0].max(z[1]), &[1.0, 1.0], &m).unwrap();
    assert!((step.value - 1.1).abs() < 1e-14);
}
