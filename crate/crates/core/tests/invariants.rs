use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rainbow_hedge::geometry::simplex_risk_neutral;
use rainbow_hedge::lattice::{bellman_step, bellman_step_with, price_european, price_lower, vertex_factors, MarketSpec};
use rainbow_hedge::minmax::{lower_minmax, upper_minmax, Sense, VertexValuation};
use rainbow_hedge::payoffs::Payoff;

fn market(j: usize) -> impl Strategy<Value = MarketSpec> {
    (0.0..0.03f64, prop::collection::vec((0.02..0.3f64, 0.02..0.3f64), j)).prop_map(|(r, w)| {
        let rho = 1.0 + r;
        let d = w.iter().map(|(a, _)| rho - a).collect();
        let u = w.iter().map(|(_, b)| rho + b).collect();
        MarketSpec::new(d, u, rho, 1).unwrap()
    })
}

fn point(j: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.7..1.3f64, j)
}

/// `max_k (a_k . z + b_k)`: a random convex payoff.
fn convex(j: usize) -> impl Strategy<Value = Vec<(Vec<f64>, f64)>> {
    prop::collection::vec((prop::collection::vec(-1.0..1.0f64, j), -1.0..1.0f64), 1..4)
}

fn eval(pieces: &[(Vec<f64>, f64)], z: &[f64]) -> f64 {
    pieces
        .iter()
        .map(|(a, b)| a.iter().zip(z).map(|(x, y)| x * y).sum::<f64>() + b)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn grid_upper(vectors: &[Vec<f64>], values: &[f64]) -> f64 {
    let obj = |g: &[f64]| {
        vectors
            .iter()
            .zip(values)
            .map(|(v, f)| f - v.iter().zip(g).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let n = 801;
    let mut best = f64::INFINITY;
    for i in 0..n {
        for k in 0..n {
            let g = [-40.0 + 80.0 * i as f64 / (n - 1) as f64, -40.0 + 80.0 * k as f64 / (n - 1) as f64];
            best = best.min(obj(&g));
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn operator_is_non_expansive(m in market(2), z in point(2), f in convex(2), g in convex(2)) {
        let bf = bellman_step(&|x: &[f64]| eval(&f, x), &z, &m).unwrap().value;
        let bg = bellman_step(&|x: &[f64]| eval(&g, x), &z, &m).unwrap().value;
        let sup = vertex_factors(&m.down, &m.up)
            .iter()
            .map(|xi| {
                let p: Vec<f64> = xi.iter().zip(&z).map(|(a, b)| a * b).collect();
                (eval(&f, &p) - eval(&g, &p)).abs()
            })
            .fold(0.0, f64::max);
        prop_assert!((bf - bg).abs() <= sup + 1e-12);
    }

    #[test]
    fn operator_is_homogeneous(m in market(3), z in point(3), f in convex(3), c in -2.0..2.0f64, lam in 0.0..4.0f64) {
        let bf = bellman_step(&|x: &[f64]| eval(&f, x), &z, &m).unwrap().value;
        let shifted = bellman_step(&|x: &[f64]| eval(&f, x) + c, &z, &m).unwrap().value;
        let scaled = bellman_step(&|x: &[f64]| lam * eval(&f, x), &z, &m).unwrap().value;
        prop_assert!((shifted - bf - c).abs() <= 1e-12 * (1.0 + bf.abs() + c.abs()));
        prop_assert!((scaled - lam * bf).abs() <= 1e-12 * (1.0 + lam * bf.abs()));
    }

    #[test]
    fn traded_assets_are_martingales(m in market(2), z in point(2), n in 1usize..5, j in 0usize..2) {
        let mut m = m;
        m.steps = n;
        let p = Payoff::custom(move |x| x[j]).with_flags(Some(true), None);
        let up = price_european(&p, &z, &m).unwrap().price;
        let low = price_lower(&p, &z, &m).unwrap().price;
        prop_assert!((up - z[j]).abs() < 1e-12 && (low - z[j]).abs() < 1e-12);
    }

    #[test]
    fn lower_never_exceeds_upper(m in market(2), z in point(2), f in convex(2)) {
        let h = |x: &[f64]| eval(&f, x);
        let up = bellman_step(&h, &z, &m).unwrap().value;
        let low = bellman_step_with(&h, &z, &m, Sense::Lower, None).unwrap().value;
        prop_assert!(low <= up + 1e-12);
    }

    #[test]
    fn simplex_weights_match_linear_solve(
        d in 1usize..4,
        seed in prop::collection::vec(-1.0..1.0f64, 9),
        p in prop::collection::vec(0.05..1.0f64, 4),
    ) {
        let p: Vec<f64> = p[..=d].to_vec();
        let total: f64 = p.iter().sum();
        let mut fam: Vec<Vec<f64>> = (0..d).map(|i| seed[i * 3..i * 3 + d].to_vec()).collect();
        prop_assume!(fam.iter().all(|v| v.iter().map(|x| x * x).sum::<f64>() > 1e-2));
        let a = DMatrix::from_fn(d, d, |r, c| fam[c][r]);
        prop_assume!(a.determinant().abs() > 1e-3);
        fam.push((0..d).map(|k| -(0..d).map(|i| p[i] * fam[i][k]).sum::<f64>() / p[d]).collect());
        let m = simplex_risk_neutral(&fam).unwrap();
        let full = DMatrix::from_fn(d + 1, d + 1, |r, c| if r < d { fam[c][r] } else { 1.0 });
        let mut rhs = DVector::zeros(d + 1);
        rhs[d] = 1.0;
        let sol = full.lu().solve(&rhs).unwrap();
        for i in 0..=d {
            prop_assert!((sol[i] - m.weights[i]).abs() < 1e-10);
            prop_assert!((m.weights[i] - p[i] / total).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn upper_minmax_matches_gamma_grid(
        angles in prop::collection::vec(0.0..std::f64::consts::TAU, 4),
        radii in prop::collection::vec(0.3..1.0f64, 4),
        values in prop::collection::vec(0.0..1.0f64, 4),
    ) {
        let mut a = angles.clone();
        a.sort_by(f64::total_cmp);
        // Origin interior: consecutive directions less than pi apart.
        let gaps = a.windows(2).map(|w| w[1] - w[0]).chain([a[0] + std::f64::consts::TAU - a[3]]);
        prop_assume!(gaps.into_iter().all(|g| g < 2.8 && g > 0.2));
        let vectors: Vec<Vec<f64>> = a.iter().zip(&radii).map(|(t, r)| vec![r * t.cos(), r * t.sin()]).collect();
        let v = VertexValuation::new(vectors.clone(), values.clone());
        let up = upper_minmax(&v).unwrap();
        // Grid spacing 0.1 and |xi| <= 1 bound the grid error by 0.1.
        let grid = grid_upper(&vectors, &values);
        prop_assert!(grid >= up.value - 1e-12 && grid - up.value <= 0.1, "{} vs {grid}", up.value);
        prop_assert!(lower_minmax(&v).unwrap().value <= up.value + 1e-12);
    }
}
