use proptest::prelude::*;

use pplab_core::capacity::{cap_bt, CapOptions};
use pplab_core::energy::h_level;
use pplab_core::fit::linear_fit;
use pplab_core::gallery::{self, Params};
use pplab_core::grid::{ball_mask, make_ball_grid, GridDomain, ScalarField};
use pplab_core::majorant::{level_sets, split_signed, tail_series};
use pplab_core::wstar::{scale_pair, star_norm};

fn grid() -> GridDomain {
    make_ball_grid(1, 17).unwrap()
}

/// A field on the 17x17 grid with values drawn from `range`.
fn field(range: std::ops::Range<f64>) -> impl Strategy<Value = ScalarField> {
    let g = grid();
    prop::collection::vec(range, g.len()).prop_map(move |v| ScalarField::from_values(&g, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn level_sets_nest_above_the_floor(phi in field(0.0..600.0), psi in field(-300.0..0.0), lambda in 2.9f64..3.99) {
        let g = phi.grid().clone();
        let k = ball_mask(&g, &[0.0; 4], 0.6);
        let sets = level_sets(&phi, &psi, &k, lambda, 8).unwrap();
        for m in &sets {
            prop_assert!(m.minus(&k).is_empty());
        }
        // The phi thresholds nest; the psi floors loosen with n, so nesting holds on the
        // part of K_{n+1} that also clears the floor of level n.
        for (j, w) in sets.windows(2).enumerate() {
            let floor = -lambda.powi(j as i32 + 1);
            prop_assert!(w[1].iter().filter(|&i| psi.get(i) >= floor).all(|i| w[0].contains(i)));
        }
    }

    #[test]
    fn tail_series_monotone_and_nonpositive(a in field(-50.0..0.0), b in field(-50.0..0.0), lambda in 2.9f64..3.99) {
        let lo = a.zip_map(&b, f64::min).unwrap();
        let hi = a.zip_map(&b, f64::max).unwrap();
        let wl = tail_series(&lo, 1.5, lambda, 6).unwrap().w;
        let wh = tail_series(&hi, 1.5, lambda, 6).unwrap().w;
        for i in 0..lo.grid().len() {
            prop_assert!(wl.get(i) <= wh.get(i) + 1e-9);
            prop_assert!(wh.get(i) <= 0.0);
        }
    }

    #[test]
    fn tail_series_is_geometric_on_small_psi(psi in field(-2.9..0.0), lambda in 2.9f64..3.99, alpha in 1.0f64..1.5) {
        let levels = 7;
        let q = 2f64.powf(alpha) / lambda;
        let sum: f64 = (1..=levels as i32).map(|n| q.powi(n)).sum();
        let t = tail_series(&psi, alpha, lambda, levels).unwrap();
        for i in 0..psi.grid().len() {
            prop_assert!((t.w.get(i) - psi.get(i) * sum).abs() <= 1e-9 * (1.0 + sum));
            prop_assert!(t.dropped_per_node.get(i) >= 0.0);
        }
    }

    #[test]
    fn h_level_bounded_and_increasing(psi in field(-40.0..0.0), n in 1usize..20) {
        let a = h_level(&psi, n);
        let b = h_level(&psi, n + 1);
        for i in 0..psi.grid().len() {
            prop_assert!((0.0..=1.0).contains(&a.get(i)));
            prop_assert!(a.get(i) <= b.get(i) + 1e-12);
        }
    }

    #[test]
    fn split_signed_recombines(phi in field(-5.0..5.0)) {
        let (p, m) = split_signed(&phi);
        for i in 0..phi.grid().len() {
            prop_assert!(p.get(i) >= 0.0 && m.get(i) >= 0.0);
            prop_assert_eq!(p.get(i) - m.get(i), phi.get(i));
        }
    }

    #[test]
    fn dilation_contains_the_set(r in 0.05f64..0.6, d in 0.0f64..0.3) {
        let g = grid();
        let m = ball_mask(&g, &[0.1, -0.2, 0.0, 0.0], r);
        let big = m.dilate(d);
        prop_assert!(m.minus(&big).is_empty());
        prop_assert!(big.count() >= m.count());
    }

    #[test]
    fn linear_fit_recovers_lines(slope in -5.0f64..5.0, icpt in -5.0f64..5.0) {
        let xs: Vec<f64> = (0..8).map(|i| i as f64 * 0.7 - 1.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| slope * x + icpt).collect();
        let (s, c, r2) = linear_fit(&xs, &ys);
        prop_assert!((s - slope).abs() < 1e-9 && (c - icpt).abs() < 1e-9);
        prop_assert!(slope.abs() < 1e-6 || r2 > 1.0 - 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn star_norm_terms_scale(t in 0.1f64..4.0) {
        let g = make_ball_grid(1, 33).unwrap();
        let e = gallery::instantiate("linear", &g, &Params::new()).unwrap();
        let a = star_norm(&e.pair).unwrap();
        let b = star_norm(&scale_pair(&e.pair, t)).unwrap();
        prop_assert!((b.l1 - t * a.l1).abs() <= 1e-9 * a.l1.abs().max(1.0) * t);
        prop_assert!((b.mass - t * t * a.mass).abs() <= 1e-9 * a.mass.abs().max(1.0) * t * t);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn capacity_is_monotone_in_the_set(r in 0.15f64..0.45, grow in 0.05f64..0.3) {
        let g = make_ball_grid(1, 33).unwrap();
        let opts = CapOptions::new(&g);
        let small = cap_bt(&ball_mask(&g, &[0.0; 4], r), &opts).unwrap().value;
        let big = cap_bt(&ball_mask(&g, &[0.0; 4], r + grow), &opts).unwrap().value;
        prop_assert!(small <= 1.05 * big, "{small} > {big}");
    }
}
