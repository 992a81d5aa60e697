use kappagate_core::timing::*;
use proptest::prelude::*;

proptest! {
    #[test]
    fn closed_form_matches_ratio(v in 0.01f64..10.0, t0 in 0.0f64..500.0, growth in 0.05f64..1e3, extra in 1.0f64..1e5) {
        // starting 5% above S0 keeps 1 - split/dual clear of cancellation
        let m = TimeModel::new(v, t0).unwrap();
        let s = m.dual_studies() * (1.0 + growth) + extra;
        let ratio = 1.0 - time_split(s, &m).unwrap() / time_dual(s, &m).unwrap();
        let closed = time_saving(s, &m);
        prop_assert!((closed - ratio).abs() <= 1e-12 * ratio.abs().max(1e-12), "{closed} vs {ratio}");
    }

    #[test]
    fn saving_is_bounded_and_monotone(v in 0.01f64..10.0, t0 in 0.0f64..500.0, s in 1.0f64..1e6, ds in 0.001f64..1e3) {
        let m = TimeModel::new(v, t0).unwrap();
        let (x, y) = (time_saving(s, &m), time_saving(s + ds, &m));
        prop_assert!((0.0..0.5).contains(&x));
        prop_assert!(x <= y);
        if s >= m.dual_studies() {
            prop_assert!(x < y);
        }
    }
}

#[test]
fn saving_starts_at_zero_and_approaches_half() {
    for (v, t0) in [(1.0, 5.0), (0.5, 90.0), (107.0 / 309.0, 325.0)] {
        let m = TimeModel::new(v, t0).unwrap();
        assert!(time_saving(m.dual_studies(), &m).abs() < 1e-15);
        assert!(0.5 - time_saving(1e9, &m) < 1e-6);
    }
}

#[test]
fn curve_family_is_monotone_and_bounded() {
    for n in 1..=6 {
        let m = TimeModel::new(1.0, 5.0 / n as f64).unwrap();
        let curve = projection_curve(&m, 100.0, 200).unwrap();
        assert!(curve.points.windows(2).all(|w| w[0].saving <= w[1].saving));
        assert!(curve.points.iter().all(|p| (0.0..0.5).contains(&p.saving)));
    }
}
