use loewner_core::chordal::{forward, unzip_curve};
use loewner_core::geometry::self_intersects;
use loewner_core::{Driver, Mode};
use proptest::prelude::*;

fn pl_driver(slopes: &[f64]) -> Driver {
    let n = slopes.len();
    let mut values = vec![0.0];
    for s in slopes {
        values.push(values.last().unwrap() + s / n as f64);
    }
    Driver::new((0..=n).map(|k| k as f64 / n as f64).collect(), values, Mode::Chordal).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn finite_energy_traces_are_simple(slopes in prop::collection::vec(-4.0f64..4.0, 1..8)) {
        let d = pl_driver(&slopes).resample_uniform(256).unwrap();
        prop_assert!(d.dirichlet_energy().is_finite());
        prop_assert!(!self_intersects(&forward(&d).unwrap()));
    }

    #[test]
    fn unzip_inverts_forward(slopes in prop::collection::vec(-3.0f64..3.0, 1..6)) {
        let d = pl_driver(&slopes);
        let g = forward(&d.resample_uniform(512).unwrap()).unwrap();
        let back = unzip_curve(g.points()).unwrap();
        prop_assert!((back.horizon() - 1.0).abs() < 1e-9);
        let err = back.times().iter().zip(back.values()).map(|(&t, &w)| (w - d.value_at(t)).abs()).fold(0.0, f64::max);
        prop_assert!(err < 0.05, "sup error {}", err);
    }
}
