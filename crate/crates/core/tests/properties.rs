use minkowski_orbits::asymptotics::{limit_profile_heteroclinic, limit_profile_homoclinic};
use minkowski_orbits::cli::{to_json_string, ScenarioConfig, Scalars, WeightConfig};
use minkowski_orbits::connections::{classify_stepwise, energy_level_curve, stepwise_ratio, LevelAnchor};
use minkowski_orbits::dynamics::energy;
use minkowski_orbits::{Nonlinearity, NonlinearityKind};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, rng_seed: proptest::test_runner::RngSeed::Fixed(7), ..ProptestConfig::default() })]

    #[test]
    fn stepwise_classification_ignores_delta(a in 0.05f64..0.5, c1 in 0.1f64..10.0, c2 in 0.1f64..10.0,
                                             d1 in -3.0f64..3.0, d2 in -3.0f64..3.0) {
        let n = Nonlinearity::cubic(a).unwrap();
        let p = classify_stepwise(&n, c1, c2, 10f64.powf(d1));
        let q = classify_stepwise(&n, c1, c2, 10f64.powf(d2));
        match (p, q) {
            (Ok(p), Ok(q)) => {
                prop_assert_eq!(p.classification.name(), q.classification.name());
                prop_assert_eq!(p.witness_rho, q.witness_rho);
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "outcome depends on δ"),
        }
    }

    #[test]
    fn level_curves_conserve_energy(v in 0.0f64..1.0, c in 0.1f64..5.0, delta in 0.01f64..10.0) {
        let n = Nonlinearity::cubic(0.4).unwrap();
        let curve = energy_level_curve(&n, delta, c, LevelAnchor::ThroughOne).unwrap();
        let w = curve.eval(v).unwrap();
        let level = c / delta * n.f_one();
        prop_assert!((energy(v, w, delta, c, &n) - level).abs() <= 1e-10 * level.abs().max(1.0));
    }

    #[test]
    fn matching_ratio_increases(r1 in 1e-3f64..0.399, dr in 1e-4f64..0.1) {
        let n = Nonlinearity::cubic(0.4).unwrap();
        let r2 = (r1 + dr).min(n.alpha);
        prop_assert!(stepwise_ratio(&n, r2) > stepwise_ratio(&n, r1));
    }

    #[test]
    fn limit_profiles_are_anchored(v_star in 1e-3f64..0.4, t0 in -5.0f64..5.0, t in -10.0f64..10.0) {
        let v0 = 2.0 / 3.0;
        let ramp = limit_profile_heteroclinic(v_star, t0);
        ramp.validate().unwrap();
        prop_assert!((ramp.value(t0) - v_star).abs() < 1e-12);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&ramp.value(t)));
        prop_assert!(ramp.value(t + 0.1) >= ramp.value(t));
        let tent = limit_profile_homoclinic(v_star, v0, t0);
        tent.validate().unwrap();
        prop_assert!((tent.value(t0) - v_star).abs() < 1e-12);
        prop_assert!(tent.value(t) <= v0 + 1e-12);
    }

    #[test]
    fn configs_round_trip(a in 0.01f64..0.99, deltas in prop::collection::vec(1e-4f64..1e3, 1..5),
                          c1 in 0.01f64..10.0, c2 in 0.01f64..10.0, t0 in -10.0f64..10.0) {
        let cfg = ScenarioConfig {
            command: None,
            nonlinearity: NonlinearityKind::CubicBistable { a },
            weight: Some(WeightConfig::Stepwise { c1, c2, t0 }),
            delta: Some(Scalars::Many(deltas)),
            params: Default::default(),
            output: Default::default(),
        };
        let text = to_json_string(&cfg).unwrap();
        prop_assert_eq!(ScenarioConfig::from_json(&text).unwrap(), cfg);
    }
}
