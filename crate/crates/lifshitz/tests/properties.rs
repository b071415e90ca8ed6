//! Randomized invariants over the public API.

use proptest::prelude::*;

use lifshitz::exact_planar::{exact_lifshitz_energy, PlanarScenario};
use lifshitz::materials::{cm_contrast, DielectricModel, Tabulated};
use lifshitz::quadrature::{integrate, Transform};
use lifshitz::rough::HeightMap;
use lifshitz::QuadratureSpec;

proptest! {
    #[test]
    fn drude_epsilon_monotone_and_bounded(
        omega_p in 0.1f64..10.0,
        omega_0 in 0.1f64..10.0,
        gamma in 0.0f64..2.0,
        z1 in 0.0f64..50.0,
        dz in 0.0f64..50.0,
    ) {
        let m = DielectricModel::drude_lorentz(omega_p, omega_0, gamma).unwrap();
        let e1 = m.epsilon_at(z1).unwrap();
        let e2 = m.epsilon_at(z1 + dz).unwrap();
        prop_assert!(e1 >= 1.0);
        prop_assert!(e2 <= e1 + 1e-15);
    }

    #[test]
    fn cm_contrast_below_bare_contrast(eps in 1.0f64..1e6) {
        let cm = cm_contrast(eps);
        prop_assert!((0.0..3.0).contains(&cm));
        if eps > 1.0 {
            prop_assert!(cm < eps - 1.0 + 1e-12 * eps);
        }
    }

    #[test]
    fn heightmap_csv_round_trips_bit_exactly(
        n in 1usize..6,
        cell in 0.5f64..20.0,
        seed in proptest::collection::vec(-5.0f64..5.0, 36),
    ) {
        let samples: Vec<f64> = seed[..n * n].to_vec();
        let map = HeightMap::new(samples, n, cell, 1).unwrap();
        let rt = HeightMap::from_csv_str(&map.to_csv_string(), 1).unwrap();
        prop_assert_eq!(map.samples(), rt.samples());
        prop_assert_eq!(map.cell_size(), rt.cell_size());
    }

    #[test]
    fn tabulated_interpolation_stays_in_sample_range(
        steps in proptest::collection::vec(0.01f64..2.0, 4..10),
        drops in proptest::collection::vec(0.0f64..0.5, 4..10),
        probe in 0.0f64..30.0,
    ) {
        let n = steps.len().min(drops.len());
        let mut zeta = 0.0;
        let mut eps = 1.0 + drops[..n].iter().sum::<f64>() + 0.1;
        let mut samples = Vec::new();
        for i in 0..n {
            samples.push((zeta, eps));
            zeta += steps[i];
            eps -= drops[i];
        }
        let tab = Tabulated::new(&samples).unwrap();
        let v = tab.epsilon_at(probe).unwrap();
        prop_assert!(v >= 1.0);
        prop_assert!(v <= samples[0].1 + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exponential_integral_matches_closed_form(s in 0.2f64..5.0) {
        let spec = QuadratureSpec::default();
        let v = integrate(|t: f64| (-s * t).exp(), Transform::Exp { scale: 1.0 / s }, &spec)
            .unwrap()
            .value;
        prop_assert!((v - 1.0 / s).abs() < 1e-8 / s);
    }

    #[test]
    fn quadrature_is_deterministic(s in 0.2f64..5.0) {
        let spec = QuadratureSpec::default();
        let run = || {
            integrate(|t: f64| t * (-s * t).exp(), Transform::Exp { scale: 1.0 / s }, &spec)
                .unwrap()
                .value
        };
        prop_assert_eq!(run().to_bits(), run().to_bits());
    }

    #[test]
    fn exact_energy_negative_and_weakens_with_distance(h in 0.3f64..3.0) {
        let quad = QuadratureSpec::default();
        let model = DielectricModel::reference_dielectric();
        let near = exact_lifshitz_energy(
            &PlanarScenario::symmetric(model.clone(), h).unwrap(),
            &quad,
        )
        .unwrap()
        .total;
        let far = exact_lifshitz_energy(
            &PlanarScenario::symmetric(model, 1.5 * h).unwrap(),
            &quad,
        )
        .unwrap()
        .total;
        prop_assert!(near < 0.0);
        prop_assert!(far < 0.0);
        prop_assert!(far.abs() < near.abs());
    }
}
