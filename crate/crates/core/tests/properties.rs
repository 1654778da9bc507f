use proptest::prelude::*;

use tumorstab::experiments::{fmt_float, RunConfig, Shape};
use tumorstab::linearized::{fit_decay, NormKind};
use tumorstab::transport::deviation_norms;
use tumorstab::{Interpolation, RadialField, RadialGrid};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn floats_round_trip(x in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
        prop_assert_eq!(fmt_float(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn exact_exponentials_are_recovered(k in 1e-4f64..10.0, mu in 0.05f64..0.5) {
        let times: Vec<f64> = (0..=400).map(|i| i as f64 * 0.25).collect();
        let norms: Vec<f64> = times.iter().map(|t| k * (-mu * t).exp()).collect();
        let fit = fit_decay(&times, &norms, NormKind::X).unwrap();
        prop_assert!((fit.mu_fit - mu).abs() <= 1e-9 * mu);
        prop_assert!((fit.k_fit / k - 1.0).abs() <= 1e-8);
        prop_assert!(fit.monotone && fit.valid);
    }

    #[test]
    fn norms_are_ordered_and_homogeneous(
        coeffs in prop::collection::vec(-1.0f64..1.0, 1..6),
        dz in -1.0f64..1.0,
        scale in 1e-6f64..1e3,
    ) {
        let g = RadialGrid::uniform(201).unwrap();
        let dev: Vec<f64> = g
            .nodes()
            .iter()
            .map(|&r| coeffs.iter().enumerate().map(|(k, c)| c * (k as f64 * std::f64::consts::PI * r).cos()).sum())
            .collect();
        let (nx, nx0) = deviation_norms(g.nodes(), &dev, dz);
        prop_assert!(nx0 >= nx);
        let scaled: Vec<f64> = dev.iter().map(|v| v * scale).collect();
        let (sx, sx0) = deviation_norms(g.nodes(), &scaled, dz * scale);
        prop_assert!((sx - scale * nx).abs() <= 1e-12 * scale * nx.max(1e-300));
        prop_assert!((sx0 - scale * nx0).abs() <= 1e-12 * scale * nx0.max(1e-300));
    }

    #[test]
    fn monotone_interpolant_stays_in_range(values in prop::collection::vec(-5.0f64..5.0, 11), probes in prop::collection::vec(0.0f64..=1.0, 20)) {
        let g = RadialGrid::uniform(11).unwrap();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let f = RadialField::new(g, sorted.clone(), Interpolation::MonotoneCubic).unwrap();
        for r in probes {
            let v = f.eval(r);
            prop_assert!(v >= sorted[0] - 1e-12 && v <= sorted[10] + 1e-12);
        }
    }

    #[test]
    fn configs_round_trip(seed in 0..=i64::MAX as u64, amp in 0.0f64..0.1, offset in -2.0f64..2.0, m in 11usize..2000, shape in 0usize..3) {
        let mut cfg = RunConfig { seed, grid_size: m, ..RunConfig::default() }.with_amplitude(amp);
        cfg.perturbation.z_offset = offset;
        cfg.perturbation.shape = [Shape::Poly, Shape::Sine, Shape::Bump][shape];
        prop_assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
