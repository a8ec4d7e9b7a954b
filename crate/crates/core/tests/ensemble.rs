use std::f64::consts::FRAC_1_SQRT_2;

use geopump::ensemble::{run_ensemble, sigma_slope_scan, EnsembleConfig};

const SEED: u64 = 2024;

#[test]
fn reference_slope_matches_power_law() {
    let stats = run_ensemble(&EnsembleConfig::reference(SEED)).unwrap();
    assert!((stats.analytic_slope + 0.076394).abs() < 1e-6);
    assert!(stats.relative_error() < 0.10, "fitted {}", stats.fitted_slope);
    assert_eq!(stats.sigma_e2[0], 0.0);
}

#[test]
fn slope_scales_with_coherence() {
    let normalized: Vec<f64> = [0.3, FRAC_1_SQRT_2, 0.9]
        .iter()
        .map(|&c| {
            let mut cfg = EnsembleConfig::reference(SEED);
            cfg.init.c = c;
            run_ensemble(&cfg).unwrap().fitted_slope / (c * (1.0 - c * c).sqrt())
        })
        .collect();
    let mid = normalized[1];
    for v in &normalized {
        assert!((v - mid).abs() < 0.15 * mid.abs(), "{normalized:?}");
    }
}

#[test]
fn trivial_bundle_pumps_nothing() {
    let reference = run_ensemble(&EnsembleConfig::reference(SEED)).unwrap().fitted_slope;
    let cfg = EnsembleConfig {
        m: 3.0,
        ..EnsembleConfig::reference(SEED)
    };
    let trivial = run_ensemble(&cfg).unwrap();
    assert!(trivial.chi12.abs() < 1e-6);
    assert!(trivial.fitted_slope.abs() < 0.05 * reference.abs());
}

#[test]
fn spread_grows_slower_near_quasiperiodic_limit() {
    let scan = sigma_slope_scan(&EnsembleConfig::reference(SEED), &[(3, 2), (21, 13)]).unwrap();
    assert_eq!(scan.len(), 2);
    assert!(scan[1].slope < 0.5 * scan[0].slope, "{scan:?}");
}
