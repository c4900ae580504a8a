use std::sync::Arc;

use mfbsde_core::comparison::Side;
use mfbsde_core::{
    cumulate, make_driver, make_grid, picard_meanfield, run_comparison, sample_brownian, ComparisonCase, DriverName,
    DriverParams, GrowthProfile, PicardOptions, RegressionConfig, SeedSpec, TerminalFn,
};

#[test]
fn mean_plus_y_on_half_horizon() {
    let g = make_grid(0.0f64, 0.5, 200).unwrap();
    let noise = sample_brownian(&g, 512, 1, SeedSpec::master(1)).unwrap();
    let f = cumulate(&noise, &g).unwrap();
    let d = make_driver(DriverName::MeanPlusY, &DriverParams::default(), &GrowthProfile::default()).unwrap();
    let (sol, trace) =
        picard_meanfield(&d, &vec![1.0; 512], &f, &noise, &RegressionConfig::default(), &PicardOptions::default())
            .unwrap();
    assert!(trace.converged);
    assert!((sol.y0() - std::f64::consts::E).abs() < 1e-2, "{}", sol.y0());
}

#[test]
fn ordered_constant_terminals_compare() {
    let g = make_grid(0.0f64, 1.0, 100).unwrap();
    let noise = sample_brownian(&g, 256, 1, SeedSpec::master(2)).unwrap();
    let f = cumulate(&noise, &g).unwrap();
    let d = make_driver(DriverName::LinearMean, &DriverParams::default(), &GrowthProfile::default()).unwrap();
    let zero: TerminalFn<f64> = Arc::new(|_| 0.0);
    let one: TerminalFn<f64> = Arc::new(|_| 1.0);
    let case = ComparisonCase {
        seed: 0,
        lower: d.clone(),
        upper: d,
        eta: zero,
        eta_bar: one,
        mu2_free: Side::Lower,
        monotone: Side::Upper,
        label: "mean driver, 0 vs 1".into(),
    };
    let v = run_comparison(&case, &f, &noise, &RegressionConfig::default(), &PicardOptions::default()).unwrap();
    assert!(v.holds);
    assert!(v.y0.abs() < 1e-12);
    assert!((v.y0_bar - std::f64::consts::E).abs() < 2e-2, "{}", v.y0_bar);
}
