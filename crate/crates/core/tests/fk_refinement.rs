use std::sync::Arc;

use mfbsde_core::forward::LinearForward;
use mfbsde_core::pde::{PdeArgs, PdeDriver, PdeTerminal};
use mfbsde_core::{feynman_kac_check, make_grid, PdeSpec, PicardOptions, RegressionConfig, SeedSpec, SpaceGrid};

fn gap(ref_steps: usize, n_x: usize, pde_steps: usize, seed: u64) -> f64 {
    let reference = make_grid(0.0, 1.0, ref_steps).unwrap();
    let spec = PdeSpec::build(
        Arc::new(LinearForward::brownian()),
        PdeDriver::new("zero", false, |_: &PdeArgs<f64>| 0.0),
        PdeTerminal::local(f64::cos),
        0.0,
        &reference,
        4096,
        SeedSpec::master(seed),
    )
    .unwrap();
    let space = SpaceGrid::new(-8.0, 8.0, n_x).unwrap();
    let time = make_grid(0.0, 1.0, pde_steps).unwrap();
    feynman_kac_check(&spec, &space, &time, &RegressionConfig::default(), &PicardOptions::default())
        .unwrap()
        .gap
}

#[test]
fn heat_cosine_gap_is_small() {
    assert!(gap(25, 401, 625, 3) <= 5e-2);
}

#[test]
fn refining_both_grids_does_not_grow_the_gap() {
    // Averaged over seeds so the Monte Carlo part of the gap does not dominate.
    let seeds = 0..8u64;
    let coarse: f64 = seeds.clone().map(|s| gap(10, 101, 40, s)).sum::<f64>();
    let fine: f64 = seeds.map(|s| gap(20, 201, 160, s)).sum::<f64>();
    assert!(fine <= 1.2 * coarse, "{fine} vs {coarse}");
}
