use mfbsde_core::{cumulate, make_grid, sample_brownian, sample_streams, SeedSpec};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cumulate_then_diff_recovers_increments(seed in any::<u64>(), paths in 1usize..20, steps in 1usize..30, dim in 1usize..3) {
        let g = make_grid(0.0f64, 1.0, steps).unwrap();
        let noise = sample_brownian(&g, paths, dim, SeedSpec::master(seed)).unwrap();
        let back = cumulate(&noise, &g).unwrap().diff();
        for (x, y) in noise.increments().iter().zip(back.increments()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn a_path_depends_only_on_its_stream(seed in any::<u64>(), n in 2usize..40, pick in 0usize..40) {
        let pick = pick % n;
        let g = make_grid(0.0f64, 2.0, 8).unwrap();
        let batch = sample_brownian(&g, n, 2, SeedSpec::master(seed)).unwrap();
        let single = sample_streams(&g, seed, &[pick as u64], 2).unwrap();
        prop_assert_eq!(batch.path(pick), single.path(0));
    }
}

#[test]
fn sampling_ignores_the_thread_count() {
    let g = make_grid(0.0f64, 1.0, 25).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sample_brownian(&g, 3000, 2, SeedSpec::master(17)).unwrap())
    };
    assert_eq!(run(1).increments(), run(4).increments());
}

#[test]
fn different_masters_differ() {
    let g = make_grid(0.0f64, 1.0, 5).unwrap();
    let a = sample_brownian(&g, 4, 1, SeedSpec::master(1)).unwrap();
    let b = sample_brownian(&g, 4, 1, SeedSpec::master(2)).unwrap();
    assert_ne!(a.increments(), b.increments());
}
