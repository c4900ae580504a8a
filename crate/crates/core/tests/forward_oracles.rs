use mfbsde_core::forward::{integrate_from, integrate_reference, moment_report, LinearForward};
use mfbsde_core::{cumulate, make_grid, sample_brownian, PathBatch, SeedSpec};

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn terminal(b: &PathBatch<f64>) -> Vec<f64> {
    b.terminal()
}

#[test]
fn mean_field_drift_grows_the_mean_exponentially() {
    let spec = LinearForward {
        b_ref: 1.0,
        ..LinearForward::brownian()
    };
    let g = make_grid(0.0, 1.0, 1000).unwrap();
    let cloud = integrate_reference(&spec, &[1.0], &g, 10_000, SeedSpec::master(8)).unwrap();
    let (mean, se) = mean_and_se(&terminal(&cloud));
    assert!((mean - std::f64::consts::E).abs() <= 3.0 * se, "{mean} +- {se}");
}

#[test]
fn restarting_at_the_origin_matches_the_reference_law() {
    let spec = LinearForward {
        b_ref: 0.5,
        b_x: -0.3,
        s_x: 0.2,
        ..LinearForward::brownian()
    };
    let g = make_grid(0.0, 1.0, 50).unwrap();
    let reference = integrate_reference(&spec, &[0.4], &g, 4000, SeedSpec::master(2)).unwrap();
    let from = integrate_from(&spec, &reference, &[0.4], &g, 4000, SeedSpec::master(2)).unwrap();
    let (ma, sa) = mean_and_se(&terminal(&reference));
    let (mb, sb) = mean_and_se(&terminal(&from));
    assert!((ma - mb).abs() <= 3.0 * sa.hypot(sb), "{ma} vs {mb}");
}

#[test]
fn start_point_dependence_is_lipschitz() {
    let spec = LinearForward {
        b_ref: 0.5,
        b_x: -0.5,
        s_x: 0.3,
        ..LinearForward::brownian()
    };
    let g = make_grid(0.0, 1.0, 50).unwrap();
    let reference = integrate_reference(&spec, &[0.0], &g, 500, SeedSpec::master(4)).unwrap();
    let base = integrate_from(&spec, &reference, &[0.0], &g, 2000, SeedSpec::master(5)).unwrap();
    let gap = |h: f64| {
        let moved = integrate_from(&spec, &reference, &[h], &g, 2000, SeedSpec::master(5)).unwrap();
        let total: f64 = (0..2000)
            .map(|i| (0..=50).map(|k| (moved.state(i, k)[0] - base.state(i, k)[0]).abs()).fold(0.0, f64::max))
            .sum();
        total / 2000.0
    };
    let (r1, r2) = (gap(0.1) / 0.1, gap(0.05) / 0.05);
    assert!(r1 < 5.0 && r2 < 5.0, "{r1} {r2}");
    assert!((r1 / r2 - 1.0).abs() < 0.1, "{r1} {r2}");
}

#[test]
fn sup_moment_matches_brute_force() {
    let g = make_grid(0.0, 1.0, 100).unwrap();
    let n = 20_000;
    let cloud = integrate_reference(&LinearForward::brownian(), &[0.0], &g, n, SeedSpec::master(6)).unwrap();
    let got = moment_report(&cloud, 2.0).unwrap().sup_moment;
    let noise = sample_brownian(&g, n, 1, SeedSpec::master(99)).unwrap();
    let w: PathBatch<f64> = cumulate(&noise, &g).unwrap();
    let brute = (0..n)
        .map(|i| (0..=100).map(|k| w.state(i, k)[0].powi(2)).fold(0.0, f64::max))
        .sum::<f64>()
        / n as f64;
    assert!((got / brute - 1.0).abs() < 0.1, "{got} vs {brute}");
}
