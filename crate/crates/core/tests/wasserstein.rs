use mfbsde_core::{w2_assignment, w2_gap, w2_quantile_1d, w2_to_dirac0, EmpiricalMeasure};
use proptest::prelude::*;

fn brute_force(a: &[f64], b: &[f64], dim: usize) -> f64 {
    fn go(a: &[f64], b: &[f64], dim: usize, used: &mut Vec<bool>, i: usize, acc: f64, best: &mut f64) {
        if i == used.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                let c: f64 = (0..dim).map(|d| (a[i * dim + d] - b[j * dim + d]).powi(2)).sum();
                go(a, b, dim, used, i + 1, acc + c, best);
                used[j] = false;
            }
        }
    }
    let n = a.len() / dim;
    let mut best = f64::INFINITY;
    go(a, b, dim, &mut vec![false; n], 0, 0.0, &mut best);
    (best / n as f64).sqrt()
}

fn cloud(n: usize, dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, n * dim)
}

fn m(atoms: Vec<f64>, dim: usize) -> EmpiricalMeasure<f64> {
    EmpiricalMeasure::new(atoms, dim).unwrap()
}

/// `(n, dim, mu, nu, rho)` with three clouds of equal size.
fn triple() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1usize..=6, 1usize..=3).prop_flat_map(|(n, d)| (Just(d), cloud(n, d), cloud(n, d), cloud(n, d)))
}

proptest! {
    #[test]
    fn assignment_matches_enumeration((d, a, b, _) in triple()) {
        let exact = brute_force(&a, &b, d);
        let got = w2_assignment(&m(a, d), &m(b, d)).unwrap();
        prop_assert!((got - exact).abs() <= 1e-10, "{got} vs {exact}");
    }

    #[test]
    fn symmetric_and_triangular((d, a, b, c) in triple()) {
        let (mu, nu, rho) = (m(a, d), m(b, d), m(c, d));
        let ab = w2_assignment(&mu, &nu).unwrap();
        let ba = w2_assignment(&nu, &mu).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12);
        let ac = w2_assignment(&mu, &rho).unwrap();
        let cb = w2_assignment(&rho, &nu).unwrap();
        prop_assert!(ab <= ac + cb + 1e-12);
        prop_assert!(w2_assignment(&mu, &mu).unwrap() <= 1e-12);
    }

    #[test]
    fn quantile_coupling_is_optimal_in_one_dimension(a in cloud(7, 1), b in cloud(7, 1)) {
        let q = w2_quantile_1d(&m(a.clone(), 1), &m(b.clone(), 1)).unwrap();
        prop_assert!((q - brute_force(&a, &b, 1)).abs() <= 1e-10);
    }

    #[test]
    fn scaling_and_translation((d, a, b, _) in triple(), c in -2.0f64..2.0, h in -2.0f64..2.0) {
        let (mu, nu) = (m(a, d), m(b, d));
        let base = w2_assignment(&mu, &nu).unwrap();
        let scaled = w2_assignment(&mu.scaled(c), &nu.scaled(c)).unwrap();
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-9);
        let moved = w2_assignment(&mu.shifted(h), &nu.shifted(h)).unwrap();
        prop_assert!((moved - base).abs() <= 1e-9);
    }

    #[test]
    fn distance_to_the_origin_mass((d, a, _, _) in triple()) {
        let n = a.len() / d;
        let mu = m(a, d);
        let zeros = m(vec![0.0; n * d], d);
        let direct = w2_to_dirac0(&mu);
        prop_assert!((direct - w2_assignment(&mu, &zeros).unwrap()).abs() <= 1e-10);
        prop_assert!((direct - mu.second_moment().sqrt()).abs() <= 1e-12);
        prop_assert!((direct - w2_gap(&mu, &EmpiricalMeasure::dirac_zero(d), 512).unwrap()).abs() <= 1e-10);
    }
}

#[test]
fn unequal_sizes_are_rejected_by_assignment() {
    let a = m(vec![0.0, 1.0, 2.0, 3.0], 2);
    let b = m(vec![0.0, 1.0], 2);
    assert!(w2_assignment(&a, &b).is_err());
}
