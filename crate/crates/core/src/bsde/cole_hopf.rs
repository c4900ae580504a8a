//! Exponential-transform oracle for the pure quadratic driver.
//!
//! For `g = (gamma/2)|z|^2` the solution is `Y_t = (1/gamma) ln E_t[e^{gamma eta}]`.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::par;
use crate::stochastic::SeedSpec;

/// Monte Carlo `(1/gamma) ln((1/n) sum exp(gamma eta_i))`; sample `i` draws
/// from stream `i` of `seed`.
pub fn cole_hopf_y0<F>(gamma: f64, terminal_sampler: F, n_mc: usize, seed: u64) -> Result<f64>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync + Send,
{
    if !(gamma > 0.0) {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    if n_mc == 0 {
        return Err(Error::invalid("n_mc must be at least 1"));
    }
    let samples: Vec<f64> = par::map_indices(n_mc, |i| {
        let mut rng = SeedSpec::new(seed, i as u64).rng();
        gamma * terminal_sampler(&mut rng)
    });
    Ok(log_mean_exp(&samples) / gamma)
}

/// `ln((1/n) sum e^{x_i})` without overflow.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s = par::sum_indices::<f64, _>(xs.len(), |i| (xs[i] - m).exp());
    m + (s / xs.len() as f64).ln()
}

/// Closed form for `eta = 1_{W_T > 0}`: `(1/gamma) ln((e^gamma + 1)/2)`.
pub fn cole_hopf_indicator(gamma: f64) -> f64 {
    ((gamma.exp() + 1.0) / 2.0).ln() / gamma
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_terminal_is_fixed() {
        for gamma in [0.1, 1.0, 5.0] {
            let y = cole_hopf_y0(gamma, |_| 0.3, 64, 1).unwrap();
            assert!((y - 0.3).abs() < 1e-14);
        }
    }

    #[test]
    fn indicator_closed_form() {
        let exact = 0.5 * ((std::f64::consts::E.powi(2) + 1.0) / 2.0).ln();
        assert!((cole_hopf_indicator(2.0) - exact).abs() < 1e-15);
        assert!((exact - 0.71689).abs() < 1e-5);
        let mc = cole_hopf_y0(
            2.0,
            |rng| {
                let w: f64 = StandardNormal.sample(rng);
                if w > 0.0 { 1.0 } else { 0.0 }
            },
            200_000,
            3,
        )
        .unwrap();
        assert!((mc - exact).abs() < 5e-3);
    }

    #[test]
    fn symmetric_terminal_is_monotone_in_gamma() {
        let sampler = |rng: &mut ChaCha8Rng| if rng.random::<bool>() { 1.0 } else { -1.0 };
        let small = cole_hopf_y0(1e-4, sampler, 20_000, 5).unwrap();
        let mid = cole_hopf_y0(0.5, sampler, 20_000, 5).unwrap();
        let big = cole_hopf_y0(2.0, sampler, 20_000, 5).unwrap();
        assert!(small.abs() < 0.02);
        assert!(small < mid && mid < big);
    }
}
