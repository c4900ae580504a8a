//! Comparison-principle harness: ordered data in, ordered solutions out.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::bsde::{
    probe_class, probe_dominance, probe_monotone_mu1, probe_mu2_free, DriverClass, DriverFlags,
    DriverInput, DriverSpec, GrowthProfile, RegressionConfig,
};
use crate::error::{Error, Result};
use crate::measure::w2_to_dirac0;
use crate::picard::{picard_meanfield, PicardOptions};
use crate::scalar::{norm_sq, Real};
use crate::stochastic::{NoiseBatch, PathBatch, SeedSpec};

/// Terminal value as a function of the terminal forward state.
pub type TerminalFn<R> = Arc<dyn Fn(&[R]) -> R + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

/// `(g, eta)` dominated by `(g_bar, eta_bar)`.
#[derive(Clone)]
pub struct ComparisonCase<R> {
    pub seed: u64,
    pub lower: DriverSpec<R>,
    pub upper: DriverSpec<R>,
    pub eta: TerminalFn<R>,
    pub eta_bar: TerminalFn<R>,
    /// The driver that ignores the law of `Z`.
    pub mu2_free: Side,
    /// The driver that is nondecreasing in the law of `Y`.
    pub monotone: Side,
    /// Human-readable parameter summary.
    pub label: String,
}

impl<R> fmt::Debug for ComparisonCase<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ComparisonCase")
            .field("seed", &self.seed)
            .field("label", &self.label)
            .field("mu2_free", &self.mu2_free)
            .field("monotone", &self.monotone)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonVerdict {
    pub holds: bool,
    /// `max_{i,k} (Y^i_k - Ybar^i_k)`.
    pub max_excess: f64,
    pub threshold: f64,
    pub pooled_std_error: f64,
    pub y0: f64,
    pub y0_bar: f64,
}

/// Discretization slack added to the Monte Carlo allowance.
pub const COMPARISON_SLACK: f64 = 1e-3;

/// Random case inside the class: `g = theta0 + a y + (gs/2)|z|^2` is
/// law-free; `g_bar = g + delta (1.5 + 0.5 cos W2(mu2, delta_0)) + c mean(mu1)^+`
/// with `0 <= c <= K`. Terminals are `A sin(w x + p)` and that plus `s >= 0`.
pub fn generate_comparison_case<R: Real>(
    seed: u64,
    profile: &GrowthProfile,
    horizon: f64,
) -> Result<ComparisonCase<R>> {
    profile.validate()?;
    let mut rng = SeedSpec::new(seed, 0xc0c0_c0c0).rng();
    let theta = profile.theta_l2(horizon);
    let theta0 = rng.random_range(-0.5..=0.5) * theta;
    let delta = rng.random_range(0.0..=0.25) * theta;
    let a = rng.random_range(-0.5..=0.5) * profile.k;
    let gs = rng.random_range(0.0..=1.0) * profile.gamma;
    let c = rng.random_range(0.0..=1.0) * profile.k;
    let amp = rng.random_range(0.0..=0.5) * profile.k1;
    let freq = rng.random_range(0.5..2.0);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let lift = rng.random_range(0.0..=0.5) * profile.k1;

    let base = move |inp: &DriverInput<'_, R>| {
        R::of(theta0) + R::of(a) * inp.y + R::of(0.5 * gs) * norm_sq(inp.z)
    };
    let lower = DriverSpec::new(
        format!("base[{seed}]"),
        profile.clone(),
        DriverFlags {
            depends_on_y: true,
            depends_on_z: true,
            ..DriverFlags::none()
        },
        base,
    );
    let upper = DriverSpec::new(
        format!("dominating[{seed}]"),
        profile.clone(),
        DriverFlags {
            depends_on_y: true,
            depends_on_z: true,
            depends_on_mu1: true,
            depends_on_mu2: true,
            monotone_in_mu1: true,
            ..DriverFlags::none()
        },
        move |inp: &DriverInput<'_, R>| {
            let w = w2_to_dirac0(inp.law_z);
            base(inp)
                + R::of(delta) * (R::of(1.5) + R::of(0.5) * w.cos())
                + R::of(c) * inp.law_y.mean()[0].max(R::zero())
        },
    );
    let eta: TerminalFn<R> = Arc::new(move |x: &[R]| R::of(amp * (freq * x[0].f64() + phase).sin()));
    let eta_bar: TerminalFn<R> =
        Arc::new(move |x: &[R]| R::of(amp * (freq * x[0].f64() + phase).sin() + lift));
    Ok(ComparisonCase {
        seed,
        lower,
        upper,
        eta,
        eta_bar,
        mu2_free: Side::Lower,
        monotone: Side::Upper,
        label: format!(
            "theta0={theta0:.4} a={a:.4} gs={gs:.4} delta={delta:.4} c={c:.4} amp={amp:.4} lift={lift:.4}"
        ),
    })
}

impl<R: Real> ComparisonCase<R> {
    fn side(&self, s: Side) -> &DriverSpec<R> {
        match s {
            Side::Lower => &self.lower,
            Side::Upper => &self.upper,
        }
    }

    /// Probes every hypothesis on `n_probes` random arguments and on the
    /// terminal states of `features`.
    pub fn validate(&self, features: &PathBatch<R>, z_dim: usize, n_probes: usize) -> Result<()> {
        let horizon = features.grid().horizon().f64();
        let sd = features.dim();
        let wrap = |e: Error| match e {
            Error::ProbeFailed(m) => Error::invalid(format!("comparison hypotheses not met: {m}")),
            e => e,
        };
        let k1 = self.lower.profile.k1;
        let m = features.n_steps();
        for i in 0..features.n_paths() {
            let x = features.state(i, m);
            let a = (self.eta)(x).f64();
            let b = (self.eta_bar)(x).f64();
            if !(a <= b) {
                return Err(Error::invalid(format!(
                    "comparison hypotheses not met: eta > eta_bar on path {i}"
                )));
            }
            if a.abs() > k1 || b.abs() > k1 {
                return Err(Error::invalid(format!(
                    "comparison hypotheses not met: terminal exceeds K1 on path {i}"
                )));
            }
        }
        for d in [&self.lower, &self.upper] {
            probe_class(d, DriverClass::LinearGrowth, horizon, sd, z_dim, n_probes, self.seed).map_err(wrap)?;
        }
        probe_dominance(&self.lower, &self.upper, horizon, sd, z_dim, n_probes, self.seed).map_err(wrap)?;
        probe_mu2_free(self.side(self.mu2_free), horizon, sd, z_dim, n_probes, self.seed).map_err(wrap)?;
        probe_monotone_mu1(self.side(self.monotone), horizon, sd, z_dim, n_probes, self.seed).map_err(wrap)?;
        Ok(())
    }
}

/// Solves both systems on shared noise and compares them path by path.
pub fn run_comparison<R: Real>(
    case: &ComparisonCase<R>,
    features: &PathBatch<R>,
    noise: &NoiseBatch<R>,
    cfg: &RegressionConfig,
    opts: &PicardOptions,
) -> Result<ComparisonVerdict> {
    case.validate(features, noise.dim(), 200)?;
    let m = features.n_steps();
    let terminal = |f: &TerminalFn<R>| -> Vec<R> {
        (0..features.n_paths()).map(|i| f(features.state(i, m))).collect()
    };
    let eta = terminal(&case.eta);
    let eta_bar = terminal(&case.eta_bar);
    let (lo, hi) = rayon::join(
        || picard_meanfield(&case.lower, &eta, features, noise, cfg, opts),
        || picard_meanfield(&case.upper, &eta_bar, features, noise, cfg, opts),
    );
    let (lo, _) = lo?;
    let (hi, _) = hi?;
    let max_excess = lo
        .y_field()
        .iter()
        .zip(hi.y_field())
        .map(|(a, b)| (*a - *b).f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let pooled = (lo.y0_std_error.powi(2) + hi.y0_std_error.powi(2)).sqrt();
    let threshold = 3.0 * pooled + COMPARISON_SLACK;
    Ok(ComparisonVerdict {
        holds: max_excess <= threshold,
        max_excess,
        threshold,
        pooled_std_error: pooled,
        y0: lo.y0(),
        y0_bar: hi.y0(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::{cumulate, make_grid, sample_brownian};

    #[test]
    fn generated_cases_are_deterministic_and_valid() {
        let g = make_grid(0.0f64, 1.0, 10).unwrap();
        let noise = sample_brownian(&g, 100, 1, SeedSpec::master(1)).unwrap();
        let f = cumulate(&noise, &g).unwrap();
        let p = GrowthProfile::default();
        let a = generate_comparison_case::<f64>(5, &p, 1.0).unwrap();
        let b = generate_comparison_case::<f64>(5, &p, 1.0).unwrap();
        assert_eq!(a.label, b.label);
        a.validate(&f, 1, 300).unwrap();
        let c = generate_comparison_case::<f64>(6, &p, 1.0).unwrap();
        assert_ne!(a.label, c.label);
    }

    #[test]
    fn swapped_case_fails_probes() {
        let g = make_grid(0.0f64, 1.0, 10).unwrap();
        let noise = sample_brownian(&g, 50, 1, SeedSpec::master(1)).unwrap();
        let f = cumulate(&noise, &g).unwrap();
        let mut case = generate_comparison_case::<f64>(3, &GrowthProfile::default(), 1.0).unwrap();
        std::mem::swap(&mut case.eta, &mut case.eta_bar);
        let err = run_comparison(&case, &f, &noise, &RegressionConfig::default(), &PicardOptions::default());
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }
}
