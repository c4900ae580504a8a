//! Drivers `g(t, y, z, mu1, mu2)` and their hypothesis probes.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::measure::{w2_to_dirac0, EmpiricalMeasure};
use crate::scalar::{norm_sq, Real};
use crate::stochastic::SeedSpec;

use super::profile::{DriverClass, GrowthProfile};

/// Everything a driver may read at one `(path, step)`.
#[derive(Debug, Clone, Copy)]
pub struct DriverInput<'a, R> {
    pub t: R,
    pub step: usize,
    pub path: usize,
    /// Forward state of the path at `step`.
    pub state: &'a [R],
    pub y: R,
    pub z: &'a [R],
    /// Law of `Y` at `step`; atoms are in path order when built from a field.
    pub law_y: &'a EmpiricalMeasure<R>,
    pub law_z: &'a EmpiricalMeasure<R>,
}

pub trait Generator<R>: Send + Sync {
    fn eval(&self, input: &DriverInput<'_, R>) -> R;
}

impl<R, F> Generator<R> for F
where
    F: Fn(&DriverInput<'_, R>) -> R + Send + Sync,
{
    fn eval(&self, input: &DriverInput<'_, R>) -> R {
        self(input)
    }
}

pub type GeneratorRef<R> = Arc<dyn Generator<R>>;

/// Which arguments the driver actually reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DriverFlags {
    pub depends_on_state: bool,
    pub depends_on_y: bool,
    pub depends_on_z: bool,
    pub depends_on_mu1: bool,
    pub depends_on_mu2: bool,
    /// Nondecreasing in `mu1` in the one-sided Lipschitz sense with constant `K`.
    pub monotone_in_mu1: bool,
}

impl DriverFlags {
    pub fn none() -> Self {
        Self::default()
    }
}

/// The `(g1, g2)` halves of an additively split driver.
pub type SplitParts<R> = (Box<DriverSpec<R>>, Box<DriverSpec<R>>);

#[derive(Clone)]
pub struct DriverSpec<R> {
    pub name: String,
    pub generator: GeneratorRef<R>,
    pub profile: GrowthProfile,
    pub flags: DriverFlags,
    /// `(g1, g2)` with `g = g1(z) + g2(mu2)` when the driver splits additively.
    pub split: Option<SplitParts<R>>,
}

impl<R> fmt::Debug for DriverSpec<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriverSpec")
            .field("name", &self.name)
            .field("flags", &self.flags)
            .field("profile", &self.profile)
            .field("split", &self.split.is_some())
            .finish()
    }
}

impl<R: Real> DriverSpec<R> {
    pub fn new(
        name: impl Into<String>,
        profile: GrowthProfile,
        flags: DriverFlags,
        generator: impl Generator<R> + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            generator: Arc::new(generator),
            profile,
            flags,
            split: None,
        }
    }

    #[inline]
    pub fn eval(&self, input: &DriverInput<'_, R>) -> R {
        self.generator.eval(input)
    }

    /// `g1 + g2`, remembering the parts.
    pub fn sum(name: impl Into<String>, g1: DriverSpec<R>, g2: DriverSpec<R>) -> Self {
        let a = g1.generator.clone();
        let b = g2.generator.clone();
        let flags = DriverFlags {
            depends_on_state: g1.flags.depends_on_state || g2.flags.depends_on_state,
            depends_on_y: g1.flags.depends_on_y || g2.flags.depends_on_y,
            depends_on_z: g1.flags.depends_on_z || g2.flags.depends_on_z,
            depends_on_mu1: g1.flags.depends_on_mu1 || g2.flags.depends_on_mu1,
            depends_on_mu2: g1.flags.depends_on_mu2 || g2.flags.depends_on_mu2,
            monotone_in_mu1: (g1.flags.monotone_in_mu1 || !g1.flags.depends_on_mu1)
                && (g2.flags.monotone_in_mu1 || !g2.flags.depends_on_mu1),
        };
        let profile = g1.profile.clone();
        Self {
            name: name.into(),
            generator: Arc::new(move |inp: &DriverInput<'_, R>| a.eval(inp) + b.eval(inp)),
            profile,
            flags,
            split: Some((Box::new(g1), Box::new(g2))),
        }
    }

    /// True when the driver reads neither `Y`'s law nor `Z`'s law.
    pub fn is_law_free(&self) -> bool {
        !self.flags.depends_on_mu1 && !self.flags.depends_on_mu2
    }
}

/// Random argument generator shared by all probes.
struct ProbeSampler {
    rng: rand_chacha::ChaCha8Rng,
}

struct Probe<R> {
    t: R,
    state: Vec<R>,
    y: R,
    z: Vec<R>,
    law_y: EmpiricalMeasure<R>,
    law_z: EmpiricalMeasure<R>,
}

impl ProbeSampler {
    fn new(seed: u64) -> Self {
        Self {
            rng: SeedSpec::new(seed, 0xfeed).rng(),
        }
    }

    fn scale(&mut self) -> f64 {
        10f64.powf(self.rng.random_range(-1.5..0.7))
    }

    fn cloud<R: Real>(&mut self, n: usize, dim: usize) -> EmpiricalMeasure<R> {
        let s = self.scale();
        let shift = self.rng.random_range(-s..s);
        let atoms: Vec<R> = (0..n * dim)
            .map(|_| R::of(shift + self.rng.random_range(-s..s)))
            .collect();
        EmpiricalMeasure::new(atoms, dim).expect("finite atoms")
    }

    fn probe<R: Real>(&mut self, horizon: f64, state_dim: usize, z_dim: usize) -> Probe<R> {
        let t = R::of(self.rng.random_range(0.0..horizon));
        let s = self.scale();
        let state = (0..state_dim).map(|_| R::of(self.rng.random_range(-3.0..3.0))).collect();
        let y = R::of(self.rng.random_range(-s..s));
        let s = self.scale();
        let z = (0..z_dim).map(|_| R::of(self.rng.random_range(-s..s))).collect();
        let n = self.rng.random_range(1..6);
        let law_y = self.cloud(n, 1);
        let n = self.rng.random_range(1..6);
        let law_z = self.cloud(n, z_dim);
        Probe {
            t,
            state,
            y,
            z,
            law_y,
            law_z,
        }
    }
}

impl<R: Real> Probe<R> {
    fn input(&self) -> DriverInput<'_, R> {
        DriverInput {
            t: self.t,
            step: 0,
            path: 0,
            state: &self.state,
            y: self.y,
            z: &self.z,
            law_y: &self.law_y,
            law_z: &self.law_z,
        }
    }
}

const PROBE_SLACK: f64 = 1e-9;

/// Spot-checks the growth inequality of `class` on `n_probes` random
/// arguments. `theta` is constant: `K2/T` for the L1 classes and
/// `sqrt(K3/T)` for [`DriverClass::LinearGrowth`].
pub fn probe_class<R: Real>(
    driver: &DriverSpec<R>,
    class: DriverClass,
    horizon: f64,
    state_dim: usize,
    z_dim: usize,
    n_probes: usize,
    seed: u64,
) -> Result<()> {
    let p = &driver.profile;
    p.validate()?;
    if class == DriverClass::SplitZ {
        let (g1, g2) = driver.split.as_ref().ok_or_else(|| {
            Error::ProbeFailed(format!("driver '{}' declares no additive split", driver.name))
        })?;
        return probe_split(driver, g1, g2, horizon, state_dim, z_dim, n_probes, seed);
    }
    let mut sampler = ProbeSampler::new(seed);
    for _ in 0..n_probes {
        let pr = sampler.probe::<R>(horizon, state_dim, z_dim);
        let g = driver.eval(&pr.input()).f64();
        let ay = pr.y.f64().abs();
        let zz = norm_sq(&pr.z).f64();
        let w1 = w2_to_dirac0(&pr.law_y).f64();
        let w2 = w2_to_dirac0(&pr.law_z).f64();
        let fail = |lhs: f64, rhs: f64, what: &str| -> Result<()> {
            if !lhs.is_finite() || lhs > rhs + PROBE_SLACK * (1.0 + rhs.abs()) {
                Err(Error::ProbeFailed(format!(
                    "driver '{}' violates {what} at y = {ay:.4}, |z|^2 = {zz:.4}: {lhs:.6e} > {rhs:.6e}",
                    driver.name
                )))
            } else {
                Ok(())
            }
        };
        match class {
            DriverClass::GeneralGrowth => {
                let rhs = p.theta_l1(horizon)
                    + (p.phi)(ay)
                    + 0.5 * p.gamma * zz
                    + (p.phi)(w1)
                    + p.gamma0 * w2.powf(1.0 + p.alpha);
                fail(g.abs(), rhs, "the general growth bound")?;
            }
            DriverClass::LinearGrowth => {
                let rhs = p.theta_l2(horizon) + p.k * ay + 0.5 * p.gamma * zz + p.k * w1;
                fail(g.abs(), rhs, "the linear growth bound")?;
            }
            DriverClass::OneSided => {
                let common = p.theta_l1(horizon)
                    + p.beta * ay
                    + p.beta0 * w1
                    + p.gamma0 * w2.powf(1.0 + p.alpha);
                let sgn = if pr.y.f64() > 0.0 {
                    1.0
                } else if pr.y.f64() < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                fail(sgn * g, common + 0.5 * p.gamma * zz, "the one-sided bound")?;
                let upper = g <= -0.5 * p.gamma_tilde * zz + common + PROBE_SLACK * (1.0 + common);
                let lower = g >= 0.5 * p.gamma_tilde * zz - common - PROBE_SLACK * (1.0 + common);
                if !(upper || lower) {
                    return Err(Error::ProbeFailed(format!(
                        "driver '{}' is not strictly quadratic in z at |z|^2 = {zz:.4}",
                        driver.name
                    )));
                }
            }
            DriverClass::LawOfZ => {
                let rhs = p.theta_l1(horizon) + 0.5 * p.gamma * zz + p.gamma0 * w2.powf(1.0 + p.alpha);
                fail(g.abs(), rhs, "the law-of-Z growth bound")?;
            }
            DriverClass::SplitZ => unreachable!(),
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn probe_split<R: Real>(
    driver: &DriverSpec<R>,
    g1: &DriverSpec<R>,
    g2: &DriverSpec<R>,
    horizon: f64,
    state_dim: usize,
    z_dim: usize,
    n_probes: usize,
    seed: u64,
) -> Result<()> {
    let p = &driver.profile;
    let theta = p.theta_l1(horizon);
    let mut sampler = ProbeSampler::new(seed);
    for _ in 0..n_probes {
        let pr = sampler.probe::<R>(horizon, state_dim, z_dim);
        let inp = pr.input();
        let a = g1.eval(&inp).f64();
        let b = g2.eval(&inp).f64();
        let zz = norm_sq(&pr.z).f64();
        let w2 = w2_to_dirac0(&pr.law_z).f64();
        let r1 = theta + 0.5 * p.gamma * zz;
        let r2 = theta + p.gamma0 * w2 * w2;
        if !(a.abs() <= r1 + PROBE_SLACK * (1.0 + r1)) || !(b.abs() <= r2 + PROBE_SLACK * (1.0 + r2)) {
            return Err(Error::ProbeFailed(format!(
                "split driver '{}' exceeds its component bounds",
                driver.name
            )));
        }
    }
    Ok(())
}

/// Checks `g(mu1) - g(mu1') <= K ||(xi - xi')^+||_2` for coupled clouds
/// `mu1 = law(xi)`, `mu1' = law(xi')` (the one-sided monotonicity in `mu1`).
pub fn probe_monotone_mu1<R: Real>(
    driver: &DriverSpec<R>,
    horizon: f64,
    state_dim: usize,
    z_dim: usize,
    n_probes: usize,
    seed: u64,
) -> Result<()> {
    let k = driver.profile.k;
    let mut sampler = ProbeSampler::new(seed ^ 0x9e37_79b9);
    for _ in 0..n_probes {
        let pr = sampler.probe::<R>(horizon, state_dim, z_dim);
        let n = pr.law_y.len();
        let s = sampler.scale();
        let other: Vec<R> = pr
            .law_y
            .atoms()
            .iter()
            .map(|&x| x + R::of(sampler.rng.random_range(-s..s)))
            .collect();
        let pos: f64 = pr
            .law_y
            .atoms()
            .iter()
            .zip(&other)
            .map(|(&a, &b)| (a - b).f64().max(0.0).powi(2))
            .sum::<f64>()
            / n as f64;
        let law_other = EmpiricalMeasure::new(other, 1)?;
        let a = driver.eval(&pr.input()).f64();
        let mut inp = pr.input();
        inp.law_y = &law_other;
        let b = driver.eval(&inp).f64();
        let rhs = k * pos.sqrt();
        if !(a - b <= rhs + PROBE_SLACK * (1.0 + rhs)) {
            return Err(Error::ProbeFailed(format!(
                "driver '{}' is not nondecreasing in mu1: {:.6e} > {rhs:.6e}",
                driver.name,
                a - b
            )));
        }
    }
    Ok(())
}

/// Checks that the driver ignores the law of `Z`.
pub fn probe_mu2_free<R: Real>(
    driver: &DriverSpec<R>,
    horizon: f64,
    state_dim: usize,
    z_dim: usize,
    n_probes: usize,
    seed: u64,
) -> Result<()> {
    let mut sampler = ProbeSampler::new(seed ^ 0x5151);
    for _ in 0..n_probes {
        let pr = sampler.probe::<R>(horizon, state_dim, z_dim);
        let other = sampler.cloud::<R>(3, z_dim);
        let a = driver.eval(&pr.input());
        let mut inp = pr.input();
        inp.law_z = &other;
        if driver.eval(&inp) != a {
            return Err(Error::ProbeFailed(format!(
                "driver '{}' reads the law of Z",
                driver.name
            )));
        }
    }
    Ok(())
}

/// Checks `lower <= upper` pointwise on random arguments.
pub fn probe_dominance<R: Real>(
    lower: &DriverSpec<R>,
    upper: &DriverSpec<R>,
    horizon: f64,
    state_dim: usize,
    z_dim: usize,
    n_probes: usize,
    seed: u64,
) -> Result<()> {
    let mut sampler = ProbeSampler::new(seed ^ 0xd0d0);
    for _ in 0..n_probes {
        let pr = sampler.probe::<R>(horizon, state_dim, z_dim);
        let a = lower.eval(&pr.input()).f64();
        let b = upper.eval(&pr.input()).f64();
        if !(a <= b + PROBE_SLACK * (1.0 + b.abs())) {
            return Err(Error::ProbeFailed(format!(
                "driver '{}' exceeds '{}': {a:.6e} > {b:.6e}",
                lower.name, upper.name
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(gamma: f64) -> DriverSpec<f64> {
        let profile = GrowthProfile {
            gamma,
            ..GrowthProfile::default()
        };
        DriverSpec::new(
            "quad",
            profile,
            DriverFlags {
                depends_on_z: true,
                ..DriverFlags::none()
            },
            move |inp: &DriverInput<'_, f64>| 0.5 * gamma * norm_sq(inp.z),
        )
    }

    #[test]
    fn quadratic_driver_is_in_every_growth_class() {
        let g = quad(2.0);
        for class in [
            DriverClass::GeneralGrowth,
            DriverClass::LinearGrowth,
            DriverClass::LawOfZ,
        ] {
            probe_class(&g, class, 1.0, 1, 1, 500, 7).unwrap();
        }
        // Strictly quadratic from below; one-sided bound holds for |g| <= gamma/2 |z|^2.
        let mut one_sided = g.clone();
        one_sided.profile.gamma_tilde = 2.0;
        probe_class(&one_sided, DriverClass::OneSided, 1.0, 1, 1, 500, 7).unwrap();
    }

    #[test]
    fn probe_catches_understated_gamma() {
        let mut g = quad(2.0);
        g.profile.gamma = 1.0;
        let err = probe_class(&g, DriverClass::LawOfZ, 1.0, 1, 1, 500, 7).unwrap_err();
        assert!(matches!(err, Error::ProbeFailed(_)));
    }

    #[test]
    fn monotonicity_probe() {
        let mean = DriverSpec::new(
            "mean",
            GrowthProfile::default(),
            DriverFlags {
                depends_on_mu1: true,
                monotone_in_mu1: true,
                ..DriverFlags::none()
            },
            |inp: &DriverInput<'_, f64>| inp.law_y.mean()[0],
        );
        probe_monotone_mu1(&mean, 1.0, 1, 1, 500, 1).unwrap();
        probe_mu2_free(&mean, 1.0, 1, 1, 100, 1).unwrap();
        let decreasing = DriverSpec::new(
            "neg-mean",
            GrowthProfile::default(),
            DriverFlags::none(),
            |inp: &DriverInput<'_, f64>| -inp.law_y.mean()[0],
        );
        assert!(probe_monotone_mu1(&decreasing, 1.0, 1, 1, 500, 1).is_err());
    }
}
