//! Named drivers and terminal functions shared by the command line and tests.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::bsde::{DriverFlags, DriverInput, DriverSpec, GrowthProfile};
use crate::comparison::TerminalFn;
use crate::error::{Error, Result};
use crate::measure::w2_to_dirac0;
use crate::scalar::{norm_sq, Real};
use crate::stochastic::SeedSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DriverName {
    /// `g = 0`.
    Zero,
    /// `g = c`.
    Constant,
    /// `g = (gamma/2)|z|^2`.
    PureQuadratic,
    /// `g = a mean(mu1)`.
    LinearMean,
    /// `g = a mean(mu1) + y`.
    MeanPlusY,
    /// `g = c W2(mu2, delta_0)`.
    W2OfZ,
    /// `g = (gamma/2)|z|^2 + c W2(mu2, delta_0)`, carrying its split.
    AdditiveSplit,
    /// `g = a mean(mu1) - b y + c sin(z_1)`, Lipschitz and free of `mu2`.
    LipschitzMean,
}

impl DriverName {
    pub const ALL: [DriverName; 8] = [
        DriverName::Zero,
        DriverName::Constant,
        DriverName::PureQuadratic,
        DriverName::LinearMean,
        DriverName::MeanPlusY,
        DriverName::W2OfZ,
        DriverName::AdditiveSplit,
        DriverName::LipschitzMean,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DriverName::Zero => "zero",
            DriverName::Constant => "constant",
            DriverName::PureQuadratic => "pure-quadratic",
            DriverName::LinearMean => "linear-mean",
            DriverName::MeanPlusY => "mean-plus-y",
            DriverName::W2OfZ => "w2-of-z",
            DriverName::AdditiveSplit => "additive-split",
            DriverName::LipschitzMean => "lipschitz-mean",
        }
    }
}

impl fmt::Display for DriverName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DriverName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DriverName::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = DriverName::ALL.iter().map(|d| d.as_str()).collect();
                Error::invalid(format!("unknown driver '{s}', expected one of {}", names.join(", ")))
            })
    }
}

/// Coefficients of the catalog drivers; each driver reads the ones it needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub gamma: f64,
}

impl Default for DriverParams {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 0.5,
            c: 0.25,
            gamma: 2.0,
        }
    }
}

fn quadratic<R: Real>(gamma: f64, profile: &GrowthProfile) -> DriverSpec<R> {
    let flags = DriverFlags {
        depends_on_z: true,
        ..DriverFlags::none()
    };
    let h = R::of(0.5 * gamma);
    DriverSpec::new("pure-quadratic", profile.clone(), flags, move |inp: &DriverInput<'_, R>| {
        h * norm_sq(inp.z)
    })
}

fn w2_of_z<R: Real>(c: f64, profile: &GrowthProfile) -> DriverSpec<R> {
    let flags = DriverFlags {
        depends_on_mu2: true,
        ..DriverFlags::none()
    };
    let c = R::of(c);
    DriverSpec::new("w2-of-z", profile.clone(), flags, move |inp: &DriverInput<'_, R>| {
        c * w2_to_dirac0(inp.law_z)
    })
}

/// Builds a catalog driver; `profile.gamma` is raised to cover quadratic terms.
pub fn make_driver<R: Real>(name: DriverName, p: &DriverParams, profile: &GrowthProfile) -> Result<DriverSpec<R>> {
    if ![p.a, p.b, p.c, p.gamma].iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("driver parameters must be finite"));
    }
    if p.gamma < 0.0 {
        return Err(Error::invalid(format!("gamma must be nonnegative, got {}", p.gamma)));
    }
    let mut profile = profile.clone();
    let (a, b, c) = (R::of(p.a), R::of(p.b), R::of(p.c));
    let spec = match name {
        DriverName::Zero => DriverSpec::new("zero", profile, DriverFlags::none(), |_: &DriverInput<'_, R>| R::zero()),
        DriverName::Constant => DriverSpec::new("constant", profile, DriverFlags::none(), move |_: &DriverInput<'_, R>| c),
        DriverName::PureQuadratic => {
            profile.gamma = profile.gamma.max(p.gamma);
            quadratic(p.gamma, &profile)
        }
        DriverName::LinearMean => {
            let flags = DriverFlags {
                depends_on_mu1: true,
                monotone_in_mu1: p.a >= 0.0,
                ..DriverFlags::none()
            };
            DriverSpec::new("linear-mean", profile, flags, move |inp: &DriverInput<'_, R>| {
                a * inp.law_y.mean()[0]
            })
        }
        DriverName::MeanPlusY => {
            let flags = DriverFlags {
                depends_on_y: true,
                depends_on_mu1: true,
                monotone_in_mu1: p.a >= 0.0,
                ..DriverFlags::none()
            };
            DriverSpec::new("mean-plus-y", profile, flags, move |inp: &DriverInput<'_, R>| {
                a * inp.law_y.mean()[0] + inp.y
            })
        }
        DriverName::W2OfZ => w2_of_z(p.c, &profile),
        DriverName::AdditiveSplit => {
            profile.gamma = profile.gamma.max(p.gamma);
            DriverSpec::sum("additive-split", quadratic(p.gamma, &profile), w2_of_z(p.c, &profile))
        }
        DriverName::LipschitzMean => {
            let flags = DriverFlags {
                depends_on_y: true,
                depends_on_z: true,
                depends_on_mu1: true,
                monotone_in_mu1: p.a >= 0.0,
                ..DriverFlags::none()
            };
            DriverSpec::new("lipschitz-mean", profile, flags, move |inp: &DriverInput<'_, R>| {
                a * inp.law_y.mean()[0] - b * inp.y + c * inp.z[0].sin()
            })
        }
    };
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TerminalName {
    /// `eta = c`.
    Constant,
    /// `eta = 1{x_1 > 0}`.
    Indicator,
    /// `eta = tanh(x_1)`.
    Tanh,
    /// `eta = cos(x_1)`.
    Cosine,
    /// `eta = c exp(-x_1^2)`.
    Bump,
}

impl TerminalName {
    pub const ALL: [TerminalName; 5] = [
        TerminalName::Constant,
        TerminalName::Indicator,
        TerminalName::Tanh,
        TerminalName::Cosine,
        TerminalName::Bump,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TerminalName::Constant => "constant",
            TerminalName::Indicator => "indicator",
            TerminalName::Tanh => "tanh",
            TerminalName::Cosine => "cosine",
            TerminalName::Bump => "bump",
        }
    }

    /// `sup |eta|` for the parameter `c`.
    pub fn sup_bound(self, c: f64) -> f64 {
        match self {
            TerminalName::Constant | TerminalName::Bump => c.abs(),
            _ => 1.0,
        }
    }
}

impl fmt::Display for TerminalName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TerminalName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TerminalName::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = TerminalName::ALL.iter().map(|d| d.as_str()).collect();
                Error::invalid(format!("unknown terminal '{s}', expected one of {}", names.join(", ")))
            })
    }
}

/// Terminal function of the forward state; `c` scales the constant and bump.
pub fn make_terminal<R: Real>(name: TerminalName, c: f64) -> Result<TerminalFn<R>> {
    if !c.is_finite() {
        return Err(Error::invalid("terminal parameter must be finite"));
    }
    let c = R::of(c);
    let f: TerminalFn<R> = match name {
        TerminalName::Constant => Arc::new(move |_: &[R]| c),
        TerminalName::Indicator => Arc::new(|x: &[R]| if x[0] > R::zero() { R::one() } else { R::zero() }),
        TerminalName::Tanh => Arc::new(|x: &[R]| x[0].tanh()),
        TerminalName::Cosine => Arc::new(|x: &[R]| x[0].cos()),
        TerminalName::Bump => Arc::new(move |x: &[R]| c * (-(x[0] * x[0])).exp()),
    };
    Ok(f)
}

/// A random driver and terminal inside the linear-growth class of its profile.
#[derive(Clone)]
pub struct BoundsCase<R> {
    pub seed: u64,
    pub profile: GrowthProfile,
    pub driver: DriverSpec<R>,
    pub terminal: TerminalFn<R>,
    pub label: String,
}

impl<R> fmt::Debug for BoundsCase<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundsCase")
            .field("seed", &self.seed)
            .field("label", &self.label)
            .finish_non_exhaustive()
    }
}

/// `g = theta0 + a y + (gs/2)|z|^2 + c mean(mu1)` with `|theta0| <= theta`,
/// `|a|, |c| <= K`, `gs <= gamma`, and `eta = A sin(w x + p)` with `A <= K1`.
pub fn random_linear_growth_case<R: Real>(seed: u64, horizon: f64) -> Result<BoundsCase<R>> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid("horizon must be positive"));
    }
    let mut rng = SeedSpec::new(seed, 0xb0b0_b0b0).rng();
    let profile = GrowthProfile {
        k1: rng.random_range(0.5..=1.5),
        k2: rng.random_range(0.2..=1.0),
        k3: rng.random_range(0.2..=1.0),
        k: rng.random_range(0.2..=1.0),
        gamma: rng.random_range(0.5..=2.0),
        ..GrowthProfile::default()
    };
    let theta = profile.theta_l2(horizon);
    let theta0 = rng.random_range(-1.0..=1.0) * theta;
    let a = rng.random_range(-1.0..=1.0) * profile.k;
    let gs = rng.random_range(0.0..=1.0) * profile.gamma;
    let c = rng.random_range(-1.0..=1.0) * profile.k;
    let amp = rng.random_range(0.0..=1.0) * profile.k1;
    // Kept low enough for a cubic basis to resolve over the range of W_T.
    let freq = rng.random_range(0.25..=1.0);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let flags = DriverFlags {
        depends_on_y: true,
        depends_on_z: true,
        depends_on_mu1: true,
        monotone_in_mu1: c >= 0.0,
        ..DriverFlags::none()
    };
    let driver = DriverSpec::new(
        format!("linear-growth[{seed}]"),
        profile.clone(),
        flags,
        move |inp: &DriverInput<'_, R>| {
            R::of(theta0) + R::of(a) * inp.y + R::of(0.5 * gs) * norm_sq(inp.z) + R::of(c) * inp.law_y.mean()[0]
        },
    );
    let terminal: TerminalFn<R> = Arc::new(move |x: &[R]| R::of(amp * (freq * x[0].f64() + phase).sin()));
    Ok(BoundsCase {
        seed,
        profile,
        driver,
        terminal,
        label: format!("theta0={theta0:.4} a={a:.4} gs={gs:.4} c={c:.4} amp={amp:.4} freq={freq:.4}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::EmpiricalMeasure;

    fn eval(d: &DriverSpec<f64>, y: f64, z: f64, law_y: &EmpiricalMeasure<f64>, law_z: &EmpiricalMeasure<f64>) -> f64 {
        d.eval(&DriverInput {
            t: 0.0,
            step: 0,
            path: 0,
            state: &[0.0],
            y,
            z: &[z],
            law_y,
            law_z,
        })
    }

    #[test]
    fn names_round_trip() {
        for d in DriverName::ALL {
            assert_eq!(d.as_str().parse::<DriverName>().unwrap(), d);
        }
        for t in TerminalName::ALL {
            assert_eq!(t.as_str().parse::<TerminalName>().unwrap(), t);
        }
        let err = "foo".parse::<DriverName>().unwrap_err().to_string();
        assert!(err.contains("foo") && err.contains("pure-quadratic"));
    }

    #[test]
    fn closed_forms() {
        let p = DriverParams::default();
        let prof = GrowthProfile::default();
        let ly = EmpiricalMeasure::from_scalars(vec![1.0, 3.0]).unwrap();
        let lz = EmpiricalMeasure::from_scalars(vec![3.0, -4.0, 0.0, 0.0]).unwrap();
        let d = |n| make_driver::<f64>(n, &p, &prof).unwrap();
        assert_eq!(eval(&d(DriverName::Zero), 1.0, 1.0, &ly, &lz), 0.0);
        assert_eq!(eval(&d(DriverName::Constant), 1.0, 1.0, &ly, &lz), 0.25);
        assert_eq!(eval(&d(DriverName::PureQuadratic), 0.0, 3.0, &ly, &lz), 9.0);
        assert_eq!(eval(&d(DriverName::LinearMean), 0.0, 0.0, &ly, &lz), 2.0);
        assert_eq!(eval(&d(DriverName::MeanPlusY), 0.5, 0.0, &ly, &lz), 2.5);
        assert_eq!(eval(&d(DriverName::W2OfZ), 0.0, 0.0, &ly, &lz), 0.625);
        let split = d(DriverName::AdditiveSplit);
        assert!(split.split.is_some());
        assert!((eval(&split, 0.0, 1.0, &ly, &lz) - (1.0 + 0.625)).abs() < 1e-15);
        assert_eq!(split.profile.gamma, 2.0);
        assert_eq!(eval(&d(DriverName::LipschitzMean), 2.0, 0.0, &ly, &lz), 1.0);
        assert!(!d(DriverName::LipschitzMean).flags.depends_on_mu2);
    }

    #[test]
    fn terminals() {
        let ind = make_terminal::<f64>(TerminalName::Indicator, 0.0).unwrap();
        assert_eq!((ind(&[0.1]), ind(&[0.0])), (1.0, 0.0));
        let bump = make_terminal::<f64>(TerminalName::Bump, 0.5).unwrap();
        assert_eq!(bump(&[0.0]), 0.5);
        assert_eq!(TerminalName::Bump.sup_bound(-0.5), 0.5);
        assert!(make_terminal::<f64>(TerminalName::Constant, f64::NAN).is_err());
    }

    #[test]
    fn random_cases_sit_in_the_linear_growth_class() {
        for seed in 0..10 {
            let case = random_linear_growth_case::<f64>(seed, 1.0).unwrap();
            crate::bsde::probe_class(&case.driver, crate::bsde::DriverClass::LinearGrowth, 1.0, 1, 1, 300, seed).unwrap();
            for x in [-3.0, -0.5, 0.0, 1.2, 4.0] {
                assert!((case.terminal)(&[x]).abs() <= case.profile.k1);
            }
        }
    }
}
