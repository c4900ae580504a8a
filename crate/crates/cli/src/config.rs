//! Strict JSON experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mfbsde_core::bsde::FeatureSelector;
use mfbsde_core::forward::LinearForward;
use mfbsde_core::{DriverName, DriverParams, GrowthProfile, PicardOptions, RegressionConfig, TerminalName};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Solve,
    Picard,
    Particles,
    Compare,
    Pde,
    FkCheck,
    Bounds,
    BrownianCheck,
    RateFit,
    Forward,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 10] = [
        ExperimentKind::Solve,
        ExperimentKind::Picard,
        ExperimentKind::Particles,
        ExperimentKind::Compare,
        ExperimentKind::Pde,
        ExperimentKind::FkCheck,
        ExperimentKind::Bounds,
        ExperimentKind::BrownianCheck,
        ExperimentKind::RateFit,
        ExperimentKind::Forward,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Solve => "solve",
            ExperimentKind::Picard => "picard",
            ExperimentKind::Particles => "particles",
            ExperimentKind::Compare => "compare",
            ExperimentKind::Pde => "pde",
            ExperimentKind::FkCheck => "fk-check",
            ExperimentKind::Bounds => "bounds",
            ExperimentKind::BrownianCheck => "brownian-check",
            ExperimentKind::RateFit => "rate-fit",
            ExperimentKind::Forward => "forward",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureConfig {
    #[default]
    PathState,
    InterceptOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k: f64,
    pub gamma: f64,
    pub gamma0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub beta0: f64,
    pub gamma_tilde: f64,
    /// Slope of the linear growth function `phi(x) = slope * x`.
    pub phi_slope: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        let p = GrowthProfile::default();
        Self {
            k1: p.k1,
            k2: p.k2,
            k3: p.k3,
            k: p.k,
            gamma: p.gamma,
            gamma0: p.gamma0,
            alpha: p.alpha,
            beta: p.beta,
            beta0: p.beta0,
            gamma_tilde: p.gamma_tilde,
            phi_slope: 1.0,
        }
    }
}

impl ProfileConfig {
    pub fn to_profile(&self) -> GrowthProfile {
        GrowthProfile {
            k1: self.k1,
            k2: self.k2,
            k3: self.k3,
            k: self.k,
            gamma: self.gamma,
            gamma0: self.gamma0,
            alpha: self.alpha,
            beta: self.beta,
            beta0: self.beta0,
            gamma_tilde: self.gamma_tilde,
            ..GrowthProfile::default()
        }
        .with_linear_phi(self.phi_slope)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriverParamsConfig {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub gamma: f64,
}

impl Default for DriverParamsConfig {
    fn default() -> Self {
        let p = DriverParams::default();
        Self {
            a: p.a,
            b: p.b,
            c: p.c,
            gamma: p.gamma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicardConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub relaxation: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        let p = PicardOptions::default();
        Self {
            tol: p.tol,
            max_iter: p.max_iter,
            relaxation: p.relaxation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParticlesConfig {
    pub n_list: Vec<usize>,
    /// Independent ensembles per N; gaps are averaged over them.
    pub replicates: usize,
}

impl Default for ParticlesConfig {
    fn default() -> Self {
        Self {
            n_list: vec![64, 128, 256, 512],
            replicates: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub n_cases: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self { n_cases: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForwardConfig {
    pub x0: f64,
    pub b0: f64,
    pub b_ref: f64,
    pub b_x: f64,
    pub s0: f64,
    pub s_ref: f64,
    pub s_x: f64,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        let b = LinearForward::brownian();
        Self {
            x0: 0.0,
            b0: b.b0,
            b_ref: b.b_ref,
            b_x: b.b_x,
            s0: b.s0,
            s_ref: b.s_ref,
            s_x: b.s_x,
        }
    }
}

impl ForwardConfig {
    pub fn to_linear(&self) -> LinearForward {
        LinearForward {
            b0: self.b0,
            b_ref: self.b_ref,
            b_x: self.b_x,
            s0: self.s0,
            s_ref: self.s_ref,
            s_x: self.s_x,
        }
    }
}

/// Drivers of the nonlocal PDE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PdeDriverName {
    /// `g = 0`.
    #[default]
    Zero,
    /// `g = 1`.
    Unit,
    /// `g = z^2 / 2`.
    HalfQuadratic,
    /// `g = c u(t, x')`, averaged over the reference law.
    ReferenceMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    /// PDE time steps; a multiple of the reference step count.
    pub n_steps: usize,
    pub driver: PdeDriverName,
    pub driver_c: f64,
    pub terminal: String,
    pub terminal_param: f64,
    /// Emit every `output_stride`-th time level of the field.
    pub output_stride: usize,
}

impl Default for PdeConfig {
    fn default() -> Self {
        Self {
            x_min: -8.0,
            x_max: 8.0,
            n_x: 401,
            n_steps: 650,
            driver: PdeDriverName::Zero,
            driver_c: 1.0,
            terminal: "cosine".into(),
            terminal_param: 1.0,
            output_stride: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateFitConfig {
    pub ns: Vec<usize>,
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Option<ExperimentKind>,
    pub seed: u64,
    pub horizon: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub dim: usize,
    pub degree: usize,
    pub ridge: f64,
    pub z_max: Option<f64>,
    pub features: FeatureConfig,
    pub driver: String,
    pub driver_params: DriverParamsConfig,
    pub terminal: String,
    pub terminal_param: f64,
    pub profile: ProfileConfig,
    pub picard: PicardConfig,
    pub particles: ParticlesConfig,
    pub compare: CompareConfig,
    pub forward: ForwardConfig,
    pub pde: PdeConfig,
    pub rate_fit: RateFitConfig,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let r = RegressionConfig::default();
        Self {
            kind: None,
            seed: 42,
            horizon: 1.0,
            n_steps: 50,
            n_paths: 4096,
            dim: 1,
            degree: r.degree,
            ridge: r.ridge,
            z_max: None,
            features: FeatureConfig::PathState,
            driver: "zero".into(),
            driver_params: DriverParamsConfig::default(),
            terminal: "constant".into(),
            terminal_param: 1.0,
            profile: ProfileConfig::default(),
            picard: PicardConfig::default(),
            particles: ParticlesConfig::default(),
            compare: CompareConfig::default(),
            forward: ForwardConfig::default(),
            pde: PdeConfig::default(),
            rate_fit: RateFitConfig::default(),
            out: None,
        }
    }
}

fn bad(key: &str, msg: impl fmt::Display) -> CliError {
    CliError::Config(format!("`{key}`: {msg}"))
}

fn positive(key: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(key, format!("must be positive and finite, got {v}")))
    }
}

fn finite(key: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(bad(key, format!("must be finite, got {v}")))
    }
}

impl ExperimentConfig {
    /// Range checks against the solver preconditions; errors name the key.
    pub fn validate(&self) -> Result<(), CliError> {
        positive("horizon", self.horizon)?;
        if self.n_steps == 0 {
            return Err(bad("n_steps", "must be at least 1"));
        }
        if self.n_paths < 2 {
            return Err(bad("n_paths", format!("must be at least 2, got {}", self.n_paths)));
        }
        if self.dim == 0 {
            return Err(bad("dim", "must be at least 1"));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(bad("ridge", format!("must be nonnegative and finite, got {}", self.ridge)));
        }
        if let Some(z) = self.z_max {
            positive("z_max", z)?;
        }
        self.driver_name()?;
        self.terminal_name()?;
        finite("terminal_param", self.terminal_param)?;
        let d = &self.driver_params;
        for (k, v) in [("driver_params.a", d.a), ("driver_params.b", d.b), ("driver_params.c", d.c)] {
            finite(k, v)?;
        }
        if !(d.gamma >= 0.0 && d.gamma.is_finite()) {
            return Err(bad("driver_params.gamma", "must be nonnegative and finite"));
        }
        self.profile
            .to_profile()
            .validate()
            .map_err(|e| bad("profile", e))?;
        positive("picard.tol", self.picard.tol)?;
        if self.picard.max_iter == 0 {
            return Err(bad("picard.max_iter", "must be at least 1"));
        }
        if !(self.picard.relaxation > 0.0 && self.picard.relaxation <= 1.0) {
            return Err(bad("picard.relaxation", "must lie in (0, 1]"));
        }
        let nl = &self.particles.n_list;
        if nl.is_empty() || nl.iter().any(|&n| n < 8) || nl.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad("particles.n_list", "must be strictly increasing with every N >= 8"));
        }
        if self.compare.n_cases == 0 {
            return Err(bad("compare.n_cases", "must be at least 1"));
        }
        let f = &self.forward;
        for (k, v) in [
            ("forward.x0", f.x0),
            ("forward.b0", f.b0),
            ("forward.b_ref", f.b_ref),
            ("forward.b_x", f.b_x),
            ("forward.s0", f.s0),
            ("forward.s_ref", f.s_ref),
            ("forward.s_x", f.s_x),
        ] {
            finite(k, v)?;
        }
        let p = &self.pde;
        finite("pde.x_min", p.x_min)?;
        finite("pde.x_max", p.x_max)?;
        if p.x_min >= p.x_max {
            return Err(bad("pde.x_max", "must exceed pde.x_min"));
        }
        if p.n_x < 3 {
            return Err(bad("pde.n_x", "must be at least 3"));
        }
        // The reference cloud lives on the coarse grid, so only PDE runs couple the two.
        let uses_pde = matches!(self.kind, Some(ExperimentKind::Pde | ExperimentKind::FkCheck));
        if p.n_steps == 0 || (uses_pde && !p.n_steps.is_multiple_of(self.n_steps)) {
            return Err(bad("pde.n_steps", format!("must be a positive multiple of n_steps = {}", self.n_steps)));
        }
        if p.output_stride == 0 {
            return Err(bad("pde.output_stride", "must be at least 1"));
        }
        finite("pde.driver_c", p.driver_c)?;
        finite("pde.terminal_param", p.terminal_param)?;
        p.terminal
            .parse::<TerminalName>()
            .map_err(|e| bad("pde.terminal", e))?;
        Ok(())
    }

    pub fn driver_name(&self) -> Result<DriverName, CliError> {
        self.driver.parse().map_err(|e| bad("driver", e))
    }

    pub fn terminal_name(&self) -> Result<TerminalName, CliError> {
        self.terminal.parse().map_err(|e| bad("terminal", e))
    }

    pub fn driver_params(&self) -> DriverParams {
        let d = &self.driver_params;
        DriverParams {
            a: d.a,
            b: d.b,
            c: d.c,
            gamma: d.gamma,
        }
    }

    pub fn regression(&self) -> RegressionConfig {
        let base = RegressionConfig::for_profile(&self.profile.to_profile(), self.horizon);
        RegressionConfig {
            degree: self.degree,
            ridge: self.ridge,
            z_max: self.z_max.unwrap_or(base.z_max),
            features: match self.features {
                FeatureConfig::PathState => FeatureSelector::PathState,
                FeatureConfig::InterceptOnly => FeatureSelector::InterceptOnly,
            },
            ..base
        }
    }

    pub fn picard_options(&self) -> PicardOptions {
        PicardOptions {
            tol: self.picard.tol,
            max_iter: self.picard.max_iter,
            relaxation: self.picard.relaxation,
            ..PicardOptions::default()
        }
    }
}

/// Parses and validates a config; diagnostics carry the key path and, for
/// syntax errors, line and column.
pub fn parse_config(text: &str, origin: &str) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path.is_empty() || path == "." {
            CliError::Config(format!("{origin}: {inner}"))
        } else {
            CliError::Config(format!("{origin}: `{path}`: {inner}"))
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(r#"{"kind": "solve"}"#, "t").unwrap();
        assert_eq!(c.kind, Some(ExperimentKind::Solve));
        assert_eq!(c.degree, 3);
        assert_eq!(c.ridge, 1e-8);
        assert_eq!(c.regression().degree, 3);
    }

    #[test]
    fn negative_paths_are_named() {
        let e = parse_config(r#"{"n_paths": -4}"#, "t").unwrap_err().to_string();
        assert!(e.contains("n_paths"), "{e}");
        let e = parse_config(r#"{"n_paths": 1}"#, "t").unwrap_err().to_string();
        assert!(e.contains("n_paths"), "{e}");
    }

    #[test]
    fn unknown_keys_are_named() {
        let e = parse_config(r#"{"foo": 1}"#, "t").unwrap_err().to_string();
        assert!(e.contains("foo"), "{e}");
        let e = parse_config(r#"{"picard": {"bar": 1}}"#, "t").unwrap_err().to_string();
        assert!(e.contains("bar") && e.contains("picard"), "{e}");
    }

    #[test]
    fn syntax_errors_carry_position() {
        let e = parse_config("{\n  \"seed\": ,\n}", "t").unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
    }

    #[test]
    fn pde_steps_must_refine_the_reference_grid_only_for_pde_runs() {
        let mut c = parse_config(r#"{"n_steps": 20}"#, "t").unwrap();
        c.kind = Some(ExperimentKind::Pde);
        let e = c.validate().unwrap_err().to_string();
        assert!(e.contains("pde.n_steps"), "{e}");
        c.kind = Some(ExperimentKind::Solve);
        c.validate().unwrap();
    }

    #[test]
    fn names_are_checked() {
        let e = parse_config(r#"{"driver": "nope"}"#, "t").unwrap_err().to_string();
        assert!(e.contains("driver") && e.contains("nope"), "{e}");
        let e = parse_config(r#"{"particles": {"n_list": [64, 32]}}"#, "t").unwrap_err().to_string();
        assert!(e.contains("particles.n_list"), "{e}");
    }
}
