//! Declared growth constants of a driver and terminal value.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type PhiFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Constants bounding `(g, eta)`. `theta` is taken constant in time, so the
/// integral bounds `K2` and `K3` fix it (see [`GrowthProfile::theta_l1`]).
#[derive(Clone)]
pub struct GrowthProfile {
    /// `||eta||_inf <= k1`.
    pub k1: f64,
    /// `int_0^T theta dt <= k2`.
    pub k2: f64,
    /// `int_0^T theta^2 dt <= k3`.
    pub k3: f64,
    pub k: f64,
    pub gamma: f64,
    pub gamma0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub beta0: f64,
    pub gamma_tilde: f64,
    /// Nondecreasing growth function in `y` (also used for the law of `Y`).
    pub phi: PhiFn,
    pub phi_label: String,
}

impl fmt::Debug for GrowthProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GrowthProfile")
            .field("k1", &self.k1)
            .field("k2", &self.k2)
            .field("k3", &self.k3)
            .field("k", &self.k)
            .field("gamma", &self.gamma)
            .field("gamma0", &self.gamma0)
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .field("beta0", &self.beta0)
            .field("gamma_tilde", &self.gamma_tilde)
            .field("phi", &self.phi_label)
            .finish()
    }
}

impl Default for GrowthProfile {
    fn default() -> Self {
        Self {
            k1: 1.0,
            k2: 1.0,
            k3: 1.0,
            k: 1.0,
            gamma: 1.0,
            gamma0: 1.0,
            alpha: 0.5,
            beta: 1.0,
            beta0: 1.0,
            gamma_tilde: 1.0,
            phi: Arc::new(|x| x),
            phi_label: "x".into(),
        }
    }
}

/// Assumption families a driver may be declared (and probed) against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DriverClass {
    /// `|g| <= theta + phi(|y|) + gamma/2 |z|^2 + phi(W2(mu1)) + gamma0 W2(mu2)^(1+alpha)`.
    GeneralGrowth,
    /// `|g| <= theta + K|y| + gamma/2 |z|^2 + K W2(mu1)`.
    LinearGrowth,
    /// One-sided growth in `y` plus strict quadratic growth in `z`.
    OneSided,
    /// `|g| <= theta + gamma/2 |z|^2 + gamma0 W2(mu2)^(1+alpha)`.
    LawOfZ,
    /// `g = g1(z) + g2(mu2)` with `|g1| <= theta + gamma/2|z|^2`, `|g2| <= theta + gamma0 W2(mu2)^2`.
    SplitZ,
}

impl GrowthProfile {
    /// Replaces `phi` by `x -> slope * x`.
    pub fn with_linear_phi(mut self, slope: f64) -> Self {
        self.phi = Arc::new(move |x| slope * x);
        self.phi_label = format!("{slope}*x");
        self
    }

    pub fn with_phi(mut self, label: impl Into<String>, phi: PhiFn) -> Self {
        self.phi = phi;
        self.phi_label = label.into();
        self
    }

    pub fn phi_label(&self) -> &str {
        &self.phi_label
    }

    /// Constant `theta` with `int theta = K2` on `[0, T]`.
    pub fn theta_l1(&self, horizon: f64) -> f64 {
        self.k2 / horizon
    }

    /// Constant `theta` with `int theta^2 = K3` on `[0, T]`.
    pub fn theta_l2(&self, horizon: f64) -> f64 {
        (self.k3 / horizon).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("k", self.k),
            ("gamma", self.gamma),
            ("gamma0", self.gamma0),
            ("beta", self.beta),
            ("beta0", self.beta0),
            ("gamma_tilde", self.gamma_tilde),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("profile.{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!(
                "profile.alpha must lie in [0, 1), got {}",
                self.alpha
            )));
        }
        let mut prev = (self.phi)(0.0);
        for i in 1..=400 {
            let x = (i as f64 / 40.0).powi(2);
            let v = (self.phi)(x);
            if !v.is_finite() || v < prev - 1e-12 * prev.abs().max(1.0) {
                return Err(Error::invalid(format!(
                    "profile.phi is not nondecreasing near x = {x}"
                )));
            }
            prev = v;
        }
        Ok(())
    }
}
