//! Explicit a-priori constants of the existence theory.

use crate::error::{Error, Result};

use super::profile::GrowthProfile;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsReport {
    /// Local-solution radius for `Y`: `2(K1 + K2)`.
    pub l1: f64,
    /// Local-solution radius for `Z`: `(2/g^2) e^{2 g K1} + (4 K2 / g) e^{2 g L1}`.
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
    /// Global `Y` bound under one-sided growth.
    pub l5: f64,
    /// Global `Z` energy bound under one-sided growth.
    pub l6: f64,
    pub eps0: f64,
    /// Global `Y` bound under linear growth in `(y, mu1)`.
    pub m1: f64,
    /// Global `Z` energy bound under linear growth in `(y, mu1)`.
    pub m2: f64,
    /// Picard `Z` energy bound `(2/g^2) e^{2 g K1}`.
    pub m2_tilde: f64,
    /// Picard `Y` bound `K1 + g0 T^{(1-a)/2} (C_a + M2~)`.
    pub m1_tilde: f64,
    /// Young constant used inside `M1~`.
    pub c_alpha: f64,
    /// Left side of the smallness condition on `gamma0`.
    pub picard_lhs: f64,
    /// Whether `gamma0` passes the smallness condition (`lhs <= M2~ / 2`).
    pub picard_small: bool,
}

impl BoundsReport {
    /// `(name, value)` pairs in a fixed order.
    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("L1", self.l1),
            ("L2", self.l2),
            ("L3", self.l3),
            ("L4", self.l4),
            ("L5", self.l5),
            ("L6", self.l6),
            ("eps0", self.eps0),
            ("M1", self.m1),
            ("M2", self.m2),
            ("M2_tilde", self.m2_tilde),
            ("M1_tilde", self.m1_tilde),
            ("C_alpha", self.c_alpha),
            ("picard_lhs", self.picard_lhs),
            ("picard_small", if self.picard_small { 1.0 } else { 0.0 }),
        ]
    }
}

/// `(e^{g|x|} - g|x| - 1) / g^2`.
pub fn phi_big(gamma: f64, x: f64) -> f64 {
    let u = gamma * x.abs();
    (u.exp_m1() - u) / (gamma * gamma)
}

/// Derivative of [`phi_big`] in `|x|`: `(e^{g|x|} - 1) / g`.
fn phi_big_prime(gamma: f64, x: f64) -> f64 {
    (gamma * x.abs()).exp_m1() / gamma
}

pub fn compute_bounds(p: &GrowthProfile, horizon: f64) -> Result<BoundsReport> {
    p.validate()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    let t = horizon;
    let g = p.gamma;
    let a = p.alpha;

    let l1 = 2.0 * (p.k1 + p.k2);
    let l2 = 2.0 / (g * g) * (2.0 * g * p.k1).exp() + 4.0 * p.k2 / g * (2.0 * g * l1).exp();

    let bb = p.beta + p.beta0;
    let eps0 = 1.0 / (4.0 * (2.0 + bb * t));
    let gt = p.gamma_tilde;
    let young = ((1.0 + a) / 2.0).powf((1.0 + a) / (1.0 - a));
    let l3 = (1.0 - a) * gt * eps0 / 4.0 * young * (2.0 * p.gamma0 / (gt * eps0)).powf(2.0 / (1.0 - a));
    let l4 = (1.0 - a) * gt * eps0 / 8.0 * young * (4.0 * p.gamma0 / gt).powf(2.0 / (1.0 - a));
    let l5 = (2.0 * (p.k1 + p.k2) + 2.0 * l3 * t + 4.0 * eps0 * p.k2 + 4.0 * l4 * t) * (2.0 * bb * t).exp();
    let l6 = (2.0 + bb * t) / gt * (4.0 * l5 + 16.0 * l4 * t) + 4.0 * p.k2 / gt;

    let cbar = p.k1 * p.k1 + p.k3 + p.k * p.k + 2.0 * p.k + 2.0;
    let m1 = (cbar * (cbar * t).exp()).sqrt();
    let m2 = 2.0 * phi_big(g, p.k1)
        + 2.0 * phi_big_prime(g, m1) * ((p.k3 * t).sqrt() + 2.0 * p.k * m1 * t);

    let m2_tilde = 2.0 / (g * g) * (2.0 * g * p.k1).exp();
    let c_alpha = (1.0 - a) / 2.0;
    let tpow = t.powf((1.0 - a) / 2.0);
    let m1_tilde = p.k1 + p.gamma0 * tpow * (c_alpha + m2_tilde);
    let picard_lhs = 2.0 * p.gamma0 / g
        * (2.0 * g * (p.k1 + p.gamma0 * tpow * (c_alpha + m2_tilde))).exp()
        * tpow
        * (c_alpha + m2_tilde);
    let picard_small = picard_lhs <= m2_tilde / 2.0;

    Ok(BoundsReport {
        l1,
        l2,
        l3,
        l4,
        l5,
        l6,
        eps0,
        m1,
        m2,
        m2_tilde,
        m1_tilde,
        c_alpha,
        picard_lhs,
        picard_small,
    })
}
