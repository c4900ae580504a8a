//! Backward least-squares Monte Carlo for a single BSDE.
//!
//! At step `k`, with `E_k` the regression of `Y_{k+1}` on the basis of the
//! forward state,
//!
//! ```text
//! Z_k = clip( regress((Y_{k+1} - E_k) dW_k / dt), z_max )
//! Y_k = E_k + g(t_k, Y_k, Z_k, mu1_k, mu2_k) dt        (fixed point in Y_k)
//! ```
//!
//! Subtracting `E_k` before projecting `Y_{k+1} dW_k` leaves the conditional
//! expectation unchanged and removes most of its variance.

use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;
use crate::par;
use crate::scalar::{norm, Real};
use crate::stochastic::{NoiseBatch, PathBatch, TimeGrid};

use super::driver::{DriverInput, DriverSpec};
use super::regression::{RegressionPlan, StepModel};

/// Which state variables enter the regression basis.
///
/// Cloud moments are constant across paths within a step, so they are
/// spanned by the intercept; the selector therefore only chooses between the
/// path state and the intercept alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureSelector {
    #[default]
    PathState,
    InterceptOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionConfig {
    pub degree: usize,
    pub ridge: f64,
    pub z_max: f64,
    pub features: FeatureSelector,
    /// Maximum fixed-point sweeps for the implicit-in-y step.
    pub implicit_sweeps: usize,
    pub implicit_tol: f64,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            degree: 3,
            ridge: 1e-8,
            z_max: 10.0,
            features: FeatureSelector::PathState,
            implicit_sweeps: 5,
            implicit_tol: 1e-10,
        }
    }
}

impl RegressionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::invalid(format!("ridge must be >= 0, got {}", self.ridge)));
        }
        if !(self.z_max > 0.0) {
            return Err(Error::invalid(format!("z_max must be > 0, got {}", self.z_max)));
        }
        if self.implicit_sweeps == 0 {
            return Err(Error::invalid("implicit_sweeps must be at least 1"));
        }
        Ok(())
    }

    /// Default config with `z_max = max(10, gamma * M1)`.
    pub fn for_profile(profile: &super::profile::GrowthProfile, horizon: f64) -> Self {
        let m1 = super::bounds::compute_bounds(profile, horizon)
            .map(|b| b.m1)
            .unwrap_or(0.0);
        let z_max = (profile.gamma * m1).max(10.0);
        Self {
            z_max: if z_max.is_finite() { z_max } else { 10.0 },
            ..Self::default()
        }
    }
}

/// Per-step laws fed to the driver, indexed `0..=n_steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenLaws<R> {
    pub mu1: Vec<EmpiricalMeasure<R>>,
    pub mu2: Vec<EmpiricalMeasure<R>>,
}

impl<R: Real> FrozenLaws<R> {
    pub fn constant(n_steps: usize, mu1: EmpiricalMeasure<R>, mu2: EmpiricalMeasure<R>) -> Self {
        Self {
            mu1: vec![mu1; n_steps + 1],
            mu2: vec![mu2; n_steps + 1],
        }
    }

    /// Laws of `(Y_k, Z_k)` of a solution; the terminal `Z` law is `delta_0`.
    pub fn from_solution(sol: &BsdeSolution<R>) -> Self {
        let m = sol.n_steps();
        let mu1 = (0..=m).map(|k| sol.y_law(k)).collect();
        let mut mu2: Vec<_> = (0..m).map(|k| sol.z_law(k)).collect();
        mu2.push(EmpiricalMeasure::dirac_zero(sol.z_dim()));
        Self { mu1, mu2 }
    }

    fn check(&self, n_steps: usize) -> Result<()> {
        if self.mu1.len() != n_steps + 1 || self.mu2.len() != n_steps + 1 {
            return Err(Error::invalid(format!(
                "frozen laws cover {} / {} steps, expected {}",
                self.mu1.len(),
                self.mu2.len(),
                n_steps + 1
            )));
        }
        Ok(())
    }
}

/// Fitted regression maps of one step, kept for replay.
#[derive(Debug, Clone, PartialEq)]
pub struct StepModels {
    pub expectation: StepModel,
    pub z: Vec<StepModel>,
}

#[derive(Debug, Clone)]
pub struct BsdeSolution<R> {
    n_paths: usize,
    z_dim: usize,
    grid: TimeGrid<R>,
    y: Vec<R>,
    z: Vec<R>,
    /// Mean squared residual of the `Y` regression per step (`n_steps` entries).
    pub residuals: Vec<f64>,
    pub sup_norm_y: f64,
    pub bmo: f64,
    /// Standard error of `Y_0` from the step-0 regressand.
    pub y0_std_error: f64,
    pub models: Vec<StepModels>,
}

impl<R: Real> BsdeSolution<R> {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    pub fn z_dim(&self) -> usize {
        self.z_dim
    }

    pub fn grid(&self) -> &TimeGrid<R> {
        &self.grid
    }

    /// Row-major `n_paths x (n_steps + 1)`.
    pub fn y_field(&self) -> &[R] {
        &self.y
    }

    /// Row-major `n_paths x n_steps x z_dim`.
    pub fn z_field(&self) -> &[R] {
        &self.z
    }

    #[inline]
    pub fn y(&self, path: usize, step: usize) -> R {
        self.y[path * (self.n_steps() + 1) + step]
    }

    #[inline]
    pub fn z(&self, path: usize, step: usize) -> &[R] {
        let o = (path * self.n_steps() + step) * self.z_dim;
        &self.z[o..o + self.z_dim]
    }

    pub fn y_column(&self, step: usize) -> Vec<R> {
        (0..self.n_paths).map(|i| self.y(i, step)).collect()
    }

    pub fn y_law(&self, step: usize) -> EmpiricalMeasure<R> {
        EmpiricalMeasure::from_atoms_unchecked(self.y_column(step), 1)
    }

    pub fn z_law(&self, step: usize) -> EmpiricalMeasure<R> {
        let mut atoms = Vec::with_capacity(self.n_paths * self.z_dim);
        for i in 0..self.n_paths {
            atoms.extend_from_slice(self.z(i, step));
        }
        EmpiricalMeasure::from_atoms_unchecked(atoms, self.z_dim)
    }

    /// Cross-sectional mean of `Y` at step 0.
    pub fn y0(&self) -> f64 {
        self.y_column(0).iter().map(|v| v.f64()).sum::<f64>() / self.n_paths as f64
    }

    /// Per-step `(mean Y, std Y, mean |Z|)`; the terminal row reports `|Z| = 0`.
    pub fn step_summary(&self) -> Vec<(f64, f64, f64)> {
        let n = self.n_paths as f64;
        (0..=self.n_steps())
            .map(|k| {
                let col = self.y_column(k);
                let mean = col.iter().map(|v| v.f64()).sum::<f64>() / n;
                let var = col.iter().map(|v| (v.f64() - mean).powi(2)).sum::<f64>() / n;
                let mz = if k < self.n_steps() {
                    (0..self.n_paths).map(|i| norm(self.z(i, k)).f64()).sum::<f64>() / n
                } else {
                    0.0
                };
                (mean, var.sqrt(), mz)
            })
            .collect()
    }

    /// Adds `shift[k]` to every path at step `k`.
    pub(crate) fn shift_y(&mut self, shift: &[R]) {
        let w = self.n_steps() + 1;
        for row in self.y.chunks_exact_mut(w) {
            for (v, &s) in row.iter_mut().zip(shift) {
                *v += s;
            }
        }
        self.refresh_diagnostics();
    }

    /// The Picard seed: `Y` equal to the terminal value at every step, `Z = 0`.
    pub(crate) fn broadcast_terminal(terminal: &[R], grid: TimeGrid<R>, z_dim: usize) -> Self {
        let n = terminal.len();
        let m = grid.n_steps();
        let mut y = Vec::with_capacity(n * (m + 1));
        for &v in terminal {
            y.extend(std::iter::repeat_n(v, m + 1));
        }
        let mut sol = Self {
            n_paths: n,
            z_dim,
            grid,
            y,
            z: vec![R::zero(); n * m * z_dim],
            residuals: vec![0.0; m],
            sup_norm_y: 0.0,
            bmo: 0.0,
            y0_std_error: 0.0,
            models: Vec::new(),
        };
        sol.refresh_diagnostics();
        sol
    }

    /// Paths re-ordered by index (diagnostics are recomputed).
    pub fn select_paths(&self, paths: &[usize]) -> Self {
        let w = self.n_steps() + 1;
        let zw = self.n_steps() * self.z_dim;
        let mut y = Vec::with_capacity(paths.len() * w);
        let mut z = Vec::with_capacity(paths.len() * zw);
        for &p in paths {
            y.extend_from_slice(&self.y[p * w..(p + 1) * w]);
            z.extend_from_slice(&self.z[p * zw..(p + 1) * zw]);
        }
        let mut sol = Self {
            n_paths: paths.len(),
            z_dim: self.z_dim,
            grid: self.grid,
            y,
            z,
            residuals: self.residuals.clone(),
            sup_norm_y: 0.0,
            bmo: 0.0,
            y0_std_error: self.y0_std_error,
            models: self.models.clone(),
        };
        sol.refresh_diagnostics();
        sol
    }

    /// `self <- w * self + (1 - w) * other` on both fields.
    pub(crate) fn relax_towards(&mut self, other: &Self, w: f64) {
        let w = R::of(w);
        let v = R::one() - w;
        for (a, &b) in self.y.iter_mut().zip(&other.y) {
            *a = w * *a + v * b;
        }
        for (a, &b) in self.z.iter_mut().zip(&other.z) {
            *a = w * *a + v * b;
        }
        self.refresh_diagnostics();
    }

    pub(crate) fn refresh_diagnostics(&mut self) {
        self.sup_norm_y = self.y.iter().map(|v| v.f64().abs()).fold(0.0, f64::max);
        self.bmo = bmo_proxy(self);
    }
}

/// `max_k (1/n) sum_i sum_{j >= k} |Z^i_j|^2 dt`.
pub fn bmo_proxy<R: Real>(sol: &BsdeSolution<R>) -> f64 {
    let m = sol.n_steps();
    let n = sol.n_paths();
    let dt = sol.grid().dt().f64();
    let per_step: Vec<f64> = (0..m)
        .map(|k| {
            par::sum_indices::<f64, _>(n, |i| {
                sol.z(i, k).iter().map(|v| v.f64() * v.f64()).sum::<f64>()
            }) / n as f64
                * dt
        })
        .collect();
    let mut tail = 0.0f64;
    let mut best = 0.0f64;
    for e in per_step.iter().rev() {
        tail += e;
        best = best.max(tail);
    }
    best
}

pub(crate) enum LawMode<'a, R> {
    Frozen(&'a FrozenLaws<R>),
    /// Laws assembled from the current iterate at every step (particle systems).
    SelfConsistent,
}

/// Frozen-law backward solve.
pub fn solve_lsmc<R: Real>(
    driver: &DriverSpec<R>,
    laws: &FrozenLaws<R>,
    terminal: &[R],
    features: &PathBatch<R>,
    noise: &NoiseBatch<R>,
    cfg: &RegressionConfig,
) -> Result<BsdeSolution<R>> {
    laws.check(features.n_steps())?;
    backward(driver, LawMode::Frozen(laws), terminal, features, noise, cfg)
}

pub(crate) fn step_features<R: Real>(features: &PathBatch<R>, k: usize, sel: FeatureSelector) -> (Vec<R>, usize) {
    match sel {
        FeatureSelector::PathState => {
            let d = features.dim();
            let mut out = Vec::with_capacity(features.n_paths() * d);
            for i in 0..features.n_paths() {
                out.extend_from_slice(features.state(i, k));
            }
            (out, d)
        }
        FeatureSelector::InterceptOnly => (vec![R::zero(); features.n_paths()], 1),
    }
}

/// Implicit-in-`y` update `Y_k = E_k + g(Y_k, Z_k) dt` by fixed-point sweeps.
/// Returns the new column and the last driver values.
#[allow(clippy::too_many_arguments)]
pub(crate) fn implicit_step<R: Real>(
    driver: &DriverSpec<R>,
    laws: &LawMode<'_, R>,
    k: usize,
    features: &PathBatch<R>,
    e_r: Vec<R>,
    zk: &[R],
    d: usize,
    cfg: &RegressionConfig,
) -> Result<(Vec<R>, Vec<R>)> {
    let n = e_r.len();
    let grid = features.grid();
    let t = grid.time(k);
    let dt = grid.dt();
    let self_z;
    let law_z: &EmpiricalMeasure<R> = match laws {
        LawMode::Frozen(l) => &l.mu2[k],
        LawMode::SelfConsistent => {
            self_z = EmpiricalMeasure::from_atoms_unchecked(zk.to_vec(), d);
            &self_z
        }
    };
    let mut ycur = e_r.clone();
    let mut gvals = Vec::new();
    for _ in 0..cfg.implicit_sweeps {
        let self_y;
        let law_y: &EmpiricalMeasure<R> = match laws {
            LawMode::Frozen(l) => &l.mu1[k],
            LawMode::SelfConsistent => {
                self_y = EmpiricalMeasure::from_atoms_unchecked(ycur.clone(), 1);
                &self_y
            }
        };
        gvals = par::map_indices(n, |i| {
            driver.eval(&DriverInput {
                t,
                step: k,
                path: i,
                state: features.state(i, k),
                y: ycur[i],
                z: &zk[i * d..(i + 1) * d],
                law_y,
                law_z,
            })
        });
        let mut delta = 0.0f64;
        let mut finite = true;
        for i in 0..n {
            let v = e_r[i] + gvals[i] * dt;
            finite &= v.is_finite();
            delta = delta.max((v - ycur[i]).f64().abs());
            ycur[i] = v;
        }
        if !finite {
            return Err(Error::Divergence {
                step: k,
                detail: "non-finite Y".into(),
            });
        }
        if delta <= cfg.implicit_tol {
            break;
        }
    }
    Ok((ycur, gvals))
}

pub(crate) fn backward<R: Real>(
    driver: &DriverSpec<R>,
    laws: LawMode<'_, R>,
    terminal: &[R],
    features: &PathBatch<R>,
    noise: &NoiseBatch<R>,
    cfg: &RegressionConfig,
) -> Result<BsdeSolution<R>> {
    cfg.validate()?;
    let n = features.n_paths();
    let m = features.n_steps();
    let d = noise.dim();
    if terminal.len() != n || noise.n_paths() != n {
        return Err(Error::invalid(format!(
            "path counts differ: terminal {}, features {n}, noise {}",
            terminal.len(),
            noise.n_paths()
        )));
    }
    if noise.n_steps() != m {
        return Err(Error::invalid(format!(
            "noise has {} steps but features have {m}",
            noise.n_steps()
        )));
    }
    if terminal.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("terminal values must be finite"));
    }
    let k1 = driver.profile.k1;
    let worst = terminal.iter().map(|v| v.f64().abs()).fold(0.0, f64::max);
    if worst > k1 * (1.0 + 1e-12) {
        log::warn!("terminal sup {worst:.6} exceeds the declared bound K1 = {k1}");
    }

    let grid = *features.grid();
    let dt = grid.dt();
    let dtf = dt.f64();
    let z_max = R::of(cfg.z_max);
    let w = m + 1;
    let mut y = vec![R::zero(); n * w];
    for (i, &v) in terminal.iter().enumerate() {
        y[i * w + m] = v;
    }
    let mut z = vec![R::zero(); n * m * d];
    let mut residuals = vec![0.0; m];
    let mut models = Vec::with_capacity(m);
    let mut y0_std_error = 0.0;

    for k in (0..m).rev() {
        let (feat, fdim) = step_features(features, k, cfg.features);
        let degree = match cfg.features {
            FeatureSelector::PathState => cfg.degree,
            FeatureSelector::InterceptOnly => 0,
        };
        let plan = RegressionPlan::new(&feat, n, fdim, degree, cfg.ridge, k)?;
        let ynext: Vec<R> = (0..n).map(|i| y[i * w + k + 1]).collect();
        let fit_e = plan.fit(&ynext);
        residuals[k] = fit_e.mse;
        let e = plan.predict(&fit_e);

        let mut zk = vec![R::zero(); n * d];
        let mut z_models = Vec::with_capacity(d);
        for j in 0..d {
            let target: Vec<f64> = (0..n)
                .map(|i| (ynext[i].f64() - e[i]) * noise.increment(i, k)[j].f64() / dtf)
                .collect();
            let fit_z = plan.fit(&target);
            let zhat = plan.predict(&fit_z);
            for i in 0..n {
                zk[i * d + j] = R::of(zhat[i]);
            }
            z_models.push(StepModel {
                basis: plan.basis().clone(),
                fit: fit_z,
            });
        }
        for row in zk.chunks_exact_mut(d) {
            let nz = norm(row);
            if nz > z_max {
                let s = z_max / nz;
                row.iter_mut().for_each(|v| *v *= s);
            }
        }

        let e_r: Vec<R> = e.iter().map(|&v| R::of(v)).collect();
        let (ycur, gvals) = implicit_step(driver, &laws, k, features, e_r, &zk, d, cfg)?;
        for i in 0..n {
            y[i * w + k] = ycur[i];
        }
        z[..].chunks_exact_mut(m * d)
            .zip(zk.chunks_exact(d))
            .for_each(|(row, zi)| row[k * d..(k + 1) * d].copy_from_slice(zi));
        if k == 0 {
            let vals: Vec<f64> = (0..n).map(|i| (ynext[i] + gvals[i] * dt).f64()).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
            y0_std_error = (var / n as f64).sqrt();
        }
        models.push(StepModels {
            expectation: StepModel {
                basis: plan.basis().clone(),
                fit: fit_e,
            },
            z: z_models,
        });
    }
    models.reverse();
    let mut sol = BsdeSolution {
        n_paths: n,
        z_dim: d,
        grid,
        y,
        z,
        residuals,
        sup_norm_y: 0.0,
        bmo: 0.0,
        y0_std_error,
        models,
    };
    sol.refresh_diagnostics();
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsde::driver::DriverFlags;
    use crate::bsde::profile::GrowthProfile;
    use crate::stochastic::{cumulate, make_grid, sample_brownian, SeedSpec};

    fn setup(n: usize, m: usize) -> (PathBatch<f64>, NoiseBatch<f64>) {
        let g = make_grid(0.0, 1.0, m).unwrap();
        let noise = sample_brownian(&g, n, 1, SeedSpec::master(11)).unwrap();
        (cumulate(&noise, &g).unwrap(), noise)
    }

    fn laws(m: usize) -> FrozenLaws<f64> {
        FrozenLaws::constant(m, EmpiricalMeasure::dirac_zero(1), EmpiricalMeasure::dirac_zero(1))
    }

    fn constant_driver(c: f64) -> DriverSpec<f64> {
        DriverSpec::new("c", GrowthProfile::default(), DriverFlags::none(), move |_: &DriverInput<'_, f64>| c)
    }

    #[test]
    fn zero_driver_constant_terminal() {
        let (f, w) = setup(500, 10);
        let sol = solve_lsmc(&constant_driver(0.0), &laws(10), &vec![0.4; 500], &f, &w, &RegressionConfig::default()).unwrap();
        for i in 0..500 {
            for k in 0..=10 {
                assert!((sol.y(i, k) - 0.4).abs() < 1e-12);
            }
            for k in 0..10 {
                assert!(sol.z(i, k)[0].abs() < 1e-12);
            }
        }
        assert!(sol.bmo < 1e-20);
    }

    #[test]
    fn unit_driver_integrates_to_horizon() {
        let (f, w) = setup(100, 8);
        let sol = solve_lsmc(&constant_driver(1.0), &laws(8), &vec![0.0; 100], &f, &w, &RegressionConfig::default()).unwrap();
        assert!((sol.y0() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_in_terminal_for_zero_driver() {
        let (f, w) = setup(400, 6);
        let eta: Vec<f64> = (0..400).map(|i| f.state(i, 6)[0].tanh()).collect();
        let eta2: Vec<f64> = eta.iter().map(|v| 2.0 * v).collect();
        let cfg = RegressionConfig {
            z_max: 1e6,
            ..RegressionConfig::default()
        };
        let a = solve_lsmc(&constant_driver(0.0), &laws(6), &eta, &f, &w, &cfg).unwrap();
        let b = solve_lsmc(&constant_driver(0.0), &laws(6), &eta2, &f, &w, &cfg).unwrap();
        for (u, v) in a.y_field().iter().zip(b.y_field()) {
            assert!((2.0 * u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn bmo_examples() {
        let g = make_grid(0.0f64, 1.0, 4).unwrap();
        let mut sol = BsdeSolution {
            n_paths: 2,
            z_dim: 1,
            grid: g,
            y: vec![0.0; 10],
            z: vec![1.0; 8],
            residuals: vec![0.0; 4],
            sup_norm_y: 0.0,
            bmo: 0.0,
            y0_std_error: 0.0,
            models: Vec::new(),
        };
        assert!((bmo_proxy(&sol) - 1.0).abs() < 1e-15);
        sol.z.iter_mut().for_each(|v| *v = 2.0);
        assert!((bmo_proxy(&sol) - 4.0).abs() < 1e-15);
        sol.z.iter_mut().for_each(|v| *v = 0.0);
        assert_eq!(bmo_proxy(&sol), 0.0);
    }

    #[test]
    fn shape_errors() {
        let (f, w) = setup(10, 4);
        let err = solve_lsmc(&constant_driver(0.0), &laws(4), &[0.0; 9], &f, &w, &RegressionConfig::default());
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
        let err = solve_lsmc(&constant_driver(0.0), &laws(3), &[0.0; 10], &f, &w, &RegressionConfig::default());
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn divergence_reported_with_step() {
        let (f, w) = setup(10, 4);
        let err = solve_lsmc(&constant_driver(f64::INFINITY), &laws(4), &[0.0; 10], &f, &w, &RegressionConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Divergence { step: 3, .. }));
    }
}
