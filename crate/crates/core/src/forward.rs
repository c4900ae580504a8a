//! Euler–Maruyama integration of the forward McKean–Vlasov equation.
//!
//! Coefficients take a reference state `x_ref` besides the own state `x`;
//! the expectation over the reference law is realized as an average over a
//! particle cloud. For a self-consistent reference the cloud is the batch
//! being integrated, otherwise it is a frozen [`PathBatch`].

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;
use crate::scalar::{norm, Real};
use crate::stochastic::{sample_brownian, NoiseBatch, SeedSpec, TimeGrid};

pub use crate::stochastic::PathBatch;

/// Drift `b(t, x_ref, x)` in R^n and diffusion `sigma(t, x_ref, x)` in R^{n x d}.
pub trait ForwardCoefficients<R: Real>: Send + Sync {
    fn state_dim(&self) -> usize;

    fn noise_dim(&self) -> usize;

    fn drift(&self, t: R, x_ref: &[R], x: &[R], out: &mut [R]);

    /// Row-major `n x d`.
    fn diffusion(&self, t: R, x_ref: &[R], x: &[R], out: &mut [R]);

    /// Declared linear-growth constant `C`.
    fn growth_constant(&self) -> f64;

    /// False when neither coefficient reads `x_ref`; averaging is skipped.
    fn uses_reference(&self) -> bool {
        true
    }

    /// `E'[b(t, X', x)]` over the cloud. Override for closed forms.
    fn averaged_drift(&self, t: R, cloud: &EmpiricalMeasure<R>, x: &[R], out: &mut [R]) {
        average_over(self.uses_reference(), cloud, out, |x_ref, buf| self.drift(t, x_ref, x, buf));
    }

    /// `E'[sigma(t, X', x)]` over the cloud.
    fn averaged_diffusion(&self, t: R, cloud: &EmpiricalMeasure<R>, x: &[R], out: &mut [R]) {
        average_over(self.uses_reference(), cloud, out, |x_ref, buf| {
            self.diffusion(t, x_ref, x, buf)
        });
    }
}

fn average_over<R: Real>(
    uses_reference: bool,
    cloud: &EmpiricalMeasure<R>,
    out: &mut [R],
    mut eval: impl FnMut(&[R], &mut [R]),
) {
    if !uses_reference {
        eval(cloud.atom(0), out);
        return;
    }
    let mut buf = vec![R::zero(); out.len()];
    out.iter_mut().for_each(|o| *o = R::zero());
    for j in 0..cloud.len() {
        eval(cloud.atom(j), &mut buf);
        for (o, &b) in out.iter_mut().zip(&buf) {
            *o += b;
        }
    }
    let inv = R::one() / R::of_usize(cloud.len());
    out.iter_mut().for_each(|o| *o *= inv);
}

/// Scalar coefficients affine in `(x_ref, x)`:
/// `b = b0 + b_ref x' + b_x x`, `sigma = s0 + s_ref x' + s_x x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearForward {
    pub b0: f64,
    pub b_ref: f64,
    pub b_x: f64,
    pub s0: f64,
    pub s_ref: f64,
    pub s_x: f64,
}

impl LinearForward {
    pub fn brownian() -> Self {
        Self {
            b0: 0.0,
            b_ref: 0.0,
            b_x: 0.0,
            s0: 1.0,
            s_ref: 0.0,
            s_x: 0.0,
        }
    }

    pub fn frozen() -> Self {
        Self {
            s0: 0.0,
            ..Self::brownian()
        }
    }
}

impl<R: Real> ForwardCoefficients<R> for LinearForward {
    fn state_dim(&self) -> usize {
        1
    }

    fn noise_dim(&self) -> usize {
        1
    }

    fn drift(&self, _t: R, x_ref: &[R], x: &[R], out: &mut [R]) {
        out[0] = R::of(self.b0) + R::of(self.b_ref) * x_ref[0] + R::of(self.b_x) * x[0];
    }

    fn diffusion(&self, _t: R, x_ref: &[R], x: &[R], out: &mut [R]) {
        out[0] = R::of(self.s0) + R::of(self.s_ref) * x_ref[0] + R::of(self.s_x) * x[0];
    }

    fn growth_constant(&self) -> f64 {
        let b = self.b0.abs().max(self.b_ref.abs()).max(self.b_x.abs());
        let s = self.s0.abs().max(self.s_ref.abs()).max(self.s_x.abs());
        b + s
    }

    fn uses_reference(&self) -> bool {
        self.b_ref != 0.0 || self.s_ref != 0.0
    }

    fn averaged_drift(&self, t: R, cloud: &EmpiricalMeasure<R>, x: &[R], out: &mut [R]) {
        self.drift(t, cloud.mean(), x, out);
    }

    fn averaged_diffusion(&self, t: R, cloud: &EmpiricalMeasure<R>, x: &[R], out: &mut [R]) {
        self.diffusion(t, cloud.mean(), x, out);
    }
}

type CoeffFn<R> = dyn Fn(R, &[R], &[R], &mut [R]) + Send + Sync;

/// Coefficients from closures; averages by direct summation over the cloud.
#[derive(Clone)]
pub struct FnForward<R> {
    pub state_dim: usize,
    pub noise_dim: usize,
    pub drift: Arc<CoeffFn<R>>,
    pub diffusion: Arc<CoeffFn<R>>,
    pub growth_constant: f64,
    pub uses_reference: bool,
}

impl<R> std::fmt::Debug for FnForward<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnForward")
            .field("state_dim", &self.state_dim)
            .field("noise_dim", &self.noise_dim)
            .field("growth_constant", &self.growth_constant)
            .finish_non_exhaustive()
    }
}

impl<R: Real> ForwardCoefficients<R> for FnForward<R> {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    fn drift(&self, t: R, x_ref: &[R], x: &[R], out: &mut [R]) {
        (self.drift)(t, x_ref, x, out)
    }

    fn diffusion(&self, t: R, x_ref: &[R], x: &[R], out: &mut [R]) {
        (self.diffusion)(t, x_ref, x, out)
    }

    fn growth_constant(&self) -> f64 {
        self.growth_constant
    }

    fn uses_reference(&self) -> bool {
        self.uses_reference
    }
}

/// Spot-checks `|b| + |sigma| <= C (1 + |x| + |x_ref|)` on random probes.
pub fn probe_linear_growth<R: Real, F: ForwardCoefficients<R> + ?Sized>(
    spec: &F,
    n_probes: usize,
    seed: u64,
) -> Result<()> {
    let (n, d) = (spec.state_dim(), spec.noise_dim());
    let c = spec.growth_constant();
    let mut rng = SeedSpec::new(seed, u64::MAX).rng();
    let mut b = vec![R::zero(); n];
    let mut s = vec![R::zero(); n * d];
    for _ in 0..n_probes {
        let t = R::of(rng.random::<f64>());
        let scale = 10f64.powf(rng.random_range(-1.0..2.0));
        let x: Vec<R> = (0..n).map(|_| R::of(rng.random_range(-scale..scale))).collect();
        let xr: Vec<R> = (0..n).map(|_| R::of(rng.random_range(-scale..scale))).collect();
        spec.drift(t, &xr, &x, &mut b);
        spec.diffusion(t, &xr, &x, &mut s);
        let lhs = norm(&b).f64() + norm(&s).f64();
        let rhs = c * (1.0 + norm(&x).f64() + norm(&xr).f64());
        if !lhs.is_finite() || lhs > rhs * (1.0 + 1e-9) {
            return Err(Error::ProbeFailed(format!(
                "forward coefficients exceed linear growth C = {c}: |b|+|sigma| = {lhs:.6e} > {rhs:.6e}"
            )));
        }
    }
    Ok(())
}

fn check_dims<R: Real, F: ForwardCoefficients<R> + ?Sized>(
    spec: &F,
    x0: &[R],
    noise: &NoiseBatch<R>,
) -> Result<()> {
    if x0.len() != spec.state_dim() {
        return Err(Error::invalid(format!(
            "initial point has dim {} but the spec expects {}",
            x0.len(),
            spec.state_dim()
        )));
    }
    if noise.dim() != spec.noise_dim() {
        return Err(Error::invalid(format!(
            "noise has dim {} but the spec expects {}",
            noise.dim(),
            spec.noise_dim()
        )));
    }
    Ok(())
}

/// One Euler step for every path given the per-step reference cloud.
#[allow(clippy::too_many_arguments)]
fn euler_step<R: Real, F: ForwardCoefficients<R> + ?Sized>(
    spec: &F,
    t: R,
    dt: R,
    cloud: &EmpiricalMeasure<R>,
    noise: &NoiseBatch<R>,
    k: usize,
    current: &[R],
    next: &mut [R],
) -> Result<()> {
    let (n, d) = (spec.state_dim(), spec.noise_dim());
    let bad = next
        .par_chunks_mut(n)
        .zip(current.par_chunks(n))
        .enumerate()
        .map(|(i, (out, x))| {
            let mut b = vec![R::zero(); n];
            let mut s = vec![R::zero(); n * d];
            spec.averaged_drift(t, cloud, x, &mut b);
            spec.averaged_diffusion(t, cloud, x, &mut s);
            let dw = noise.increment(i, k);
            let mut finite = true;
            for r in 0..n {
                let mut v = x[r] + b[r] * dt;
                for c in 0..d {
                    v += s[r * d + c] * dw[c];
                }
                finite &= v.is_finite();
                out[r] = v;
            }
            !finite
        })
        .any(|bad| bad);
    if bad {
        return Err(Error::Divergence {
            step: k + 1,
            detail: "non-finite forward state".into(),
        });
    }
    Ok(())
}

fn assemble(grid: &TimeGrid<impl Real>, n_paths: usize, n: usize) -> usize {
    n_paths * (grid.n_steps() + 1) * n
}

fn scatter<R: Real>(states: &mut [R], rows: &[R], k: usize, n_steps: usize, n: usize) {
    for (i, row) in rows.chunks_exact(n).enumerate() {
        let o = (i * (n_steps + 1) + k) * n;
        states[o..o + n].copy_from_slice(row);
    }
}

/// Self-consistent reference population started at `x0`.
pub fn integrate_reference<R: Real, F: ForwardCoefficients<R> + ?Sized>(
    spec: &F,
    x0: &[R],
    grid: &TimeGrid<R>,
    n_paths: usize,
    seed: SeedSpec,
) -> Result<PathBatch<R>> {
    if n_paths < 2 {
        return Err(Error::invalid("the reference cloud needs n_paths >= 2"));
    }
    let noise = sample_brownian(grid, n_paths, spec.noise_dim(), seed)?;
    integrate_reference_with_noise(spec, x0, grid, &noise)
}

/// As [`integrate_reference`] with caller-supplied increments.
pub fn integrate_reference_with_noise<R: Real, F: ForwardCoefficients<R> + ?Sized>(
    spec: &F,
    x0: &[R],
    grid: &TimeGrid<R>,
    noise: &NoiseBatch<R>,
) -> Result<PathBatch<R>> {
    check_dims(spec, x0, noise)?;
    if noise.n_steps() != grid.n_steps() {
        return Err(Error::invalid("noise and grid step counts differ"));
    }
    let n = spec.state_dim();
    let n_paths = noise.n_paths();
    let m = grid.n_steps();
    let mut states = vec![R::zero(); assemble(grid, n_paths, n)];
    let mut current: Vec<R> = x0.iter().copied().cycle().take(n_paths * n).collect();
    let mut next = vec![R::zero(); n_paths * n];
    scatter(&mut states, &current, 0, m, n);
    let dt = grid.dt();
    for k in 0..m {
        let cloud = EmpiricalMeasure::from_atoms_unchecked(current.clone(), n);
        euler_step(spec, grid.time(k), dt, &cloud, noise, k, &current, &mut next)?;
        std::mem::swap(&mut current, &mut next);
        scatter(&mut states, &current, k + 1, m, n);
    }
    PathBatch::from_states(*grid, n_paths, n, states)
}

/// Index of `grid`'s first point on `reference`'s grid, if compatible.
fn reference_offset<R: Real>(reference: &TimeGrid<R>, grid: &TimeGrid<R>) -> Result<usize> {
    let dt_ref = reference.dt().f64();
    let dt = grid.dt().f64();
    if ((dt - dt_ref) / dt_ref).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "grid step {dt} differs from the reference step {dt_ref}"
        )));
    }
    let off = (grid.t_start() - reference.t_start()).f64() / dt_ref;
    let k0 = off.round();
    if k0 < 0.0 || (off - k0).abs() > 1e-6 {
        return Err(Error::invalid("start time is not a reference grid point"));
    }
    let k0 = k0 as usize;
    if k0 + grid.n_steps() > reference.n_steps() {
        return Err(Error::invalid("grid extends past the reference horizon"));
    }
    Ok(k0)
}

/// Paths started at `(t_start, x)` against a frozen reference cloud.
/// `grid` must start at `t_start` and share the reference step size.
pub fn integrate_from<R: Real, F: ForwardCoefficients<R> + ?Sized>(
    spec: &F,
    reference: &PathBatch<R>,
    x: &[R],
    grid: &TimeGrid<R>,
    n_paths: usize,
    seed: SeedSpec,
) -> Result<PathBatch<R>> {
    if n_paths == 0 {
        return Err(Error::invalid("n_paths must be at least 1"));
    }
    let noise = sample_brownian(grid, n_paths, spec.noise_dim(), seed)?;
    integrate_from_with_noise(spec, reference, x, grid, &noise)
}

pub fn integrate_from_with_noise<R: Real, F: ForwardCoefficients<R> + ?Sized>(
    spec: &F,
    reference: &PathBatch<R>,
    x: &[R],
    grid: &TimeGrid<R>,
    noise: &NoiseBatch<R>,
) -> Result<PathBatch<R>> {
    check_dims(spec, x, noise)?;
    if reference.dim() != spec.state_dim() {
        return Err(Error::invalid("reference dimension does not match the spec"));
    }
    let k0 = reference_offset(reference.grid(), grid)?;
    let n = spec.state_dim();
    let n_paths = noise.n_paths();
    let m = grid.n_steps();
    let mut states = vec![R::zero(); assemble(grid, n_paths, n)];
    let mut current: Vec<R> = x.iter().copied().cycle().take(n_paths * n).collect();
    let mut next = vec![R::zero(); n_paths * n];
    scatter(&mut states, &current, 0, m, n);
    let dt = grid.dt();
    for k in 0..m {
        let cloud = if spec.uses_reference() {
            reference_cloud(reference, k0 + k)
        } else {
            EmpiricalMeasure::dirac_zero(n)
        };
        euler_step(spec, grid.time(k), dt, &cloud, noise, k, &current, &mut next)?;
        std::mem::swap(&mut current, &mut next);
        scatter(&mut states, &current, k + 1, m, n);
    }
    PathBatch::from_states(*grid, n_paths, n, states)
}

/// States of every reference path at `step` as an empirical measure.
pub fn reference_cloud<R: Real>(reference: &PathBatch<R>, step: usize) -> EmpiricalMeasure<R> {
    let n = reference.dim();
    let mut atoms = Vec::with_capacity(reference.n_paths() * n);
    for i in 0..reference.n_paths() {
        atoms.extend_from_slice(reference.state(i, step));
    }
    EmpiricalMeasure::from_atoms_unchecked(atoms, n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentReport {
    /// `(1/n) sum_i sup_k |X^i_k|^p`.
    pub sup_moment: f64,
    /// `max_k (1/n) sum_i |X^i_{k+1} - X^i_k|^p / dt^{p/2}`.
    pub increment_moment: f64,
}

pub fn moment_report<R: Real>(batch: &PathBatch<R>, p: f64) -> Result<MomentReport> {
    if !(p >= 2.0) {
        return Err(Error::invalid(format!("moment order must be >= 2, got {p}")));
    }
    let n = batch.n_paths();
    let m = batch.n_steps();
    let sup_moment = (0..n)
        .map(|i| {
            (0..=m)
                .map(|k| norm(batch.state(i, k)).f64().powf(p))
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / n as f64;
    let dt = batch.grid().dt().f64();
    let mut increment_moment = 0.0f64;
    for k in 0..m {
        let s: f64 = (0..n)
            .map(|i| {
                let a = batch.state(i, k);
                let b = batch.state(i, k + 1);
                let d: f64 = a.iter().zip(b).map(|(x, y)| (*y - *x).f64().powi(2)).sum();
                d.sqrt().powf(p)
            })
            .sum();
        increment_moment = increment_moment.max(s / n as f64 / dt.powf(p / 2.0));
    }
    Ok(MomentReport {
        sup_moment,
        increment_moment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::make_grid;

    #[test]
    fn frozen_and_pure_drift() {
        let g = make_grid(0.0f64, 1.0, 10).unwrap();
        let p = integrate_reference(&LinearForward::frozen(), &[0.7], &g, 8, SeedSpec::master(1)).unwrap();
        assert!(p.states().iter().all(|&x| x == 0.7));
        let drift = LinearForward {
            b0: 1.0,
            ..LinearForward::frozen()
        };
        let p = integrate_reference(&drift, &[0.5], &g, 4, SeedSpec::master(1)).unwrap();
        for x in p.terminal() {
            assert!((x - 1.5).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_single_path_reference() {
        let g = make_grid(0.0f64, 1.0, 2).unwrap();
        assert!(integrate_reference(&LinearForward::brownian(), &[0.0], &g, 1, SeedSpec::master(0)).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let g = make_grid(0.0f64, 1.0, 400).unwrap();
        let blow = LinearForward {
            b_x: 1e300,
            ..LinearForward::frozen()
        };
        let err = integrate_reference(&blow, &[1.0], &g, 2, SeedSpec::master(0)).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn moments_of_constant_paths() {
        let g = make_grid(0.0f64, 1.0, 5).unwrap();
        let zero = PathBatch::constant(g, 3, &[0.0]).unwrap();
        assert_eq!(moment_report(&zero, 2.0).unwrap().sup_moment, 0.0);
        let two = PathBatch::constant(g, 3, &[2.0]).unwrap();
        let r = moment_report(&two, 2.0).unwrap();
        assert_eq!(r.sup_moment, 4.0);
        assert_eq!(r.increment_moment, 0.0);
        assert!(moment_report(&two, 1.0).is_err());
    }

    #[test]
    fn flow_property_without_noise() {
        let spec = LinearForward {
            b0: 0.3,
            b_ref: 0.0,
            b_x: -0.5,
            s0: 0.0,
            s_ref: 0.0,
            s_x: 0.0,
        };
        let full = make_grid(0.0f64, 1.0, 20).unwrap();
        let one = integrate_reference(&spec, &[1.0], &full, 2, SeedSpec::master(0)).unwrap();
        let first = make_grid(0.0f64, 0.5, 10).unwrap();
        let a = integrate_reference(&spec, &[1.0], &first, 2, SeedSpec::master(0)).unwrap();
        let mid = a.state(0, 10)[0];
        let second = make_grid(0.5f64, 1.0, 10).unwrap();
        let b = integrate_from(&spec, &one, &[mid], &second, 2, SeedSpec::master(0)).unwrap();
        assert_eq!(b.state(0, 10)[0], one.state(0, 20)[0]);
    }

    #[test]
    fn linear_growth_probe() {
        probe_linear_growth::<f64, _>(&LinearForward::brownian(), 200, 3).unwrap();
        let liar = FnForward::<f64> {
            state_dim: 1,
            noise_dim: 1,
            drift: Arc::new(|_, _, x, out| out[0] = x[0] * x[0]),
            diffusion: Arc::new(|_, _, _, out| out[0] = 1.0),
            growth_constant: 1.0,
            uses_reference: false,
        };
        assert!(matches!(
            probe_linear_growth(&liar, 200, 3),
            Err(Error::ProbeFailed(_))
        ));
    }

    #[test]
    fn grid_mismatch_rejected() {
        let g = make_grid(0.0f64, 1.0, 10).unwrap();
        let r = integrate_reference(&LinearForward::brownian(), &[0.0], &g, 4, SeedSpec::master(0)).unwrap();
        let other = make_grid(0.0f64, 1.0, 7).unwrap();
        assert!(matches!(
            integrate_from(&LinearForward::brownian(), &r, &[0.0], &other, 4, SeedSpec::master(0)),
            Err(Error::InvalidArgument(_))
        ));
    }
}
