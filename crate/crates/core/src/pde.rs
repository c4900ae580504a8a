//! One-dimensional nonlocal parabolic PDE and its Feynman–Kac cross-check.
//!
//! The equation is
//! `v_t + 1/2 sbar^2 v_xx + bbar v_x + E[g(t, X', x, v(t, X'), v, v_x sbar)] = 0`
//! with `v(T, x) = E[Phi(X'_T, x)]`, where `X'` is the reference population
//! started at `x0` and `bbar`, `sbar` are the coefficients averaged over it.
//! The stepper is explicit in time with central differences in space and
//! edge-clamped ghost values; the local `v` slot of `g` gets one corrector
//! sweep.

use std::sync::Arc;

use crate::bsde::{BsdeSolution, DriverFlags, DriverInput, DriverSpec, GrowthProfile, RegressionConfig};
use crate::error::{Error, Result};
use crate::forward::{integrate_reference_with_noise, reference_cloud, ForwardCoefficients};
use crate::measure::EmpiricalMeasure;
use crate::par;
use crate::picard::{picard_meanfield, PicardOptions};
use crate::scalar::Real;
use crate::stochastic::{sample_brownian, NoiseBatch, PathBatch, SeedSpec, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceGrid {
    x_min: f64,
    x_max: f64,
    n_x: usize,
}

impl SpaceGrid {
    pub fn new(x_min: f64, x_max: f64, n_x: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(Error::invalid(format!(
                "space grid needs finite x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if n_x < 3 {
            return Err(Error::invalid(format!("n_x must be at least 3, got {n_x}")));
        }
        Ok(Self { x_min, x_max, n_x })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_x - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.n_x {
            self.x_max
        } else {
            self.x_min + i as f64 * self.dx()
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    pub fn refined(&self) -> Self {
        Self {
            n_x: 2 * self.n_x - 1,
            ..*self
        }
    }
}

/// Linear interpolation of nodal values, constant beyond the edges.
pub fn interpolate<R: Real>(grid: &SpaceGrid, values: &[R], x: f64) -> R {
    if x <= grid.x_min {
        return values[0];
    }
    if x >= grid.x_max {
        return values[grid.n_x - 1];
    }
    let s = (x - grid.x_min) / grid.dx();
    let i = (s.floor() as usize).min(grid.n_x - 2);
    let w = R::of(s - i as f64);
    values[i] + w * (values[i + 1] - values[i])
}

/// Arguments of the PDE driver `g(t, x', x, u', u, z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeArgs<R> {
    pub t: R,
    pub x_ref: R,
    pub x: R,
    pub u_ref: R,
    pub u: R,
    pub z: R,
}

type PdeFn<R> = dyn Fn(&PdeArgs<R>) -> R + Send + Sync;
type TerminalPairFn<R> = dyn Fn(R, R) -> R + Send + Sync;

#[derive(Clone)]
pub struct PdeDriver<R> {
    pub name: String,
    /// False when `g` reads neither `x'` nor `u'`; the average collapses.
    pub uses_reference: bool,
    f: Arc<PdeFn<R>>,
}

impl<R: Real> PdeDriver<R> {
    pub fn new(
        name: impl Into<String>,
        uses_reference: bool,
        f: impl Fn(&PdeArgs<R>) -> R + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            uses_reference,
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, args: &PdeArgs<R>) -> R {
        (self.f)(args)
    }
}

impl<R> std::fmt::Debug for PdeDriver<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PdeDriver")
            .field("name", &self.name)
            .field("uses_reference", &self.uses_reference)
            .finish_non_exhaustive()
    }
}

/// Terminal condition `Phi(x', x)`.
#[derive(Clone)]
pub struct PdeTerminal<R> {
    pub uses_reference: bool,
    f: Arc<TerminalPairFn<R>>,
}

impl<R: Real> PdeTerminal<R> {
    pub fn new(uses_reference: bool, f: impl Fn(R, R) -> R + Send + Sync + 'static) -> Self {
        Self {
            uses_reference,
            f: Arc::new(f),
        }
    }

    /// `Phi(x)` with no reference dependence.
    pub fn local(f: impl Fn(R) -> R + Send + Sync + 'static) -> Self {
        Self::new(false, move |_, x| f(x))
    }

    pub fn eval(&self, x_ref: R, x: R) -> R {
        (self.f)(x_ref, x)
    }

    /// `E'[Phi(X', x)]` over a cloud of scalars.
    pub fn averaged(&self, cloud: &[R], x: R) -> R {
        if !self.uses_reference {
            return self.eval(x, x);
        }
        let s = cloud.iter().fold(R::zero(), |acc, &xr| acc + self.eval(xr, x));
        s / R::of_usize(cloud.len())
    }
}

impl<R> std::fmt::Debug for PdeTerminal<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PdeTerminal")
            .field("uses_reference", &self.uses_reference)
            .finish_non_exhaustive()
    }
}

/// Coefficients, driver, terminal condition and the reference population
/// `X^{0,x0}` together with the increments that generated it.
#[derive(Clone)]
pub struct PdeSpec<R> {
    pub forward: Arc<dyn ForwardCoefficients<R>>,
    pub driver: PdeDriver<R>,
    pub terminal: PdeTerminal<R>,
    pub x0: R,
    pub reference: PathBatch<R>,
    pub reference_noise: NoiseBatch<R>,
}

impl<R: Real> PdeSpec<R> {
    /// Integrates the self-consistent reference cloud from `x0`.
    pub fn build(
        forward: Arc<dyn ForwardCoefficients<R>>,
        driver: PdeDriver<R>,
        terminal: PdeTerminal<R>,
        x0: R,
        grid: &TimeGrid<R>,
        n_paths: usize,
        seed: SeedSpec,
    ) -> Result<Self> {
        if forward.state_dim() != 1 || forward.noise_dim() != 1 {
            return Err(Error::invalid("the PDE solver is one-dimensional"));
        }
        if n_paths < 2 {
            return Err(Error::invalid("the reference cloud needs n_paths >= 2"));
        }
        let noise = sample_brownian(grid, n_paths, 1, seed)?;
        let reference = integrate_reference_with_noise(forward.as_ref(), &[x0], grid, &noise)?;
        Ok(Self {
            forward,
            driver,
            terminal,
            x0,
            reference,
            reference_noise: noise,
        })
    }

    fn reference_scalars(&self, step: usize) -> Vec<R> {
        (0..self.reference.n_paths())
            .map(|i| self.reference.state(i, step)[0])
            .collect()
    }
}

impl<R> std::fmt::Debug for PdeSpec<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PdeSpec")
            .field("driver", &self.driver)
            .field("terminal", &self.terminal)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueField<R> {
    pub space: SpaceGrid,
    pub time: TimeGrid<R>,
    /// Row-major `(n_steps + 1) x n_x`.
    pub u: Vec<R>,
}

impl<R: Real> ValueField<R> {
    pub fn slice(&self, step: usize) -> &[R] {
        let n = self.space.n_x();
        &self.u[step * n..(step + 1) * n]
    }

    pub fn at(&self, step: usize, i: usize) -> R {
        self.u[step * self.space.n_x() + i]
    }

    pub fn eval(&self, step: usize, x: f64) -> R {
        interpolate(&self.space, self.slice(step), x)
    }
}

/// Ratio of PDE steps to reference steps; the grids must span the same interval.
fn step_ratio<R: Real>(reference: &TimeGrid<R>, grid: &TimeGrid<R>) -> Result<usize> {
    let span = |g: &TimeGrid<R>| (g.t_start().f64(), g.t_end().f64());
    let (a, b) = span(reference);
    let (c, d) = span(grid);
    if (a - c).abs() > 1e-12 * (1.0 + a.abs()) || (b - d).abs() > 1e-12 * (1.0 + b.abs()) {
        return Err(Error::invalid(format!(
            "time grid [{c}, {d}] does not match the reference span [{a}, {b}]"
        )));
    }
    if !grid.n_steps().is_multiple_of(reference.n_steps()) {
        return Err(Error::invalid(format!(
            "n_steps {} must be a multiple of the reference step count {}",
            grid.n_steps(),
            reference.n_steps()
        )));
    }
    Ok(grid.n_steps() / reference.n_steps())
}

/// Reference scalars at fine step `k`, linear in time between reference steps.
fn cloud_at<R: Real>(spec: &PdeSpec<R>, ratio: usize, k: usize) -> Vec<R> {
    let kr = k / ratio;
    let rem = k % ratio;
    let lo = spec.reference_scalars(kr);
    if rem == 0 {
        return lo;
    }
    let hi = spec.reference_scalars(kr + 1);
    let w = R::of(rem as f64 / ratio as f64);
    lo.iter().zip(&hi).map(|(&a, &b)| a + w * (b - a)).collect()
}

pub fn solve_pde<R: Real>(spec: &PdeSpec<R>, space: &SpaceGrid, time: &TimeGrid<R>) -> Result<ValueField<R>> {
    let ratio = step_ratio(spec.reference.grid(), time)?;
    let nx = space.n_x();
    let m = time.n_steps();
    let dx = space.dx();
    let dt = time.dt().f64();
    let xs: Vec<R> = (0..nx).map(|i| R::of(space.x(i))).collect();

    // averaged coefficients at every level used by the stepper (t_1 .. t_m)
    let mut bbar = vec![R::zero(); (m + 1) * nx];
    let mut sbar = vec![R::zero(); (m + 1) * nx];
    let mut clouds: Vec<Vec<R>> = Vec::with_capacity(m + 1);
    let mut worst = 0.0f64;
    for k in 0..=m {
        let cloud = cloud_at(spec, ratio, k);
        let meas = EmpiricalMeasure::from_atoms_unchecked(cloud.clone(), 1);
        let t = time.time(k);
        let coeffs: Vec<(R, R)> = par::map_indices(nx, |i| {
            let (mut b, mut s) = ([R::zero()], [R::zero()]);
            spec.forward.averaged_drift(t, &meas, &xs[i..i + 1], &mut b);
            spec.forward.averaged_diffusion(t, &meas, &xs[i..i + 1], &mut s);
            (b[0], s[0])
        });
        for (i, (b, s)) in coeffs.into_iter().enumerate() {
            bbar[k * nx + i] = b;
            sbar[k * nx + i] = s;
            if k > 0 {
                worst = worst.max(s.f64() * s.f64());
            }
        }
        clouds.push(cloud);
    }
    let limit = dx * dx / (worst + 1e-12);
    if dt > limit * (1.0 + 1e-9) {
        let needed = (time.horizon().f64() / limit).ceil() as usize;
        let suggested = needed.div_ceil(spec.reference.n_steps()) * spec.reference.n_steps();
        return Err(Error::invalid(format!(
            "explicit step dt = {dt:.3e} exceeds the stability limit {limit:.3e}; use n_steps >= {suggested}"
        )));
    }

    let mut u = vec![R::zero(); (m + 1) * nx];
    let term: Vec<R> = par::map_indices(nx, |i| spec.terminal.averaged(&clouds[m], xs[i]));
    u[m * nx..].copy_from_slice(&term);

    let dtr = R::of(dt);
    let inv_dx = R::of(1.0 / dx);
    let inv_dx2 = R::of(1.0 / (dx * dx));
    for k in (0..m).rev() {
        let level = k + 1;
        let t = time.time(level);
        let next: Vec<R> = u[level * nx..(level + 1) * nx].to_vec();
        let cloud = &clouds[level];
        let u_cloud: Vec<R> = if spec.driver.uses_reference {
            cloud.iter().map(|&x| interpolate(space, &next, x.f64())).collect()
        } else {
            Vec::new()
        };
        let ghost = |i: isize| next[i.clamp(0, nx as isize - 1) as usize];
        let source = |i: usize, u_local: R, z: R| -> R {
            let x = xs[i];
            if !spec.driver.uses_reference {
                return spec.driver.eval(&PdeArgs {
                    t,
                    x_ref: x,
                    x,
                    u_ref: u_local,
                    u: u_local,
                    z,
                });
            }
            let mut s = R::zero();
            for (&xr, &ur) in cloud.iter().zip(&u_cloud) {
                s += spec.driver.eval(&PdeArgs {
                    t,
                    x_ref: xr,
                    x,
                    u_ref: ur,
                    u: u_local,
                    z,
                });
            }
            s / R::of_usize(cloud.len())
        };
        let row: Vec<R> = par::map_indices(nx, |i| {
            let ii = i as isize;
            let (um, u0, up) = (ghost(ii - 1), next[i], ghost(ii + 1));
            let du = (up - um) * R::half() * inv_dx;
            let d2u = (up - u0 - u0 + um) * inv_dx2;
            let b = bbar[level * nx + i];
            let s = sbar[level * nx + i];
            let z = du * s;
            let lin = u0 + dtr * (R::half() * s * s * d2u + b * du);
            let pred = lin + dtr * source(i, u0, z);
            lin + dtr * source(i, pred, z)
        });
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: k,
                detail: "non-finite PDE value".into(),
            });
        }
        u[k * nx..(k + 1) * nx].copy_from_slice(&row);
    }
    Ok(ValueField {
        space: *space,
        time: *time,
        u,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestrictionReport {
    /// `max_{i,k} |u(t_k, X^i_k) - Y^i_k|`.
    pub sup_gap: f64,
    /// 99th percentile of the same gaps.
    pub q99_gap: f64,
    /// Reference states that fell outside the space grid.
    pub clamped: usize,
}

/// Compares the PDE field along the reference paths with a BSDE `Y` field
/// on the same paths.
pub fn restriction_check<R: Real>(
    field: &ValueField<R>,
    reference: &PathBatch<R>,
    bsde: &BsdeSolution<R>,
) -> Result<RestrictionReport> {
    let ratio = step_ratio(reference.grid(), &field.time)?;
    if bsde.n_paths() != reference.n_paths() || bsde.n_steps() != reference.n_steps() {
        return Err(Error::invalid("BSDE field and reference paths differ in shape"));
    }
    let n = reference.n_paths();
    let m = reference.n_steps();
    let mut gaps = Vec::with_capacity(n * (m + 1));
    let mut clamped = 0usize;
    for i in 0..n {
        for k in 0..=m {
            let x = reference.state(i, k)[0].f64();
            if !field.space.contains(x) {
                clamped += 1;
            }
            let u = field.eval(k * ratio, x);
            gaps.push((u - bsde.y(i, k)).f64().abs());
        }
    }
    if clamped > 0 {
        log::warn!("{clamped} reference states lie outside the space grid and were clamped");
    }
    gaps.sort_by(f64::total_cmp);
    let sup_gap = *gaps.last().unwrap_or(&0.0);
    let idx = ((gaps.len() as f64) * 0.99).ceil() as usize;
    let q99_gap = gaps[idx.saturating_sub(1).min(gaps.len() - 1)];
    Ok(RestrictionReport {
        sup_gap,
        q99_gap,
        clamped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeynmanKacReport {
    pub u_pde: f64,
    pub y0_bsde: f64,
    pub gap: f64,
    pub y0_std_error: f64,
    pub picard_iterations: usize,
    pub restriction: RestrictionReport,
}

/// The BSDE of the coupled system on the reference paths: the driver averages
/// `g` over the reference states and the current `Y` cloud in path order.
pub fn reference_bsde_driver<R: Real>(spec: &PdeSpec<R>) -> DriverSpec<R> {
    let pde = spec.driver.clone();
    let reference = Arc::new(spec.reference.clone());
    let flags = DriverFlags {
        depends_on_state: true,
        depends_on_y: true,
        depends_on_z: true,
        depends_on_mu1: pde.uses_reference,
        ..DriverFlags::none()
    };
    let name = format!("reference-{}", pde.name);
    DriverSpec::new(name, GrowthProfile::default(), flags, move |inp: &DriverInput<'_, R>| {
        let x = inp.state[0];
        let z = inp.z[0];
        if !pde.uses_reference {
            return pde.eval(&PdeArgs {
                t: inp.t,
                x_ref: x,
                x,
                u_ref: inp.y,
                u: inp.y,
                z,
            });
        }
        let n = reference.n_paths();
        let mut s = R::zero();
        for j in 0..n {
            s += pde.eval(&PdeArgs {
                t: inp.t,
                x_ref: reference.state(j, inp.step)[0],
                x,
                u_ref: inp.law_y.atom(j)[0],
                u: inp.y,
                z,
            });
        }
        s / R::of_usize(n)
    })
}

/// Solves the PDE and, on the same reference cloud, the backward equation
/// started at `(0, x0)` by Picard iteration; reports `|u(0, x0) - Y_0|`.
pub fn feynman_kac_check<R: Real>(
    spec: &PdeSpec<R>,
    space: &SpaceGrid,
    time: &TimeGrid<R>,
    cfg: &RegressionConfig,
    picard: &PicardOptions,
) -> Result<FeynmanKacReport> {
    let x0 = spec.x0.f64();
    if !(x0 > space.x_min() && x0 < space.x_max()) {
        return Err(Error::invalid(format!("x0 = {x0} is not interior to the space grid")));
    }
    let field = solve_pde(spec, space, time)?;
    let reference = &spec.reference;
    let m = reference.n_steps();
    let n = reference.n_paths();
    let cloud_t = reference_cloud(reference, m);
    let eta: Vec<R> = (0..n)
        .map(|i| spec.terminal.averaged(cloud_t.atoms(), reference.state(i, m)[0]))
        .collect();
    let driver = reference_bsde_driver(spec);
    let (sol, trace) = picard_meanfield(&driver, &eta, reference, &spec.reference_noise, cfg, picard)?;
    let u_pde = field.eval(0, x0).f64();
    let y0_bsde = sol.y0();
    let restriction = restriction_check(&field, reference, &sol)?;
    Ok(FeynmanKacReport {
        u_pde,
        y0_bsde,
        gap: (u_pde - y0_bsde).abs(),
        y0_std_error: sol.y0_std_error,
        picard_iterations: trace.iterations(),
        restriction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::LinearForward;
    use crate::stochastic::make_grid;

    fn spec(driver: PdeDriver<f64>, terminal: PdeTerminal<f64>, steps: usize, paths: usize) -> PdeSpec<f64> {
        let g = make_grid(0.0, 1.0, steps).unwrap();
        PdeSpec::build(Arc::new(LinearForward::brownian()), driver, terminal, 0.0, &g, paths, SeedSpec::master(4)).unwrap()
    }

    fn zero() -> PdeDriver<f64> {
        PdeDriver::new("zero", false, |_: &PdeArgs<f64>| 0.0)
    }

    #[test]
    fn space_grid_validation() {
        assert!(SpaceGrid::new(1.0, 0.0, 10).is_err());
        assert!(SpaceGrid::new(0.0, 1.0, 2).is_err());
        let s = SpaceGrid::new(-1.0, 1.0, 5).unwrap();
        assert_eq!(s.dx(), 0.5);
        assert_eq!(s.x(4), 1.0);
        assert_eq!(s.refined().n_x(), 9);
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(interpolate(&s, &v, -0.25), 1.5);
        assert_eq!(interpolate(&s, &v, 7.0), 4.0);
    }

    #[test]
    fn constant_terminal_is_preserved() {
        let sp = spec(zero(), PdeTerminal::local(|_| 0.3), 10, 64);
        let space = SpaceGrid::new(-4.0, 4.0, 41).unwrap();
        let t = make_grid(0.0, 1.0, 100).unwrap();
        let f = solve_pde(&sp, &space, &t).unwrap();
        assert!(f.u.iter().all(|&v| v == 0.3));
    }

    #[test]
    fn unit_source_gives_time_to_go() {
        let sp = spec(PdeDriver::new("one", false, |_: &PdeArgs<f64>| 1.0), PdeTerminal::local(|_| 0.0), 10, 16);
        let space = SpaceGrid::new(-4.0, 4.0, 41).unwrap();
        let t = make_grid(0.0, 1.0, 100).unwrap();
        let f = solve_pde(&sp, &space, &t).unwrap();
        for k in 0..=100 {
            for i in 0..41 {
                assert!((f.at(k, i) - (1.0 - t.time(k))).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn heat_on_cosine() {
        let sp = spec(zero(), PdeTerminal::local(f64::cos), 25, 16);
        let space = SpaceGrid::new(-8.0, 8.0, 401).unwrap();
        let t = make_grid(0.0, 1.0, 625).unwrap();
        let f = solve_pde(&sp, &space, &t).unwrap();
        assert!((f.eval(0, 0.0) - (-0.5f64).exp()).abs() < 5e-3);
        // maximum principle
        assert!(f.u.iter().all(|&v| (-1.0 - 1e-12..=1.0 + 1e-12).contains(&v)));
    }

    #[test]
    fn refinement_reduces_heat_error() {
        let sp = spec(zero(), PdeTerminal::local(f64::cos), 25, 16);
        let exact = (-0.5f64).exp();
        let coarse = SpaceGrid::new(-8.0, 8.0, 101).unwrap();
        let e1 = (solve_pde(&sp, &coarse, &make_grid(0.0, 1.0, 50).unwrap()).unwrap().eval(0, 0.0) - exact).abs();
        let e2 = (solve_pde(&sp, &coarse.refined(), &make_grid(0.0, 1.0, 200).unwrap()).unwrap().eval(0, 0.0) - exact).abs();
        assert!(e2 * 2.0 <= e1, "{e1} {e2}");
    }

    #[test]
    fn cfl_violation_suggests_steps() {
        let sp = spec(zero(), PdeTerminal::local(f64::cos), 10, 16);
        let space = SpaceGrid::new(-8.0, 8.0, 401).unwrap();
        let err = solve_pde(&sp, &space, &make_grid(0.0, 1.0, 100).unwrap()).unwrap_err();
        assert!(err.to_string().contains("n_steps >= 630"), "{err}");
    }

    #[test]
    fn raising_terminal_never_lowers_u() {
        let quad = PdeDriver::new("quad", false, |a: &PdeArgs<f64>| 0.5 * a.z * a.z);
        let lo = spec(quad.clone(), PdeTerminal::local(|x: f64| 0.5 * (-x * x).exp()), 25, 16);
        let hi = PdeSpec {
            terminal: PdeTerminal::local(|x: f64| 0.5 * (-x * x).exp() + 0.1 * (-(x - 1.0).powi(2)).exp()),
            ..lo.clone()
        };
        let space = SpaceGrid::new(-6.0, 6.0, 121).unwrap();
        let t = make_grid(0.0, 1.0, 400).unwrap();
        let a = solve_pde(&lo, &space, &t).unwrap();
        let b = solve_pde(&hi, &space, &t).unwrap();
        assert!(a.u.iter().zip(&b.u).all(|(x, y)| y >= x));
    }

    #[test]
    fn nonlocal_constant_case_matches_bsde() {
        let sp = spec(zero(), PdeTerminal::local(|_| 0.7), 10, 128);
        let space = SpaceGrid::new(-6.0, 6.0, 61).unwrap();
        let t = make_grid(0.0, 1.0, 100).unwrap();
        let r = feynman_kac_check(&sp, &space, &t, &RegressionConfig::default(), &PicardOptions::default()).unwrap();
        assert!(r.gap < 1e-12);
        assert!(r.restriction.sup_gap < 1e-12);
    }

    #[test]
    fn nonlocal_driver_averages_over_reference() {
        // g = u(t, x') averages to E[u(t, X')]; with Phi = c the solution is c e^{T-t}
        let g = PdeDriver::new("uref", true, |a: &PdeArgs<f64>| a.u_ref);
        let sp = spec(g, PdeTerminal::local(|_| 0.5), 20, 64);
        let space = SpaceGrid::new(-6.0, 6.0, 61).unwrap();
        let t = make_grid(0.0, 1.0, 200).unwrap();
        let r = feynman_kac_check(&sp, &space, &t, &RegressionConfig::default(), &PicardOptions::default()).unwrap();
        assert!((r.u_pde - 0.5 * 1f64.exp()).abs() < 1e-2, "{}", r.u_pde);
        assert!(r.gap < 5e-2, "{}", r.gap);
    }
}
