//! The N-particle coupled system, its decoupled limit and the convergence study.
//!
//! Particle `i` is driven by its own Brownian motion `W^i` (one counter-based
//! stream per particle) and its terminal value is `eta(W^i_T)`. At each step
//! the driver of every particle sees the empirical laws of the whole ensemble
//! at that step. Conditional expectations are cross-sectional regressions on
//! the particle's own state; the cloud moments are common to all particles
//! and are carried by the intercept.
//!
//! Internally the ensemble is always computed in ascending stream order, so
//! relabelling particles together with their streams relabels the output and
//! nothing else.

use crate::bsde::bounds::compute_bounds;
use crate::bsde::lsmc::{backward, implicit_step, step_features, LawMode};
use crate::bsde::{BsdeSolution, DriverSpec, GrowthProfile, RegressionConfig};
use crate::comparison::TerminalFn;
use crate::error::{Error, Result};
use crate::measure::{fit_rate, w2_gap, RateFit, DEFAULT_ASSIGNMENT_CAP};
use crate::par;
use crate::picard::{picard_meanfield, PicardOptions, PicardTrace};
use crate::scalar::{norm, Real};
use crate::stochastic::{
    cumulate, sample_brownian, sample_streams, NoiseBatch, PathBatch, SeedSpec, TimeGrid,
};

/// Largest ensemble for which the off-diagonal diagnostic is computed.
pub const OFFDIAG_CAP: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleOptions {
    /// Brownian dimension per particle.
    pub dim: usize,
    /// Compute the off-diagonal `Z^{i,j}` energy (needs `N <= OFFDIAG_CAP`).
    pub offdiag: bool,
    /// Central-difference bump for the off-diagonal diagnostic.
    pub bump: f64,
    /// Independent ensembles per `N` in the convergence study; their gaps are averaged.
    pub replicates: usize,
}

impl Default for ParticleOptions {
    fn default() -> Self {
        Self {
            dim: 1,
            offdiag: false,
            bump: 1e-4,
            replicates: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParticleEnsemble<R> {
    pub n: usize,
    pub streams: Vec<u64>,
    pub noise: NoiseBatch<R>,
    /// `Y^i` and the diagonal `Z^{i,i}`; path `i` is particle `i`.
    pub solution: BsdeSolution<R>,
    /// `sum_{j != i} |Z^{i,j}_k|^2`, `N x n_steps`, when requested.
    pub z_offdiag_energy: Option<Vec<f64>>,
}

impl<R: Real> ParticleEnsemble<R> {
    pub fn y(&self, particle: usize, step: usize) -> R {
        self.solution.y(particle, step)
    }

    pub fn z_diag(&self, particle: usize, step: usize) -> &[R] {
        self.solution.z(particle, step)
    }

    pub fn max_offdiag_energy(&self) -> Option<f64> {
        self.z_offdiag_energy
            .as_ref()
            .map(|e| e.iter().copied().fold(0.0, f64::max))
    }
}

/// Particles on streams `seed.stream_id + i`, `i in 0..n`.
pub fn solve_particles<R: Real>(
    n: usize,
    driver: &DriverSpec<R>,
    terminal: &TerminalFn<R>,
    grid: &TimeGrid<R>,
    cfg: &RegressionConfig,
    seed: SeedSpec,
    opts: &ParticleOptions,
) -> Result<ParticleEnsemble<R>> {
    let streams: Vec<u64> = (0..n as u64)
        .map(|i| seed.stream_id.wrapping_add(i))
        .collect();
    solve_particles_on_streams(driver, terminal, grid, cfg, seed.master_seed, &streams, opts)
}

/// Particle `i` uses stream `streams[i]`; the streams must be distinct.
pub fn solve_particles_on_streams<R: Real>(
    driver: &DriverSpec<R>,
    terminal: &TerminalFn<R>,
    grid: &TimeGrid<R>,
    cfg: &RegressionConfig,
    master_seed: u64,
    streams: &[u64],
    opts: &ParticleOptions,
) -> Result<ParticleEnsemble<R>> {
    let n = streams.len();
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 particles, got {n}")));
    }
    if opts.dim == 0 {
        return Err(Error::invalid("particle dimension must be at least 1"));
    }
    if opts.offdiag && n > OFFDIAG_CAP {
        return Err(Error::invalid(format!(
            "off-diagonal diagnostic is limited to N <= {OFFDIAG_CAP}, got N = {n}"
        )));
    }
    if opts.offdiag && !(opts.bump > 0.0 && opts.bump.is_finite()) {
        return Err(Error::invalid("bump must be positive and finite"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| streams[i]);
    if order.windows(2).any(|w| streams[w[0]] == streams[w[1]]) {
        return Err(Error::invalid("particle streams must be distinct"));
    }
    let sorted: Vec<u64> = order.iter().map(|&i| streams[i]).collect();

    let noise = sample_streams(grid, master_seed, &sorted, opts.dim)?;
    let features = cumulate(&noise, grid)?;
    let m = grid.n_steps();
    let eta: Vec<R> = (0..n).map(|i| terminal(features.state(i, m))).collect();
    let sol = backward(driver, LawMode::SelfConsistent, &eta, &features, &noise, cfg)?;
    let energy = if opts.offdiag {
        Some(offdiag_energy(driver, terminal, &sol, &features, cfg, opts.bump)?)
    } else {
        None
    };

    // rank[p] is the canonical position of caller particle p
    let mut rank = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        rank[i] = pos;
    }
    let z_offdiag_energy = energy.map(|e| {
        let mut out = Vec::with_capacity(e.len());
        for &r in &rank {
            out.extend_from_slice(&e[r * m..(r + 1) * m]);
        }
        out
    });
    Ok(ParticleEnsemble {
        n,
        streams: streams.to_vec(),
        noise: noise.select(&rank),
        solution: sol.select_paths(&rank),
        z_offdiag_energy,
    })
}

fn clip_rows<R: Real>(z: &mut [R], d: usize, z_max: f64) {
    let z_max = R::of(z_max);
    for row in z.chunks_exact_mut(d) {
        let nz = norm(row);
        if nz > z_max {
            let s = z_max / nz;
            row.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// `Y_{k}` of the whole ensemble recomputed from the stored step maps on
/// perturbed states, with self-consistent laws.
fn replay_column<R: Real>(
    driver: &DriverSpec<R>,
    terminal: &TerminalFn<R>,
    sol: &BsdeSolution<R>,
    features: &PathBatch<R>,
    k: usize,
    cfg: &RegressionConfig,
) -> Result<Vec<R>> {
    let n = features.n_paths();
    let m = features.n_steps();
    if k == m {
        return Ok((0..n).map(|i| terminal(features.state(i, m))).collect());
    }
    let d = sol.z_dim();
    let maps = &sol.models[k];
    let (feat, fdim) = step_features(features, k, cfg.features);
    let row = |i: usize| &feat[i * fdim..(i + 1) * fdim];
    let e_r: Vec<R> = (0..n).map(|i| R::of(maps.expectation.predict(row(i)))).collect();
    let mut zk = vec![R::zero(); n * d];
    for i in 0..n {
        for (c, model) in maps.z.iter().enumerate() {
            zk[i * d + c] = R::of(model.predict(row(i)));
        }
    }
    clip_rows(&mut zk, d, cfg.z_max);
    let (y, _) = implicit_step(driver, &LawMode::SelfConsistent, k, features, e_r, &zk, d, cfg)?;
    Ok(y)
}

/// Frozen-coefficient estimate of `Z^{i,j}_k`, `j != i`: the sensitivity of
/// `Y^i_{k+1}` to a bump of `Delta W^j_k`, by central differences.
fn offdiag_energy<R: Real>(
    driver: &DriverSpec<R>,
    terminal: &TerminalFn<R>,
    sol: &BsdeSolution<R>,
    features: &PathBatch<R>,
    cfg: &RegressionConfig,
    h: f64,
) -> Result<Vec<f64>> {
    let n = features.n_paths();
    let m = features.n_steps();
    let d = features.dim();
    let w = m + 1;
    let jobs = m * n * d;
    let parts: Vec<Result<Vec<f64>>> = par::map_indices(jobs, |job| {
        let k = job / (n * d);
        let j = (job / d) % n;
        let c = job % d;
        let bumped = |sign: f64| -> Result<Vec<R>> {
            let mut states = features.states().to_vec();
            for l in (k + 1)..=m {
                states[(j * w + l) * d + c] += R::of(sign * h);
            }
            let fb = PathBatch::from_states(*features.grid(), n, d, states)?;
            replay_column(driver, terminal, sol, &fb, k + 1, cfg)
        };
        let up = bumped(1.0)?;
        let down = bumped(-1.0)?;
        Ok((0..n)
            .map(|i| {
                if i == j {
                    0.0
                } else {
                    let zij = (up[i] - down[i]).f64() / (2.0 * h);
                    zij * zij
                }
            })
            .collect())
    });
    let mut energy = vec![0.0; n * m];
    for (job, part) in parts.into_iter().enumerate() {
        let k = job / (n * d);
        for (i, v) in part?.into_iter().enumerate() {
            energy[i * m + k] += v;
        }
    }
    Ok(energy)
}

/// The mean-field limit on `n_paths` independent paths (streams
/// `seed.stream_id + i`), solved by Picard iteration over laws.
#[allow(clippy::too_many_arguments)]
pub fn solve_decoupled_limit<R: Real>(
    driver: &DriverSpec<R>,
    terminal: &TerminalFn<R>,
    grid: &TimeGrid<R>,
    cfg: &RegressionConfig,
    n_paths: usize,
    seed: SeedSpec,
    picard: &PicardOptions,
    dim: usize,
) -> Result<(BsdeSolution<R>, PicardTrace)> {
    let noise = sample_brownian(grid, n_paths, dim, seed)?;
    let features = cumulate(&noise, grid)?;
    let m = grid.n_steps();
    let eta: Vec<R> = (0..n_paths).map(|i| terminal(features.state(i, m))).collect();
    picard_meanfield(driver, &eta, &features, &noise, cfg, picard)
}

/// N-independent bound on `max_i sup_k |Y^i_k|` from the profile, before slack.
pub fn particle_sup_bound(profile: &GrowthProfile, horizon: f64) -> Result<f64> {
    Ok(compute_bounds(profile, horizon)?.m1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub n_list: Vec<usize>,
    /// `sup_k W2(nu^N_k, nu_k)` for the `Y` laws, averaged over replicates.
    pub w2_y: Vec<f64>,
    /// `sup_k W2(mu^N_k, mu_k)` for the `Z` laws.
    pub w2_z: Vec<f64>,
    /// `mean_i sup_k |Y^i_k - Ybar^i_k|`, particle `i` paired with limit path `i`.
    pub mean_sup_dy: Vec<f64>,
    /// `max_i sup_k |Y^i_k|` per N, over all replicates.
    pub particle_sup: Vec<f64>,
    /// Slope of the fit over the first `r + 1` entries of `w2_y`.
    pub slope_so_far: Vec<Option<f64>>,
    pub rate: Option<RateFit>,
    pub limit_paths: usize,
    pub limit_trace: PicardTrace,
}

impl ConvergenceStudy {
    /// Number of consecutive steps of `n_list` on which `w2_y` does not increase.
    pub fn nonincreasing_steps(&self) -> usize {
        self.w2_y.windows(2).filter(|w| w[1] <= w[0]).count()
    }
}

/// The limit is solved once on `max(8, replicates) * max(n_list)` paths. At
/// each `N` the particle system runs `replicates` times on disjoint blocks of
/// the same streams and the gaps are averaged over the replicates.
#[allow(clippy::too_many_arguments)]
pub fn convergence_study<R: Real>(
    driver: &DriverSpec<R>,
    terminal: &TerminalFn<R>,
    grid: &TimeGrid<R>,
    cfg: &RegressionConfig,
    n_list: &[usize],
    seed: u64,
    picard: &PicardOptions,
    opts: &ParticleOptions,
) -> Result<ConvergenceStudy> {
    if n_list.is_empty() {
        return Err(Error::invalid("n_list must not be empty"));
    }
    if n_list.iter().any(|&n| n < 8) {
        return Err(Error::invalid("every N in n_list must be at least 8"));
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("n_list must be strictly increasing"));
    }
    if opts.replicates == 0 {
        return Err(Error::invalid("replicates must be at least 1"));
    }
    let n_max = *n_list.last().unwrap();
    let limit_paths = n_max
        .checked_mul(opts.replicates.max(8))
        .ok_or_else(|| Error::Capacity("limit path count overflows".into()))?;
    let (limit, limit_trace) = solve_decoupled_limit(
        driver,
        terminal,
        grid,
        cfg,
        limit_paths,
        SeedSpec::master(seed),
        picard,
        opts.dim,
    )?;
    let m = grid.n_steps();
    let cap = picard.assignment_cap.max(DEFAULT_ASSIGNMENT_CAP);
    let run_opts = ParticleOptions {
        offdiag: false,
        ..*opts
    };
    let reps = opts.replicates;

    let mut study = ConvergenceStudy {
        n_list: n_list.to_vec(),
        w2_y: Vec::new(),
        w2_z: Vec::new(),
        mean_sup_dy: Vec::new(),
        particle_sup: Vec::new(),
        slope_so_far: Vec::new(),
        rate: None,
        limit_paths,
        limit_trace,
    };
    for &n in n_list {
        let (mut gy, mut gz, mut dy, mut sup) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        // Replicate r runs on streams r*N .. (r+1)*N, a block of the limit's paths.
        for r in 0..reps {
            let first = r * n;
            let ens = solve_particles(n, driver, terminal, grid, cfg, SeedSpec::new(seed, first as u64), &run_opts)?;
            let sol = &ens.solution;
            let (mut ry, mut rz) = (0.0f64, 0.0f64);
            for k in 0..=m {
                ry = ry.max(w2_gap(&sol.y_law(k), &limit.y_law(k), cap)?.f64());
                if k < m {
                    rz = rz.max(w2_gap(&sol.z_law(k), &limit.z_law(k), cap)?.f64());
                }
            }
            gy += ry;
            gz += rz;
            dy += (0..n)
                .map(|i| {
                    (0..=m)
                        .map(|k| (sol.y(i, k) - limit.y(first + i, k)).f64().abs())
                        .fold(0.0, f64::max)
                })
                .sum::<f64>()
                / n as f64;
            sup = sup.max(sol.sup_norm_y);
        }
        let (gy, gz, dy) = (gy / reps as f64, gz / reps as f64, dy / reps as f64);
        study.w2_y.push(gy);
        study.w2_z.push(gz);
        study.mean_sup_dy.push(dy);
        study.particle_sup.push(sup);
        let r = study.w2_y.len();
        study
            .slope_so_far
            .push(fit_rate(&n_list[..r], &study.w2_y).ok().map(|f| f.slope));
        log::info!("particles N={n}: w2_y {gy:.4e} w2_z {gz:.4e} dy {dy:.4e}");
    }
    study.rate = fit_rate(n_list, &study.w2_y).ok();
    Ok(study)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::bsde::{DriverFlags, DriverInput};
    use crate::stochastic::make_grid;

    fn zero() -> DriverSpec<f64> {
        DriverSpec::new("zero", GrowthProfile::default(), DriverFlags::none(), |_: &DriverInput<'_, f64>| 0.0)
    }

    fn mean_driver() -> DriverSpec<f64> {
        let flags = DriverFlags {
            depends_on_mu1: true,
            monotone_in_mu1: true,
            ..DriverFlags::none()
        };
        DriverSpec::new("mean", GrowthProfile::default(), flags, |inp: &DriverInput<'_, f64>| {
            inp.law_y.mean()[0]
        })
    }

    fn tanh_terminal() -> TerminalFn<f64> {
        Arc::new(|x: &[f64]| x[0].tanh())
    }

    #[test]
    fn zero_driver_matches_decoupled_solve() {
        let g = make_grid(0.0, 1.0, 10).unwrap();
        let cfg = RegressionConfig::default();
        let ens = solve_particles(64, &zero(), &tanh_terminal(), &g, &cfg, SeedSpec::master(3), &ParticleOptions::default()).unwrap();
        let (lim, _) = solve_decoupled_limit(&zero(), &tanh_terminal(), &g, &cfg, 64, SeedSpec::master(3), &PicardOptions::default(), 1).unwrap();
        assert_eq!(ens.solution.y_field(), lim.y_field());
        for i in 0..64 {
            assert_eq!(ens.y(i, 10), ens.noise.path(i).iter().sum::<f64>().tanh());
        }
    }

    #[test]
    fn identical_particles_follow_mean_ode() {
        let g = make_grid(0.0, 1.0, 200).unwrap();
        let c = 0.5;
        let eta: TerminalFn<f64> = Arc::new(move |_: &[f64]| c);
        let ens = solve_particles(16, &mean_driver(), &eta, &g, &RegressionConfig::default(), SeedSpec::master(1), &ParticleOptions::default()).unwrap();
        for k in 0..=200 {
            let exact = c * (1.0 - g.time(k)).exp();
            for i in 0..16 {
                assert!((ens.y(i, k) - ens.y(0, k)).abs() < 1e-12);
            }
            assert!((ens.y(0, k) - exact).abs() < 5e-3, "k={k}");
        }
    }

    #[test]
    fn offdiag_energy_vanishes_without_coupling() {
        let g = make_grid(0.0, 1.0, 8).unwrap();
        let opts = ParticleOptions {
            offdiag: true,
            ..ParticleOptions::default()
        };
        let ens = solve_particles(4, &zero(), &tanh_terminal(), &g, &RegressionConfig::default(), SeedSpec::master(5), &opts).unwrap();
        assert_eq!(ens.max_offdiag_energy(), Some(0.0));
        let coupled = solve_particles(4, &mean_driver(), &tanh_terminal(), &g, &RegressionConfig::default(), SeedSpec::master(5), &opts).unwrap();
        let e = coupled.max_offdiag_energy().unwrap();
        assert!(e > 0.0 && e.is_finite());
    }

    #[test]
    fn offdiag_cap_is_enforced() {
        let g = make_grid(0.0, 1.0, 4).unwrap();
        let opts = ParticleOptions {
            offdiag: true,
            ..ParticleOptions::default()
        };
        let r = solve_particles(OFFDIAG_CAP + 1, &zero(), &tanh_terminal(), &g, &RegressionConfig::default(), SeedSpec::master(5), &opts);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn relabelling_permutes_outputs() {
        let g = make_grid(0.0, 1.0, 12).unwrap();
        let cfg = RegressionConfig::default();
        let opts = ParticleOptions {
            offdiag: true,
            ..ParticleOptions::default()
        };
        let streams: Vec<u64> = (0..12).collect();
        let perm: Vec<usize> = vec![5, 0, 11, 3, 7, 1, 9, 2, 10, 4, 8, 6];
        let shuffled: Vec<u64> = perm.iter().map(|&p| streams[p]).collect();
        let a = solve_particles_on_streams(&mean_driver(), &tanh_terminal(), &g, &cfg, 9, &streams, &opts).unwrap();
        let b = solve_particles_on_streams(&mean_driver(), &tanh_terminal(), &g, &cfg, 9, &shuffled, &opts).unwrap();
        let ea = a.z_offdiag_energy.as_ref().unwrap();
        let eb = b.z_offdiag_energy.as_ref().unwrap();
        for (q, &p) in perm.iter().enumerate() {
            for k in 0..=12 {
                assert_eq!(a.y(p, k).to_bits(), b.y(q, k).to_bits());
            }
            for k in 0..12 {
                assert_eq!(a.z_diag(p, k), b.z_diag(q, k));
                assert_eq!(ea[p * 12 + k].to_bits(), eb[q * 12 + k].to_bits());
            }
        }
    }

    #[test]
    fn duplicate_streams_rejected() {
        let g = make_grid(0.0, 1.0, 4).unwrap();
        let r = solve_particles_on_streams(&zero(), &tanh_terminal(), &g, &RegressionConfig::default(), 1, &[0, 1, 1], &ParticleOptions::default());
        assert!(r.is_err());
    }

    #[test]
    fn study_validates_and_reports_aligned_lists() {
        let g = make_grid(0.0, 1.0, 10).unwrap();
        let cfg = RegressionConfig::default();
        let po = PicardOptions::default();
        let opts = ParticleOptions::default();
        assert!(convergence_study(&zero(), &tanh_terminal(), &g, &cfg, &[16, 8], 1, &po, &opts).is_err());
        assert!(convergence_study(&zero(), &tanh_terminal(), &g, &cfg, &[4, 8], 1, &po, &opts).is_err());
        let s = convergence_study(&zero(), &tanh_terminal(), &g, &cfg, &[16, 32, 64], 1, &po, &opts).unwrap();
        assert_eq!(s.w2_y.len(), 3);
        assert_eq!(s.limit_paths, 512);
        assert!(s.mean_sup_dy.iter().all(|&d| d >= 0.0));
        assert!(s.slope_so_far[0].is_none() && s.slope_so_far[2].is_some());
        assert!(s.rate.is_some());
    }
}
