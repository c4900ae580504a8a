//! Time grids, counter-based Brownian increments and path containers.
//!
//! Each path draws from its own ChaCha8 stream keyed by
//! `(master_seed, stream_id)`, so any subset of paths can be regenerated in
//! isolation and the output does not depend on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform grid on `[t_start, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<R> {
    t_start: R,
    t_end: R,
    n_steps: usize,
}

impl<R: Real> TimeGrid<R> {
    pub fn t_start(&self) -> R {
        self.t_start
    }

    pub fn t_end(&self) -> R {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn horizon(&self) -> R {
        self.t_end - self.t_start
    }

    pub fn dt(&self) -> R {
        self.horizon() / R::of_usize(self.n_steps)
    }

    /// Grid point `k`; the last point is `t_end` exactly.
    pub fn time(&self, k: usize) -> R {
        if k >= self.n_steps {
            self.t_end
        } else {
            self.t_start + R::of_usize(k) * self.dt()
        }
    }

    pub fn times(&self) -> Vec<R> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }

    /// Same span with `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        let n = self
            .n_steps
            .checked_mul(factor)
            .ok_or_else(|| Error::Capacity("refined grid step count overflows".into()))?;
        make_grid(self.t_start, self.t_end, n)
    }
}

pub fn make_grid<R: Real>(t_start: R, t_end: R, n_steps: usize) -> Result<TimeGrid<R>> {
    if !(t_start.is_finite() && t_end.is_finite()) {
        return Err(Error::invalid("grid endpoints must be finite"));
    }
    if !(t_start < t_end) {
        return Err(Error::invalid(format!(
            "grid span must be positive (t_start = {t_start}, t_end = {t_end})"
        )));
    }
    if n_steps == 0 {
        return Err(Error::invalid("grid needs at least one step"));
    }
    Ok(TimeGrid {
        t_start,
        t_end,
        n_steps,
    })
}

/// Master seed plus the index of the first substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    pub fn master(master_seed: u64) -> Self {
        Self::new(master_seed, 0)
    }

    /// The generator for this exact `(master_seed, stream_id)` pair.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Substream `offset` positions after this one.
    pub fn offset(&self, offset: u64) -> Self {
        Self::new(self.master_seed, self.stream_id.wrapping_add(offset))
    }
}

/// Brownian increments, `n_paths x n_steps x dim`, row-major by path.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBatch<R> {
    n_paths: usize,
    n_steps: usize,
    dim: usize,
    dt: R,
    streams: Vec<u64>,
    increments: Vec<R>,
}

impl<R: Real> NoiseBatch<R> {
    /// Wraps externally built increments (all must be finite).
    pub fn from_increments(
        n_paths: usize,
        n_steps: usize,
        dim: usize,
        dt: R,
        increments: Vec<R>,
    ) -> Result<Self> {
        if n_paths == 0 || n_steps == 0 || dim == 0 {
            return Err(Error::invalid("noise batch dimensions must be positive"));
        }
        let len = checked_len(n_paths, n_steps, dim)?;
        if increments.len() != len {
            return Err(Error::invalid(format!(
                "expected {len} increments, got {}",
                increments.len()
            )));
        }
        if increments.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("increments must be finite"));
        }
        Ok(Self {
            n_paths,
            n_steps,
            dim,
            dt,
            streams: (0..n_paths as u64).collect(),
            increments,
        })
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> R {
        self.dt
    }

    /// Stream id that generated each path.
    pub fn streams(&self) -> &[u64] {
        &self.streams
    }

    pub fn increments(&self) -> &[R] {
        &self.increments
    }

    pub fn increment(&self, path: usize, step: usize) -> &[R] {
        let o = (path * self.n_steps + step) * self.dim;
        &self.increments[o..o + self.dim]
    }

    pub fn path(&self, path: usize) -> &[R] {
        let w = self.n_steps * self.dim;
        &self.increments[path * w..(path + 1) * w]
    }

    /// Paths re-ordered (or subset) by index.
    pub fn select(&self, paths: &[usize]) -> Self {
        let w = self.n_steps * self.dim;
        let mut increments = Vec::with_capacity(paths.len() * w);
        let mut streams = Vec::with_capacity(paths.len());
        for &p in paths {
            increments.extend_from_slice(self.path(p));
            streams.push(self.streams[p]);
        }
        Self {
            n_paths: paths.len(),
            n_steps: self.n_steps,
            dim: self.dim,
            dt: self.dt,
            streams,
            increments,
        }
    }
}

fn checked_len(n_paths: usize, n_steps: usize, dim: usize) -> Result<usize> {
    let len = n_paths
        .checked_mul(n_steps)
        .and_then(|x| x.checked_mul(dim))
        .ok_or_else(|| {
            Error::Capacity(format!(
                "{n_paths} x {n_steps} x {dim} increments overflow the address space"
            ))
        })?;
    let bytes = len.saturating_mul(std::mem::size_of::<R0>());
    if bytes > isize::MAX as usize {
        return Err(Error::Capacity(format!(
            "{n_paths} x {n_steps} x {dim} increments exceed addressable memory"
        )));
    }
    Ok(len)
}

// Widest supported scalar, used for the capacity bound.
type R0 = f64;

/// Increments for paths `seed.stream_id + i`, `i in 0..n_paths`.
pub fn sample_brownian<R: Real>(
    grid: &TimeGrid<R>,
    n_paths: usize,
    dim: usize,
    seed: SeedSpec,
) -> Result<NoiseBatch<R>> {
    if n_paths == 0 || dim == 0 {
        return Err(Error::invalid("n_paths and dim must be at least 1"));
    }
    checked_len(n_paths, grid.n_steps(), dim)?;
    let streams: Vec<u64> = (0..n_paths as u64)
        .map(|i| seed.stream_id.wrapping_add(i))
        .collect();
    sample_streams(grid, seed.master_seed, &streams, dim)
}

/// Increments for an explicit list of stream ids; path `i` uses `streams[i]`.
pub fn sample_streams<R: Real>(
    grid: &TimeGrid<R>,
    master_seed: u64,
    streams: &[u64],
    dim: usize,
) -> Result<NoiseBatch<R>> {
    let n_paths = streams.len();
    if n_paths == 0 || dim == 0 {
        return Err(Error::invalid("n_paths and dim must be at least 1"));
    }
    let n_steps = grid.n_steps();
    let len = checked_len(n_paths, n_steps, dim)?;
    let sd = grid.dt().f64().sqrt();
    let mut increments = vec![R::zero(); len];
    increments
        .par_chunks_mut(n_steps * dim)
        .zip(streams.par_iter())
        .for_each(|(row, &stream)| {
            let mut rng = SeedSpec::new(master_seed, stream).rng();
            for x in row.iter_mut() {
                let g: f64 = StandardNormal.sample(&mut rng);
                *x = R::of(g * sd);
            }
        });
    Ok(NoiseBatch {
        n_paths,
        n_steps,
        dim,
        dt: grid.dt(),
        streams: streams.to_vec(),
        increments,
    })
}

/// States on a grid, `n_paths x (n_steps + 1) x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch<R> {
    n_paths: usize,
    dim: usize,
    grid: TimeGrid<R>,
    states: Vec<R>,
}

impl<R: Real> PathBatch<R> {
    pub fn from_states(grid: TimeGrid<R>, n_paths: usize, dim: usize, states: Vec<R>) -> Result<Self> {
        if n_paths == 0 || dim == 0 {
            return Err(Error::invalid("path batch dimensions must be positive"));
        }
        let len = checked_len(n_paths, grid.n_steps() + 1, dim)?;
        if states.len() != len {
            return Err(Error::invalid(format!(
                "expected {len} states, got {}",
                states.len()
            )));
        }
        Ok(Self {
            n_paths,
            dim,
            grid,
            states,
        })
    }

    /// Every path frozen at `x0` (deterministic features).
    pub fn constant(grid: TimeGrid<R>, n_paths: usize, x0: &[R]) -> Result<Self> {
        let dim = x0.len();
        let mut states = Vec::with_capacity(n_paths * (grid.n_steps() + 1) * dim);
        for _ in 0..n_paths * (grid.n_steps() + 1) {
            states.extend_from_slice(x0);
        }
        Self::from_states(grid, n_paths, dim, states)
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid(&self) -> &TimeGrid<R> {
        &self.grid
    }

    pub fn states(&self) -> &[R] {
        &self.states
    }

    pub fn state(&self, path: usize, step: usize) -> &[R] {
        let o = (path * (self.n_steps() + 1) + step) * self.dim;
        &self.states[o..o + self.dim]
    }

    pub fn path(&self, path: usize) -> &[R] {
        let w = (self.n_steps() + 1) * self.dim;
        &self.states[path * w..(path + 1) * w]
    }

    /// Component `j` of every path at `step`.
    pub fn column(&self, step: usize, j: usize) -> Vec<R> {
        (0..self.n_paths).map(|i| self.state(i, step)[j]).collect()
    }

    /// Terminal states, `n_paths x dim`.
    pub fn terminal(&self) -> Vec<R> {
        let k = self.n_steps();
        (0..self.n_paths)
            .flat_map(|i| self.state(i, k).iter().copied())
            .collect()
    }

    /// Forward differences; inverse of [`cumulate`] for paths starting at 0.
    pub fn diff(&self) -> NoiseBatch<R> {
        let n_steps = self.n_steps();
        let mut inc = Vec::with_capacity(self.n_paths * n_steps * self.dim);
        for i in 0..self.n_paths {
            for k in 0..n_steps {
                let a = self.state(i, k);
                let b = self.state(i, k + 1);
                inc.extend(a.iter().zip(b).map(|(&x, &y)| y - x));
            }
        }
        NoiseBatch {
            n_paths: self.n_paths,
            n_steps,
            dim: self.dim,
            dt: self.grid.dt(),
            streams: (0..self.n_paths as u64).collect(),
            increments: inc,
        }
    }

    /// Paths re-ordered (or subset) by index.
    pub fn select(&self, paths: &[usize]) -> Self {
        let mut states = Vec::with_capacity(paths.len() * (self.n_steps() + 1) * self.dim);
        for &p in paths {
            states.extend_from_slice(self.path(p));
        }
        Self {
            n_paths: paths.len(),
            dim: self.dim,
            grid: self.grid,
            states,
        }
    }
}

/// Prefix sums of increments: row 0 is zero.
pub fn cumulate<R: Real>(noise: &NoiseBatch<R>, grid: &TimeGrid<R>) -> Result<PathBatch<R>> {
    if grid.n_steps() != noise.n_steps() {
        return Err(Error::invalid(format!(
            "grid has {} steps but noise has {}",
            grid.n_steps(),
            noise.n_steps()
        )));
    }
    let (n, m, d) = (noise.n_paths(), noise.n_steps(), noise.dim());
    let mut states = vec![R::zero(); n * (m + 1) * d];
    states
        .par_chunks_mut((m + 1) * d)
        .enumerate()
        .for_each(|(i, row)| {
            let inc = noise.path(i);
            for k in 0..m {
                for j in 0..d {
                    row[(k + 1) * d + j] = row[k * d + j] + inc[k * d + j];
                }
            }
        });
    PathBatch::from_states(*grid, n, d, states)
}

/// Per-step mean and (biased) variance of all increment coordinates.
pub fn increment_moments<R: Real>(noise: &NoiseBatch<R>) -> Vec<(f64, f64)> {
    let (n, m, d) = (noise.n_paths(), noise.n_steps(), noise.dim());
    (0..m)
        .map(|k| {
            let count = (n * d) as f64;
            let mut sum = 0.0;
            for i in 0..n {
                for &x in noise.increment(i, k) {
                    sum += x.f64();
                }
            }
            let mean = sum / count;
            let mut ss = 0.0;
            for i in 0..n {
                for &x in noise.increment(i, k) {
                    let e = x.f64() - mean;
                    ss += e * e;
                }
            }
            (mean, ss / count)
        })
        .collect()
}
