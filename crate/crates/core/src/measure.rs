//! Uniform empirical measures and exact Wasserstein-2 distances.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::{dist_sq, Real};

/// Largest cloud accepted by [`w2_assignment`] unless a cap is given.
pub const DEFAULT_ASSIGNMENT_CAP: usize = 512;

/// Uniform-weight atom cloud. Atoms stay in insertion order (path order),
/// the mean and second moment are cached at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure<R> {
    dim: usize,
    atoms: Vec<R>,
    mean: Vec<R>,
    second_moment: R,
}

impl<R: Real> EmpiricalMeasure<R> {
    /// `atoms` is row-major `n x dim`.
    pub fn new(atoms: Vec<R>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("measure dimension must be positive"));
        }
        if atoms.is_empty() || !atoms.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "atom buffer of length {} is not a nonempty multiple of dim {dim}",
                atoms.len()
            )));
        }
        if atoms.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("measure atoms must be finite"));
        }
        Ok(Self::from_atoms_unchecked(atoms, dim))
    }

    pub(crate) fn from_atoms_unchecked(atoms: Vec<R>, dim: usize) -> Self {
        let n = atoms.len() / dim;
        let mut mean = vec![R::zero(); dim];
        let mut sq = R::zero();
        for row in atoms.chunks_exact(dim) {
            for (m, &x) in mean.iter_mut().zip(row) {
                *m += x;
                sq += x * x;
            }
        }
        let inv = R::one() / R::of_usize(n);
        for m in mean.iter_mut() {
            *m *= inv;
        }
        Self {
            dim,
            atoms,
            mean,
            second_moment: sq * inv,
        }
    }

    pub fn from_scalars(values: Vec<R>) -> Result<Self> {
        Self::new(values, 1)
    }

    /// Single atom at the origin.
    pub fn dirac_zero(dim: usize) -> Self {
        Self::from_atoms_unchecked(vec![R::zero(); dim.max(1)], dim.max(1))
    }

    /// Single atom at `x`.
    pub fn dirac(x: &[R]) -> Result<Self> {
        Self::new(x.to_vec(), x.len())
    }

    pub fn len(&self) -> usize {
        self.atoms.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[R] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> &[R] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mean(&self) -> &[R] {
        &self.mean
    }

    /// `(1/n) sum |x_i|^2`.
    pub fn second_moment(&self) -> R {
        self.second_moment
    }

    pub fn scaled(&self, c: R) -> Self {
        Self::from_atoms_unchecked(self.atoms.iter().map(|&x| x * c).collect(), self.dim)
    }

    /// Every atom shifted by `h` (all coordinates).
    pub fn shifted(&self, h: R) -> Self {
        Self::from_atoms_unchecked(self.atoms.iter().map(|&x| x + h).collect(), self.dim)
    }
}

fn sorted_f64<R: Real>(mu: &EmpiricalMeasure<R>) -> Vec<f64> {
    let mut v: Vec<(f64, usize)> = mu.atoms.iter().enumerate().map(|(i, x)| (x.f64(), i)).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    v.into_iter().map(|(x, _)| x).collect()
}

/// Exact W2 between one-dimensional measures via the quantile coupling.
pub fn w2_quantile_1d<R: Real>(mu: &EmpiricalMeasure<R>, nu: &EmpiricalMeasure<R>) -> Result<R> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::invalid(format!(
            "quantile W2 needs dim 1 measures, got {} and {}",
            mu.dim(),
            nu.dim()
        )));
    }
    let a = sorted_f64(mu);
    let b = sorted_f64(nu);
    let (n, m) = (a.len(), b.len());
    let cost = if n == m {
        a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n as f64
    } else {
        // Walk the merged breakpoints {i/n} u {j/m} of both quantile functions.
        let (mut i, mut j) = (0usize, 0usize);
        let mut level = 0.0f64;
        let mut acc = 0.0f64;
        while i < n && j < m {
            let next_a = (i + 1) as f64 / n as f64;
            let next_b = (j + 1) as f64 / m as f64;
            let next = next_a.min(next_b);
            let d = a[i] - b[j];
            acc += d * d * (next - level);
            level = next;
            // Integer comparison avoids float ties between i/n and j/m.
            match ((i + 1) * m).cmp(&((j + 1) * n)) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    };
    Ok(R::of(cost.max(0.0).sqrt()))
}

/// Exact W2 between equal-size clouds by optimal assignment, default cap.
pub fn w2_assignment<R: Real>(mu: &EmpiricalMeasure<R>, nu: &EmpiricalMeasure<R>) -> Result<R> {
    w2_assignment_capped(mu, nu, DEFAULT_ASSIGNMENT_CAP)
}

pub fn w2_assignment_capped<R: Real>(
    mu: &EmpiricalMeasure<R>,
    nu: &EmpiricalMeasure<R>,
    cap: usize,
) -> Result<R> {
    if mu.len() != nu.len() {
        return Err(Error::invalid(format!(
            "assignment W2 needs equal sizes, got {} and {}",
            mu.len(),
            nu.len()
        )));
    }
    if mu.dim() != nu.dim() {
        return Err(Error::invalid("measures live in different dimensions"));
    }
    let n = mu.len();
    if n > cap {
        return Err(Error::invalid(format!(
            "assignment W2 capped at {cap} atoms, got {n}"
        )));
    }
    let mut cost = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            cost[i * n + j] = dist_sq(mu.atom(i), nu.atom(j)).f64();
        }
    }
    let total = min_cost_assignment(&cost, n).1;
    Ok(R::of((total / n as f64).max(0.0).sqrt()))
}

/// Hungarian algorithm with potentials on a dense `n x n` cost matrix.
/// Returns the column assigned to every row and the optimal total cost.
pub fn min_cost_assignment(cost: &[f64], n: usize) -> (Vec<usize>, f64) {
    let inf = f64::INFINITY;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    let mut total = 0.0;
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
            total += cost[(p[j] - 1) * n + (j - 1)];
        }
    }
    (row_to_col, total)
}

/// `W2(mu, delta_0)`, the root second moment.
pub fn w2_to_dirac0<R: Real>(mu: &EmpiricalMeasure<R>) -> R {
    mu.second_moment().max(R::zero()).sqrt()
}

/// Gap between two laws as used by the fixed-point loops: exact in dim 1,
/// against a single atom, and for equal-size clouds up to `cap`, otherwise
/// the index-coupling upper bound `((1/n) sum |x_i - y_i|^2)^(1/2)`.
pub fn w2_gap<R: Real>(mu: &EmpiricalMeasure<R>, nu: &EmpiricalMeasure<R>, cap: usize) -> Result<R> {
    if mu.dim() == 1 && nu.dim() == 1 {
        return w2_quantile_1d(mu, nu);
    }
    if mu.dim() == nu.dim() && (mu.len() == 1 || nu.len() == 1) {
        // The only coupling with a point mass moves every atom onto it.
        let (cloud, point) = if nu.len() == 1 { (mu, nu.atom(0)) } else { (nu, mu.atom(0)) };
        let s: f64 = (0..cloud.len()).map(|i| dist_sq(cloud.atom(i), point).f64()).sum();
        return Ok(R::of((s / cloud.len() as f64).sqrt()));
    }
    if mu.len() == nu.len() && mu.len() <= cap {
        return w2_assignment_capped(mu, nu, cap);
    }
    if mu.len() != nu.len() || mu.dim() != nu.dim() {
        return Err(Error::invalid(
            "no exact W2 available for unequal multi-dimensional clouds",
        ));
    }
    let n = mu.len();
    let s: f64 = (0..n).map(|i| dist_sq(mu.atom(i), nu.atom(i)).f64()).sum();
    Ok(R::of((s / n as f64).sqrt()))
}

/// Least-squares line through `(ln N, ln err)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual_norm: f64,
}

pub fn fit_rate(ns: &[usize], errors: &[f64]) -> Result<RateFit> {
    if ns.len() != errors.len() {
        return Err(Error::invalid("fit_rate needs lists of equal length"));
    }
    if ns.len() < 2 {
        return Err(Error::invalid("fit_rate needs at least two points"));
    }
    if ns.contains(&0) || errors.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::invalid("fit_rate needs strictly positive entries"));
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("fit_rate needs at least two distinct N"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual_norm = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum::<f64>()
        .sqrt();
    Ok(RateFit {
        slope,
        intercept,
        residual_norm,
    })
}
