//! Cross-sectional least squares on a polynomial basis of the path state.
//!
//! Features are standardized per step and expanded in probabilists' Hermite
//! polynomials of total degree `<= degree`. The design is centered so the
//! intercept is fit exactly (and never penalized); the ridge acts on the
//! remaining columns only. Accumulation is in `f64` with the chunked
//! reductions of [`crate::par`].

use crate::error::{Error, Result};
use crate::par;
use crate::scalar::Real;

/// Condition estimate above which the Gram matrix is declared singular.
pub const MAX_CONDITION: f64 = 1e13;

/// Standardization plus multi-indices; maps a raw feature vector to basis values.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    center: Vec<f64>,
    scale: Vec<f64>,
    /// Multi-indices over the active features, total degree in `1..=degree`.
    terms: Vec<Vec<(usize, usize)>>,
    degree: usize,
}

fn hermite(u: f64, degree: usize, out: &mut [f64]) {
    out[0] = 1.0;
    if degree >= 1 {
        out[1] = u;
    }
    for m in 1..degree {
        out[m + 1] = u * out[m] - m as f64 * out[m - 1];
    }
}

fn multi_indices(active: &[usize], degree: usize) -> Vec<Vec<(usize, usize)>> {
    fn rec(
        active: &[usize],
        pos: usize,
        left: usize,
        cur: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        if pos == active.len() {
            if !cur.is_empty() {
                out.push(cur.clone());
            }
            return;
        }
        for e in 0..=left {
            if e > 0 {
                cur.push((active[pos], e));
            }
            rec(active, pos + 1, left - e, cur, out);
            if e > 0 {
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(active, 0, degree, &mut Vec::new(), &mut out);
    // Graded order: lower total degree first, then lexicographic.
    out.sort_by_key(|t| (t.iter().map(|&(_, e)| e).sum::<usize>(), t.clone()));
    out
}

impl Basis {
    /// Fits the standardization to `features` (`n x dim`).
    pub fn fit<R: Real>(features: &[R], n: usize, dim: usize, degree: usize) -> Self {
        let sums = par::sum_vectors::<f64, _>(n, 2 * dim, |i, buf| {
            for j in 0..dim {
                let x = features[i * dim + j].f64();
                buf[j] += x;
                buf[dim + j] += x * x;
            }
        });
        let mut center = vec![0.0; dim];
        let mut scale = vec![1.0; dim];
        let mut active = Vec::new();
        for j in 0..dim {
            let m = sums[j] / n as f64;
            let v = (sums[dim + j] / n as f64 - m * m).max(0.0);
            center[j] = m;
            let sd = v.sqrt();
            if sd > 1e-12 * (1.0 + m.abs()) {
                scale[j] = sd;
                active.push(j);
            }
        }
        let terms = if degree == 0 {
            Vec::new()
        } else {
            multi_indices(&active, degree)
        };
        Self {
            center,
            scale,
            terms,
            degree,
        }
    }

    /// Number of non-intercept columns.
    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// Basis values (without the intercept) at one raw feature vector.
    pub fn eval<R: Real>(&self, x: &[R], out: &mut [f64]) {
        let dim = self.center.len();
        let mut h = vec![0.0; (self.degree + 1) * dim];
        for j in 0..dim {
            let u = (x[j].f64() - self.center[j]) / self.scale[j];
            hermite(u, self.degree, &mut h[j * (self.degree + 1)..(j + 1) * (self.degree + 1)]);
        }
        for (o, term) in out.iter_mut().zip(&self.terms) {
            *o = term
                .iter()
                .map(|&(j, e)| h[j * (self.degree + 1) + e])
                .product();
        }
    }
}

/// Coefficients of one fitted regressand.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub intercept: f64,
    pub beta: Vec<f64>,
    /// Mean squared in-sample residual.
    pub mse: f64,
}

/// Factorized design for one time step, reusable across regressands.
#[derive(Debug, Clone)]
pub struct RegressionPlan {
    basis: Basis,
    n: usize,
    p: usize,
    design: Vec<f64>,
    col_mean: Vec<f64>,
    chol: Vec<f64>,
    condition: f64,
}

impl RegressionPlan {
    pub fn new<R: Real>(
        features: &[R],
        n: usize,
        dim: usize,
        degree: usize,
        ridge: f64,
        step: usize,
    ) -> Result<Self> {
        if n == 0 || features.len() != n * dim {
            return Err(Error::invalid("regression features do not match the path count"));
        }
        let basis = Basis::fit(features, n, dim, degree);
        let p = basis.n_terms();
        let mut design = vec![0.0f64; n * p];
        if p > 0 {
            use rayon::prelude::*;
            design
                .par_chunks_mut(p)
                .enumerate()
                .for_each(|(i, row)| basis.eval(&features[i * dim..(i + 1) * dim], row));
        }
        let col_sum = par::sum_vectors::<f64, _>(n, p, |i, buf| {
            for (b, &x) in buf.iter_mut().zip(&design[i * p..(i + 1) * p]) {
                *b += x;
            }
        });
        let col_mean: Vec<f64> = col_sum.iter().map(|s| s / n as f64).collect();
        let gram_flat = par::sum_vectors::<f64, _>(n, p * p, |i, buf| {
            let row = &design[i * p..(i + 1) * p];
            for a in 0..p {
                let xa = row[a] - col_mean[a];
                for b in 0..=a {
                    buf[a * p + b] += xa * (row[b] - col_mean[b]);
                }
            }
        });
        let mut gram = vec![0.0; p * p];
        for a in 0..p {
            for b in 0..=a {
                let v = gram_flat[a * p + b] / n as f64;
                gram[a * p + b] = v;
                gram[b * p + a] = v;
            }
            gram[a * p + a] += ridge;
        }
        let (chol, condition) = cholesky(&gram, p).ok_or(Error::SingularRegression {
            step,
            condition: f64::INFINITY,
        })?;
        if !(condition <= MAX_CONDITION) {
            return Err(Error::SingularRegression { step, condition });
        }
        Ok(Self {
            basis,
            n,
            p,
            design,
            col_mean,
            chol,
            condition,
        })
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn fit<R: Real>(&self, target: &[R]) -> Fit {
        let (n, p) = (self.n, self.p);
        let sums = par::sum_vectors::<f64, _>(n, p + 1, |i, buf| {
            let y = target[i].f64();
            buf[p] += y;
            let row = &self.design[i * p..(i + 1) * p];
            for ((b, x), m) in buf[..p].iter_mut().zip(row).zip(&self.col_mean) {
                *b += (x - m) * y;
            }
        });
        let mean = sums[p] / n as f64;
        let rhs: Vec<f64> = sums[..p].iter().map(|s| s / n as f64).collect();
        let beta = chol_solve(&self.chol, p, &rhs);
        let intercept = mean - beta.iter().zip(&self.col_mean).map(|(b, c)| b * c).sum::<f64>();
        let sse = par::sum_indices::<f64, _>(n, |i| {
            let e = target[i].f64() - self.predict_row(intercept, &beta, i);
            e * e
        });
        Fit {
            intercept,
            beta,
            mse: sse / n as f64,
        }
    }

    #[inline]
    pub fn predict_row(&self, intercept: f64, beta: &[f64], i: usize) -> f64 {
        let row = &self.design[i * self.p..(i + 1) * self.p];
        intercept + beta.iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }

    /// In-sample fitted values.
    pub fn predict(&self, fit: &Fit) -> Vec<f64> {
        par::map_indices(self.n, |i| self.predict_row(fit.intercept, &fit.beta, i))
    }
}

/// Fitted coefficients applied to arbitrary feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct StepModel {
    pub basis: Basis,
    pub fit: Fit,
}

impl StepModel {
    pub fn predict<R: Real>(&self, x: &[R]) -> f64 {
        let mut row = vec![0.0; self.basis.n_terms()];
        self.basis.eval(x, &mut row);
        self.fit.intercept + self.fit.beta.iter().zip(&row).map(|(b, v)| b * v).sum::<f64>()
    }
}

/// Lower Cholesky factor and the squared ratio of extreme pivots.
fn cholesky(a: &[f64], p: usize) -> Option<(Vec<f64>, f64)> {
    let mut l = vec![0.0; p * p];
    let (mut dmax, mut dmin) = (0.0f64, f64::INFINITY);
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                let d = s.sqrt();
                l[i * p + i] = d;
                dmax = dmax.max(d);
                dmin = dmin.min(d);
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    let cond = if p == 0 { 1.0 } else { (dmax / dmin).powi(2) };
    Some((l, cond))
}

fn chol_solve(l: &[f64], p: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; p];
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * p + k] * y[k];
        }
        y[i] = s / l[i * p + i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in i + 1..p {
            s -= l[k * p + i] * x[k];
        }
        x[i] = s / l[i * p + i];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_recurrence() {
        let mut h = [0.0; 5];
        hermite(2.0, 4, &mut h);
        // He_2 = u^2 - 1, He_3 = u^3 - 3u, He_4 = u^4 - 6u^2 + 3.
        assert_eq!(h, [1.0, 2.0, 3.0, 2.0, -5.0]);
    }

    #[test]
    fn multi_index_count() {
        assert_eq!(multi_indices(&[0, 1], 3).len(), 9);
        assert_eq!(multi_indices(&[0], 4).len(), 4);
    }

    #[test]
    fn recovers_cubic_exactly() {
        let n = 200;
        let x: Vec<f64> = (0..n).map(|i| -2.0 + 4.0 * i as f64 / (n - 1) as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 - 2.0 * v + 0.5 * v * v * v).collect();
        let plan = RegressionPlan::new(&x, n, 1, 3, 0.0, 0).unwrap();
        let fit = plan.fit(&y);
        assert!(fit.mse < 1e-20);
        for (a, b) in plan.predict(&fit).iter().zip(&y) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_features_give_sample_mean() {
        let x = vec![3.0f64; 10];
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let plan = RegressionPlan::new(&x, 10, 1, 3, 1e-8, 0).unwrap();
        let fit = plan.fit(&y);
        assert!(fit.beta.is_empty());
        assert_eq!(fit.intercept, 4.5);
    }

    #[test]
    fn linear_in_regressand() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.7).sin()).collect();
        let y: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).cos()).collect();
        let y2: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let plan = RegressionPlan::new(&x, 50, 1, 3, 1e-8, 0).unwrap();
        let a = plan.predict(&plan.fit(&y));
        let b = plan.predict(&plan.fit(&y2));
        for (u, v) in a.iter().zip(&b) {
            assert_eq!(2.0 * u, *v);
        }
    }

    #[test]
    fn duplicate_points_without_ridge_are_singular() {
        // Two distinct values cannot support a cubic without ridge.
        let x = vec![0.0f64, 1.0, 0.0, 1.0];
        let err = RegressionPlan::new(&x, 4, 1, 3, 0.0, 7).unwrap_err();
        match err {
            Error::SingularRegression { step, .. } => assert_eq!(step, 7),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn step_model_matches_in_sample_prediction() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 / 10.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let plan = RegressionPlan::new(&x, 40, 1, 3, 1e-8, 0).unwrap();
        let fit = plan.fit(&y);
        let model = StepModel {
            basis: plan.basis().clone(),
            fit: fit.clone(),
        };
        let inner = plan.predict(&fit);
        for i in 0..40 {
            assert!((model.predict(&[x[i]]) - inner[i]).abs() < 1e-12);
        }
    }
}
