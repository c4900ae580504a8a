//! Fixed point over the laws `(P_Y, P_Z)` and the additive-split shortcut.
//!
//! Iterate `n` freezes the per-step empirical laws of iterate `n - 1` and
//! solves a standard BSDE. The seed iterate has `Y` equal to the terminal
//! value at every step and `Z = 0`, so the first `Z` law is `delta_0`.

use crate::bsde::lsmc::{solve_lsmc, BsdeSolution, FrozenLaws, RegressionConfig};
use crate::bsde::{DriverInput, DriverSpec};
use crate::error::{Error, PicardRecord, Result};
use crate::measure::{w2_gap, EmpiricalMeasure, DEFAULT_ASSIGNMENT_CAP};
use crate::scalar::Real;
use crate::stochastic::{NoiseBatch, PathBatch};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Weight of the new iterate, in `(0, 1]`; 1 disables damping.
    pub relaxation: f64,
    /// Largest cloud for exact multi-dimensional W2 gaps.
    pub assignment_cap: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iter: 20,
            relaxation: 1.0,
            assignment_cap: DEFAULT_ASSIGNMENT_CAP,
        }
    }
}

impl PicardOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::invalid(format!(
                "relaxation must lie in (0, 1], got {}",
                self.relaxation
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PicardTrace {
    pub records: Vec<PicardRecord>,
    pub converged: bool,
}

impl PicardTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn last(&self) -> Option<&PicardRecord> {
        self.records.last()
    }
}

fn law_gaps<R: Real>(a: &FrozenLaws<R>, b: &FrozenLaws<R>, cap: usize) -> Result<(f64, f64)> {
    let mut gy = 0.0f64;
    let mut gz = 0.0f64;
    for k in 0..a.mu1.len() {
        gy = gy.max(w2_gap(&a.mu1[k], &b.mu1[k], cap)?.f64());
        gz = gz.max(w2_gap(&a.mu2[k], &b.mu2[k], cap)?.f64());
    }
    Ok((gy, gz))
}

fn sup_delta<R: Real>(a: &BsdeSolution<R>, b: &BsdeSolution<R>) -> f64 {
    a.y_field()
        .iter()
        .zip(b.y_field())
        .map(|(x, y)| (*x - *y).f64().abs())
        .fold(0.0, f64::max)
}

pub fn picard_meanfield<R: Real>(
    driver: &DriverSpec<R>,
    terminal: &[R],
    features: &PathBatch<R>,
    noise: &NoiseBatch<R>,
    cfg: &RegressionConfig,
    opts: &PicardOptions,
) -> Result<(BsdeSolution<R>, PicardTrace)> {
    opts.validate()?;
    if terminal.len() != features.n_paths() {
        return Err(Error::invalid("terminal length differs from the path count"));
    }
    let mut prev = BsdeSolution::broadcast_terminal(terminal, *features.grid(), noise.dim());
    let mut laws = FrozenLaws::from_solution(&prev);
    let mut trace = PicardTrace::default();
    for it in 1..=opts.max_iter {
        let mut sol = match solve_lsmc(driver, &laws, terminal, features, noise, cfg) {
            Ok(s) => s,
            Err(e) if e.is_divergence() => {
                return Err(Error::PicardDivergence {
                    iteration: it,
                    detail: e.to_string(),
                    trace: trace.records,
                })
            }
            Err(e) => return Err(e),
        };
        if opts.relaxation < 1.0 {
            sol.relax_towards(&prev, opts.relaxation);
        }
        let next = FrozenLaws::from_solution(&sol);
        let (y_gap, z_gap) = law_gaps(&next, &laws, opts.assignment_cap)?;
        let record = PicardRecord {
            iteration: it,
            y_gap,
            z_gap,
            sup_delta: sup_delta(&sol, &prev),
            bmo: sol.bmo,
        };
        log::debug!("picard {it}: y_gap {y_gap:.3e} z_gap {z_gap:.3e}");
        trace.records.push(record);
        if !(y_gap.is_finite() && z_gap.is_finite()) {
            return Err(Error::PicardDivergence {
                iteration: it,
                detail: "non-finite law gap".into(),
                trace: trace.records,
            });
        }
        laws = next;
        prev = sol;
        if y_gap <= opts.tol && z_gap <= opts.tol {
            trace.converged = true;
            break;
        }
    }
    Ok((prev, trace))
}

/// Solves `g1(z) + g2(P_Z)` by one `g1` solve plus the deterministic shift
/// `Y_k += sum_{j >= k} g2(t_j, P_{Z_j}) dt`; `Z` is left unchanged.
pub fn solve_additive_split<R: Real>(
    g1: &DriverSpec<R>,
    g2: &DriverSpec<R>,
    terminal: &[R],
    features: &PathBatch<R>,
    noise: &NoiseBatch<R>,
    cfg: &RegressionConfig,
) -> Result<BsdeSolution<R>> {
    let f1 = g1.flags;
    if f1.depends_on_y || f1.depends_on_mu1 || f1.depends_on_mu2 || f1.depends_on_state {
        return Err(Error::invalid(format!(
            "split component g1 '{}' must depend on z only",
            g1.name
        )));
    }
    let f2 = g2.flags;
    if f2.depends_on_y || f2.depends_on_z || f2.depends_on_mu1 || f2.depends_on_state {
        return Err(Error::invalid(format!(
            "split component g2 '{}' must depend on the law of Z only",
            g2.name
        )));
    }
    let m = features.n_steps();
    let d = noise.dim();
    let laws = FrozenLaws::constant(m, EmpiricalMeasure::dirac_zero(1), EmpiricalMeasure::dirac_zero(d));
    let mut sol = solve_lsmc(g1, &laws, terminal, features, noise, cfg)?;
    let grid = *sol.grid();
    let dt = grid.dt();
    let dummy_y = EmpiricalMeasure::dirac_zero(1);
    let zero_z = vec![R::zero(); d];
    let mut shift = vec![R::zero(); m + 1];
    for k in (0..m).rev() {
        let law_z = sol.z_law(k);
        let c = g2.eval(&DriverInput {
            t: grid.time(k),
            step: k,
            path: 0,
            state: features.state(0, k),
            y: R::zero(),
            z: &zero_z,
            law_y: &dummy_y,
            law_z: &law_z,
        });
        shift[k] = shift[k + 1] + c * dt;
    }
    sol.shift_y(&shift);
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsde::{DriverFlags, GrowthProfile};
    use crate::measure::w2_to_dirac0;
    use crate::stochastic::{cumulate, make_grid, sample_brownian, SeedSpec};

    fn setup(n: usize, m: usize, t: f64) -> (PathBatch<f64>, NoiseBatch<f64>) {
        let g = make_grid(0.0, t, m).unwrap();
        let noise = sample_brownian(&g, n, 1, SeedSpec::master(4)).unwrap();
        (cumulate(&noise, &g).unwrap(), noise)
    }

    #[test]
    fn law_of_z_driver_converges_immediately() {
        let (f, w) = setup(200, 10, 1.0);
        let g = DriverSpec::new(
            "w2z",
            GrowthProfile::default(),
            DriverFlags {
                depends_on_mu2: true,
                ..DriverFlags::none()
            },
            |inp: &DriverInput<'_, f64>| 0.3 * w2_to_dirac0(inp.law_z),
        );
        let (sol, trace) = picard_meanfield(&g, &vec![0.7; 200], &f, &w, &RegressionConfig::default(), &PicardOptions::default()).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.iterations(), 1);
        assert!(sol.y_field().iter().all(|&v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn mean_driver_matches_exponential() {
        let (f, w) = setup(64, 200, 1.0);
        let g = DriverSpec::new(
            "mean",
            GrowthProfile::default(),
            DriverFlags {
                depends_on_mu1: true,
                monotone_in_mu1: true,
                ..DriverFlags::none()
            },
            |inp: &DriverInput<'_, f64>| inp.law_y.mean()[0],
        );
        let (sol, trace) = picard_meanfield(&g, &vec![1.0; 64], &f, &w, &RegressionConfig::default(), &PicardOptions::default()).unwrap();
        assert!(trace.converged);
        assert!(trace.iterations() <= 10);
        assert!((sol.y0() - std::f64::consts::E).abs() < 1e-2);
    }

    #[test]
    fn constant_split_shift() {
        let (f, w) = setup(50, 10, 1.0);
        let zero = DriverSpec::new("zero", GrowthProfile::default(), DriverFlags::none(), |_: &DriverInput<'_, f64>| 0.0);
        let c = DriverSpec::new("c", GrowthProfile::default(), DriverFlags::none(), |_: &DriverInput<'_, f64>| 0.25);
        let sol = solve_additive_split(&zero, &c, &vec![0.0; 50], &f, &w, &RegressionConfig::default()).unwrap();
        let grid = *sol.grid();
        for k in 0..=10 {
            let expect = 0.25 * (1.0 - grid.time(k));
            assert!((sol.y(3, k) - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn split_rejects_wrong_flags() {
        let (f, w) = setup(20, 4, 1.0);
        let ydep = DriverSpec::new(
            "y",
            GrowthProfile::default(),
            DriverFlags {
                depends_on_y: true,
                ..DriverFlags::none()
            },
            |inp: &DriverInput<'_, f64>| inp.y,
        );
        let zero = DriverSpec::new("zero", GrowthProfile::default(), DriverFlags::none(), |_: &DriverInput<'_, f64>| 0.0);
        assert!(matches!(
            solve_additive_split(&ydep, &zero, &[0.0; 20], &f, &w, &RegressionConfig::default()),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            solve_additive_split(&zero, &ydep, &[0.0; 20], &f, &w, &RegressionConfig::default()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn options_validation() {
        let bad = PicardOptions {
            relaxation: 0.0,
            ..PicardOptions::default()
        };
        assert!(bad.validate().is_err());
        let bad = PicardOptions {
            max_iter: 0,
            ..PicardOptions::default()
        };
        assert!(bad.validate().is_err());
    }
}
