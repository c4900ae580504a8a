//! Mean-field quadratic BSDE laboratory.
//!
//! Regression Monte Carlo solvers for backward equations whose driver sees
//! the laws of `(Y, Z)`, Picard iteration over those laws, the interacting
//! particle approximation, explicit a-priori constants, and a nonlocal
//! parabolic PDE solver used as a Feynman–Kac cross-check.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the `*F64` aliases
//! at the crate root fix the usual double-precision instantiation.

// `!(x <= bound)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bsde;
pub mod catalog;
pub mod comparison;
pub mod error;
pub mod forward;
pub mod measure;
pub mod par;
pub mod particles;
pub mod pde;
pub mod picard;
pub mod scalar;
pub mod stochastic;

pub use bsde::{
    compute_bounds, solve_lsmc, BoundsReport, BsdeSolution, DriverClass, DriverFlags, DriverInput,
    DriverSpec, FrozenLaws, GrowthProfile, RegressionConfig,
};
pub use catalog::{
    make_driver, make_terminal, random_linear_growth_case, BoundsCase, DriverName, DriverParams,
    TerminalName,
};
pub use comparison::{generate_comparison_case, run_comparison, ComparisonCase, ComparisonVerdict, TerminalFn};
pub use error::{Error, PicardRecord, Result};
pub use measure::{
    fit_rate, w2_assignment, w2_assignment_capped, w2_gap, w2_quantile_1d, w2_to_dirac0,
    EmpiricalMeasure, RateFit,
};
pub use particles::{
    convergence_study, solve_decoupled_limit, solve_particles, ConvergenceStudy, ParticleEnsemble,
    ParticleOptions,
};
pub use pde::{feynman_kac_check, solve_pde, FeynmanKacReport, PdeSpec, SpaceGrid, ValueField};
pub use picard::{picard_meanfield, solve_additive_split, PicardOptions, PicardTrace};
pub use scalar::Real;
pub use stochastic::{
    cumulate, make_grid, sample_brownian, sample_streams, NoiseBatch, PathBatch, SeedSpec,
    TimeGrid,
};

pub type TimeGridF64 = TimeGrid<f64>;
pub type TimeGridF32 = TimeGrid<f32>;
pub type NoiseBatchF64 = NoiseBatch<f64>;
pub type NoiseBatchF32 = NoiseBatch<f32>;
pub type PathBatchF64 = PathBatch<f64>;
pub type PathBatchF32 = PathBatch<f32>;
pub type EmpiricalMeasureF64 = EmpiricalMeasure<f64>;
pub type EmpiricalMeasureF32 = EmpiricalMeasure<f32>;
pub type BsdeSolutionF64 = BsdeSolution<f64>;
pub type BsdeSolutionF32 = BsdeSolution<f32>;
pub type DriverSpecF64 = DriverSpec<f64>;
pub type DriverSpecF32 = DriverSpec<f32>;
pub type ParticleEnsembleF64 = ParticleEnsemble<f64>;
pub type ParticleEnsembleF32 = ParticleEnsemble<f32>;
pub type ValueFieldF64 = ValueField<f64>;
pub type ValueFieldF32 = ValueField<f32>;
