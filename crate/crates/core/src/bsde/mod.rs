//! Single quadratic BSDE with frozen laws.

pub mod bounds;
pub mod cole_hopf;
pub mod driver;
pub mod lsmc;
pub mod profile;
pub mod regression;

pub use bounds::{compute_bounds, BoundsReport};
pub use cole_hopf::{cole_hopf_indicator, cole_hopf_y0};
pub use driver::{
    probe_class, probe_dominance, probe_monotone_mu1, probe_mu2_free, DriverFlags, DriverInput, DriverSpec,
    Generator, GeneratorRef,
};
pub use lsmc::{
    bmo_proxy, solve_lsmc, BsdeSolution, FeatureSelector, FrozenLaws, RegressionConfig,
    StepModels,
};
pub use profile::{DriverClass, GrowthProfile};
