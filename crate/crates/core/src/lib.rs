//! Delay-difference epidemic model in which the average time to isolation
//! is the control variable, with tools to fit it to cumulative case and
//! death counts and to split new hospital beds between coupled regions.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod allocate;
pub mod error;
pub mod fit;
pub mod io;
pub mod kernel;
pub mod model;
pub mod nelder_mead;
pub mod scenario;
pub mod simulate;

pub use error::{Error, Result};
pub use kernel::{gamma_cdf, gamma_pdf, GammaKernel, GammaParams};
pub use model::{
    BedPlan, Budget, ControlSchedule, CostModel, CouplingMatrix, RegionParams, Seed, SeedConvention, Trajectory,
};
