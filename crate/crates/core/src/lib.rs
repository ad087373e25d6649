//! Truncated Milstein method for time-changed SDEs
//! `dY = f(t,Y) dE(t) + g(t,Y) dW(E(t))` whose coefficients may grow
//! super-linearly, with `E` the inverse of a Lévy subordinator.
//!
//! * [`subordinator`] samples the clock `D` and builds the grid of `E_h`.
//! * [`truncation`] projects states onto a shrinking-controlled ball.
//! * [`scheme`] defines problems and advances the truncated steppers.
//! * [`problems`] holds the benchmark problems and assumption diagnostics.
//! * [`mc_harness`] estimates strong errors over a step-size ladder.
//! * [`config`] parses run configurations for the `tcm` binary.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod mc_harness;
pub mod problems;
pub mod scheme;
pub mod subordinator;
pub mod truncation;

pub use error::{Error, Result};
pub use mc_harness::{
    fit_convergence_order, strong_error_table, CoupledNoise, ErrorNorm, ErrorRow, ErrorTable,
    NoiseGenerator, Reference, RegressionResult, StudyConfig,
};
pub use problems::{check_assumptions, AssumptionReport, SamplingSpec};
pub use scheme::{
    em_step, lg, milstein_step, simulate_path, Scheme, SdeProblem, Trajectory, WienerIncrements,
};
pub use subordinator::{SubordinatorModel, TimeChangeGrid};
pub use truncation::{project, truncated_coefficients, TruncationConfig};
