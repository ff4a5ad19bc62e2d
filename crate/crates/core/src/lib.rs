//! Learning the costs, constraints and dynamics of optimal control problems
//! from noisy partial demonstrations with zeroth-order random matrix search.
//!
//! The crate is organised bottom-up:
//!
//! - [`randmat`]: block-diagonal symmetric matrices, GOE sampling, norm moments.
//! - [`paramspace`]: the feasible set and its Euclidean projection.
//! - [`optimizer`]: the zeroth-order oracle, the projected search and its
//!   hyperparameter schedules.
//! - [`ocp`]: forward trajectory optimization (iLQR, log-barrier, RK4 transcription).
//! - [`ioc`]: demonstrations and the bilevel loss.
//! - [`benchmarks`]: cartpole, two-link arm and LQ tracking problems.
//! - [`baseline`]: Nelder-Mead over the lower-triangular coordinates.
//!
//! Data-parallel loops go through [`par`]; disabling the default `parallel`
//! feature makes everything sequential.

pub mod baseline;
pub mod benchmarks;
pub mod error;
pub mod ioc;
pub mod ocp;
pub mod optimizer;
pub mod par;
pub mod paramspace;
pub mod randmat;
pub mod record;

pub use error::ParamError;
pub use optimizer::{EvalError, LossFn, RunError, StepSchedule, ZormsConfig};
pub use par::Execution;
pub use paramspace::{ConeType, ParamSpace};
pub use randmat::{BlockSpec, SymBlockMatrix};
pub use record::{IterRow, RunRecord};
