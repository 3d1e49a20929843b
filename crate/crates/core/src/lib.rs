//! Learning per-consumer price elasticities from aggregate demand.
//!
//! A utility broadcasts small, independent, per-consumer price perturbations and
//! only observes the aggregate change in consumption at the feeder head. Each
//! consumer responds linearly with an unknown elasticity, so recovering the
//! elasticities is a linear regression of the aggregate response on the price
//! matrix. When few consumers respond, the problem is sparse and can be solved
//! with far fewer time slots than consumers.
//!
//! The crate is split into:
//!
//! * [`scenario`]: synthetic train/validation datasets with a known ground truth.
//! * [`estimators`]: OLS, ridge, lasso (coordinate descent) and the variational
//!   garrote, a spike-and-slab mean-field method that approximates ℓ0 selection.
//! * [`selection`]: hyperparameter grids and validation-set model selection.
//! * [`metrics`]: generalization error, ROC AUC and reconstruction error.
//! * [`harness`]: seeded sweeps over sample ratio or SNR, aggregation, CSV and SVG output.
//! * [`cli`]: the command-line front end.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod metrics;
pub mod scenario;
pub mod selection;

pub use error::{Error, Result};
pub use estimators::{FitResult, Method, SolverSettings};
pub use scenario::{Dataset, GroundTruth, NoiseSpec, ScenarioConfig};
