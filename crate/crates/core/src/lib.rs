//! Iterative magnitude pruning (IMP) for linear models trained by gradient
//! flow, with the thresholding baselines it is compared against and the
//! machinery to check its sparse-recovery guarantee numerically.
//!
//! Indices are 0-based throughout.

pub mod baselines;
pub mod designs;
pub mod error;
pub mod features;
pub mod flow;
pub mod imp;
pub mod linalg;
pub mod stats;
pub mod theory;

pub use error::{ImpError, Result};
pub use features::FeatureSet;
pub use flow::Horizon;
pub use imp::{run_imp, ImpConfig, ImpTrace};
pub use stats::McSummary;
