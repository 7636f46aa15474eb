//! Experiment harness for iterative magnitude pruning on sparse linear
//! regression: support recovery Monte Carlo, comparison with the alignment
//! heuristic and thresholding baselines, and the noise deviation check.
//!
//! Every trial is a pure function of the configuration and its seed
//! `base_seed + trial`, so trials run in parallel and replay exactly.

pub mod comparison;
pub mod config;
pub mod design;
pub mod error;
pub mod heuristic;
pub mod lemma1;
pub mod output;
pub mod recovery;

pub use config::{ExperimentKind, ExperimentSpec};
pub use error::{HarnessError, Result};
