//! Closed-form mathematics of a set-prediction 6D pose pipeline: optimal
//! matching of predictions to ground truth, the training losses, depth-based
//! translation refinement, evaluation metrics, and a synthetic scene
//! generator that stands in for the learned networks.

pub mod assignment;
pub mod error;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod pipeline;
pub mod refine;
pub mod simulate;
pub mod types;

pub use error::{Error, Result};
