//! Gene network inference with sparse canonical correlation analysis over
//! random gene partitions and subsamples.

pub mod community;
pub mod dataset;
pub mod error;
pub mod evalkit;
pub mod knorm;
pub mod linalg;
pub mod methods;
pub mod netweave;
pub mod pipeline;
pub mod rng;
pub mod scca;
pub mod simgen;

pub use dataset::{ExpressionDataset, FilterThresholds};
pub use error::{Error, Result};
pub use netweave::{EdgeWeightMatrix, WeaveConfig, WeavePlan};
pub use scca::{PenaltyPair, SccaSolution, SolverOptions};
