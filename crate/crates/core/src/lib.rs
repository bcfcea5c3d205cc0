//! Retention-constrained estimation: algorithms that keep only a small,
//! recent subsample of a data stream and still track the population parameter.

pub mod distributions;
pub mod error;
pub mod harness;
pub mod mean_estimation;
pub mod recency;
pub mod regression;
pub mod rng;
pub mod sgd;
pub mod subset_sum;
pub mod types;

pub use distributions::{DesignSpec, DistributionSpec, Sampler};
pub use error::{Error, Result};
pub use recency::{ComplianceReport, RecencyMode, Transcript};
pub use rng::{seeded_rng, SimRng};
pub use subset_sum::{Norm, SubsetChoice};
pub use types::{DataItem, Engine, EtaSchedule, RunConfig, RunResult, SampleState, Segment};
