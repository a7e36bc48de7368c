//! Detection of jolts (sustained superexponential growth) in capability
//! time series.
//!
//! The pipeline runs from synthetic generators ([`growth`]) through
//! smoothing and derivative estimation ([`estimation`]) to pointwise jolt
//! metrics ([`metrics`]) and a hybrid detector with permutation-test
//! significance ([`detector`]). [`montecarlo`] validates the detector on
//! labelled synthetic trajectories.

pub mod detector;
pub mod error;
pub mod estimation;
pub mod growth;
pub mod metrics;
pub mod montecarlo;
pub mod rng;
pub mod series;

pub use error::{Error, Result};
pub use series::{Positivity, TimeSeries};
