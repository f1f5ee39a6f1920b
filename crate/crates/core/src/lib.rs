//! Multi-output headed ensembles of CNN text classifiers, their baselines,
//! and the session-based evaluation around them.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eup;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod reach;
pub mod report;
pub mod synth;
pub mod tensor;
pub mod text;
pub mod trainer;
pub mod variance;

pub use error::{Error, Result};
