//! Estimating how much of a classifier's label information is available from cheap
//! surface cues of the text, measured as a difference of held-out negative
//! log-likelihoods.

pub mod corpus;
pub mod error;
pub mod features;
pub mod knn_entropy;
pub mod model;
pub mod planted;
pub mod seed;
pub mod shortcuts;
pub mod synthetic;
pub mod tsi;

pub use error::{Error, Result};
