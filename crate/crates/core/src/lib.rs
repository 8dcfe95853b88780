//! One-vs-rest sigmoid networks with extreme-value calibrated open set
//! recognition.
//!
//! The pipeline: train small feedforward heads on feature vectors
//! ([`netcore`], [`openset::train_bank`]), fit Weibull models to the score
//! tails ([`distributions`], [`openset::calibrate`]), apply the
//! accept/reject recognition rule ([`openset::recognize`]), and evaluate
//! with openness, open-set F-measure, discretized KL divergence, and the
//! open-space-risk grid estimator ([`eval`]).

pub mod data;
pub mod distributions;
pub mod error;
pub mod eval;
pub mod netcore;
pub mod openset;
pub mod par;

pub use error::{Error, Result};
