//! Knowledge-tracing laboratory: recurrent student models trained by
//! backpropagation through time, classical baselines, a synthetic student
//! simulator, AUC evaluation, influence graphs and curriculum planning.

pub mod baselines;
pub mod curriculum;
pub mod data;
pub mod encoding;
pub mod error;
pub mod evaluation;
pub mod influence;
pub mod models;
pub mod numerics;
pub mod simulator;

pub use error::{Error, Result};
