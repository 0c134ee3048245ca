//! Convolutional text models for user-level depression detection and
//! post-level self-harm risk triage, with the control-matched dataset
//! construction pipeline and the evaluation protocol used to score them.

pub mod corpus;
pub mod dataset;
pub mod error;
pub mod gradsuite;
pub mod models;
pub mod nn;
pub mod seed;
pub mod train;

pub use error::{Error, Result};
