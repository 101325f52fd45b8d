//! Collaborative multimodal log anomaly detection.
//!
//! Pipeline: [`ingest`] raw lines into records and templates, build the
//! semantic and sequence [`modality`] inputs, [`balance`] the training split
//! with Tomek links, fit the collaborative transformer in [`model`] with
//! [`train`], and score it with [`eval`].

pub mod balance;
pub mod config;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod modality;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use par::Exec;
