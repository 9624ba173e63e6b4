//! File formats, dataset ingestion, evaluation and calibration drivers
//! around the simulation core.

pub mod calibration;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod fixtures;
pub mod formats;

pub use error::{IoError, Result};
pub use sharedspace_core as core;
