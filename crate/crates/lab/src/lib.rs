//! Experiment orchestration on top of `sympwalk-core`: trial batches with
//! persisted records, moment tables, histograms and the reproduction of the
//! published moment table.

pub mod appendix;
pub mod batch;
pub mod config;
pub mod error;
pub mod moments;
pub mod plot;
pub mod record;

pub use config::{ExperimentConfig, Method};
pub use error::{LabError, LabResult};
pub use record::{ExperimentRecord, RecordFormat};
