//! File formats, persistence, reports and parallel training for
//! [`annobias_core`], plus the `annobias` command line.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod experiment;
pub mod format;
pub mod io;
pub mod persist;
pub mod predictions;
pub mod preset;
pub mod profiles;
pub mod report;
pub mod train;

pub use error::{IngestError, IngestResult};
pub use format::{load, Format, LoadOptions, LoadedDataset};
pub use report::Report;
