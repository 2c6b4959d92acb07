//! Record files, configuration, reports and the evaluation pipeline.

pub mod config;
pub mod pipeline;
pub mod record;
pub mod report;

pub use config::{Config, RunConfig};
pub use record::{load_record, save_record, ColumnMap, LoadOptions};
pub use report::RecordReport;
