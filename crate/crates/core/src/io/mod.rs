//! Volume files, NIfTI-1 ingestion, experiment configuration and reports.

pub mod config;
pub mod dataset;
pub mod nifti;
pub mod report;
pub mod volume;

pub use config::{AssdUnit, ExperimentConfig};
pub use nifti::read_nifti1;
pub use report::{emit_report, parse_csv, read_report, write_report, ReportFormat};
pub use volume::{read_labels, read_scalar, read_volume, write_labels, write_scalar, Dtype, Volume, VolumeFileHeader};
