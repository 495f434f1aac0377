//! File formats: telemetry recordings, the versioned model container,
//! training reports and run manifests.

pub mod manifest;
pub mod model_file;
pub mod report;
pub mod telemetry;

pub use manifest::{CycleEntry, Manifest};
pub use model_file::{load_model, save_model, ModelBundle, PipelineSettings};
pub use report::{cost_curve_csv, render_train_report};
pub use telemetry::{read_series, write_series, TelemetryFormat};
