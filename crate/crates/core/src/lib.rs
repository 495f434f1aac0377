//! Working-cycle detection for wheel loaders.
//!
//! The crate turns five-channel 50 Hz telemetry into per-window
//! travel/loading/unloading classifications using a small stack of
//! convolutional, dense and recurrent layers, and quantifies the drivetrain
//! energy that detection unlocks:
//!
//! - [`nn`] — layers, the layered model, hand-derived backprop
//! - [`loss`] — class-weighted two-sided log loss with L2
//! - [`train`] — mini-batch training, early stopping, weight restoration
//! - [`grid`] — the 3 architectures x 3 window sizes comparison experiment
//! - [`metrics`] — confusion matrix, micro-averaged F1, error locations
//! - [`pipeline`] — smoothing, normalization, decimated sliding windows
//! - [`synth`] — parametric generator of labeled Y-cycle telemetry
//! - [`regen`] — regeneration-potential energy model
//! - [`io`] — telemetry, model, report and manifest file formats

pub mod error;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod regen;
pub mod seed;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
