//! Layers, the layered detection model, and hand-derived backpropagation.

pub mod activation;
pub mod backward;
pub mod conv;
pub mod dense;
pub mod lstm;
pub mod model;

pub use activation::{relu, softmax};
pub use backward::Gradients;
pub use conv::Conv1d;
pub use dense::Dense;
pub use lstm::{
    bilstm_sequence_forward, LstmCellParams, LstmGrad, LstmState,
};
pub use model::{
    Architecture, CrdnnModel, FlatSegment, Layer, LayerSpec, ModelConfig, Tape, WeightMagnitudes,
};
