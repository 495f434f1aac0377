//! Run configuration: a TOML file with flat dotted keys, every hyperparameter
//! named with its stock default. Command-line flags override file values.
//!
//! ```toml
//! seed = 1
//! train.batch_size = 128
//! train.initial_learning_rate = 1e-4
//! train.lr_decay = 0.97
//! train.max_epochs = 200
//! train.early_stop_patience = 10
//! window.sizes = [9, 15, 25]
//! window.decimation = 10
//! window.train_stride = 1
//! window.eval_stride = 1
//! model.conv_filters = 10
//! model.conv_kernel = 5
//! model.rnn_units = 32
//! model.dense_units = 32
//! model.dropout = 0.2
//! loss.class_weights = [1.0, 4.0, 7.0]
//! loss.l2_lambda = 1e-3
//! pipeline.smooth_tau_s = 0.2
//! split.ratio = 0.8
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use ycycle_core::loss::{LossConfig, RegularizedLayers};
use ycycle_core::nn::ModelConfig;
use ycycle_core::pipeline::{LabelMode, FRAME_DT};
use ycycle_core::train::{OptimizerKind, TrainConfig};
use ycycle_core::{Error, Result};

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub generate: GenerateSection,
    pub train: TrainSection,
    pub window: WindowSection,
    pub model: ModelSection,
    pub loss: LossSection,
    pub pipeline: PipelineSection,
    pub split: SplitSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: default_seed(),
            generate: GenerateSection::default(),
            train: TrainSection::default(),
            window: WindowSection::default(),
            model: ModelSection::default(),
            loss: LossSection::default(),
            pipeline: PipelineSection::default(),
            split: SplitSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateSection {
    pub cycles: usize,
}

impl Default for GenerateSection {
    fn default() -> Self {
        GenerateSection { cycles: 119 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub batch_size: usize,
    pub initial_learning_rate: f64,
    pub lr_decay: f64,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub optimizer: String,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            batch_size: 128,
            initial_learning_rate: 1e-4,
            lr_decay: 0.97,
            max_epochs: 200,
            early_stop_patience: 10,
            optimizer: "adam".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSection {
    pub sizes: Vec<usize>,
    pub decimation: usize,
    pub train_stride: usize,
    pub eval_stride: usize,
    pub label_mode: String,
}

impl Default for WindowSection {
    fn default() -> Self {
        WindowSection {
            sizes: vec![9, 15, 25],
            decimation: 10,
            train_stride: 1,
            eval_stride: 1,
            label_mode: "final".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub conv_filters: usize,
    pub conv_kernel: usize,
    pub dense_units: usize,
    pub rnn_units: usize,
    pub dropout: f64,
    pub forget_bias: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            conv_filters: 10,
            conv_kernel: 5,
            dense_units: 32,
            rnn_units: 32,
            dropout: 0.2,
            forget_bias: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LossSection {
    pub class_weights: Vec<f64>,
    pub l2_lambda: f64,
    pub regularized: String,
}

impl Default for LossSection {
    fn default() -> Self {
        LossSection {
            class_weights: vec![1.0, 4.0, 7.0],
            l2_lambda: 1e-3,
            regularized: "head_only".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineSection {
    pub smooth_tau_s: f64,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection { smooth_tau_s: 0.2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSection {
    pub ratio: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection { ratio: 0.8 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        toml::from_str(&content).map_err(|e| Error::Config(format!("config parse: {e}")))
    }

    pub fn smooth_alpha(&self) -> f64 {
        FRAME_DT / (self.pipeline.smooth_tau_s + FRAME_DT)
    }

    pub fn label_mode(&self) -> Result<LabelMode> {
        match self.window.label_mode.as_str() {
            "final" => Ok(LabelMode::Final),
            "center" => Ok(LabelMode::Center),
            other => Err(Error::Config(format!("unknown label mode '{other}'"))),
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            input_channels: 5,
            class_count: 3,
            conv_filters: self.model.conv_filters,
            conv_kernel: self.model.conv_kernel,
            reduce_units: [self.model.dense_units, self.model.dense_units],
            rnn_units: self.model.rnn_units,
            head_units: self.model.dense_units,
            dropout: self.model.dropout,
            forget_bias: self.model.forget_bias,
        }
    }

    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let optimizer = match self.train.optimizer.as_str() {
            "adam" => OptimizerKind::default(),
            "sgd" => OptimizerKind::Sgd,
            other => return Err(Error::Config(format!("unknown optimizer '{other}'"))),
        };
        Ok(TrainConfig {
            batch_size: self.train.batch_size,
            initial_learning_rate: self.train.initial_learning_rate,
            lr_decay: self.train.lr_decay,
            max_epochs: self.train.max_epochs,
            early_stop_patience: self.train.early_stop_patience,
            seed,
            optimizer,
        })
    }

    pub fn loss_config(&self) -> Result<LossConfig> {
        let regularized = match self.loss.regularized.as_str() {
            "head_only" => RegularizedLayers::HeadOnly,
            "all_dense" => RegularizedLayers::AllDense,
            other => return Err(Error::Config(format!("unknown regularizer mode '{other}'"))),
        };
        let cfg = LossConfig {
            class_weights: self.loss.class_weights.clone(),
            l2_lambda: self.loss.l2_lambda,
            regularized,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
