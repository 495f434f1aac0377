//! Versioned model container.
//!
//! Byte layout (all integers little-endian):
//!
//! ```text
//! offset  size  content
//! 0       8     magic "YCDMDL01"
//! 8       4     u32 header length H
//! 12      H     JSON header: format version, architecture, layer specs,
//!               class/channel counts, pipeline settings (smoothing alpha,
//!               window config, normalization statistics), master seed,
//!               parameter count
//! 12+H    8*P   P f64 parameter values, little-endian, in flat order
//!               (layer by layer; per layer weight matrices row-major then
//!               biases; LSTM gates ordered candidate/update/forget/output;
//!               bidirectional forward direction before backward)
//! ```
//!
//! The stored pipeline settings make a saved model self-contained for
//! serving: inference applies exactly the smoothing, normalization and
//! windowing that training used, so there is no train/serve skew.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Architecture, CrdnnModel, LayerSpec};
use crate::pipeline::{ChannelStats, WindowConfig};

pub const MODEL_MAGIC: &[u8; 8] = b"YCDMDL01";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Preprocessing contract a model was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSettings {
    pub smooth_alpha: f64,
    pub window: WindowConfig,
    pub stats: ChannelStats,
}

/// A model plus everything needed to serve it.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub model: CrdnnModel,
    pub architecture: Architecture,
    pub pipeline: PipelineSettings,
    pub master_seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    architecture: Architecture,
    input_channels: usize,
    class_count: usize,
    specs: Vec<LayerSpec>,
    pipeline: PipelineSettings,
    master_seed: u64,
    parameter_count: usize,
}

pub fn encode_model(bundle: &ModelBundle) -> Result<Vec<u8>> {
    let header = Header {
        format_version: MODEL_FORMAT_VERSION,
        architecture: bundle.architecture,
        input_channels: bundle.model.input_channels(),
        class_count: bundle.model.class_count(),
        specs: bundle.model.specs().to_vec(),
        pipeline: bundle.pipeline.clone(),
        master_seed: bundle.master_seed,
        parameter_count: bundle.model.count_parameters(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::Format(format!("header encode: {e}")))?;
    let params = bundle.model.params_flat();
    let mut out = Vec::with_capacity(12 + header_json.len() + params.len() * 8);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    for v in params {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelBundle> {
    if bytes.len() < 12 || &bytes[..8] != MODEL_MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let mut lenbuf = [0u8; 4];
    lenbuf.copy_from_slice(&bytes[8..12]);
    let header_len = u32::from_le_bytes(lenbuf) as usize;
    if bytes.len() < 12 + header_len {
        return Err(Error::Format("truncated model header".into()));
    }
    let header: Header = serde_json::from_slice(&bytes[12..12 + header_len])
        .map_err(|e| Error::Format(format!("header decode: {e}")))?;
    if header.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "model format version {} unsupported (this build reads {})",
            header.format_version, MODEL_FORMAT_VERSION
        )));
    }

    let blob = &bytes[12 + header_len..];
    if blob.len() != header.parameter_count * 8 {
        return Err(Error::Format(format!(
            "parameter blob holds {} bytes, expected {}",
            blob.len(),
            header.parameter_count * 8
        )));
    }
    let mut params = Vec::with_capacity(header.parameter_count);
    let mut f64buf = [0u8; 8];
    for chunk in blob.chunks_exact(8) {
        f64buf.copy_from_slice(chunk);
        params.push(f64::from_le_bytes(f64buf));
    }

    let mut model =
        CrdnnModel::from_specs(header.specs, header.input_channels, header.class_count)?;
    if model.count_parameters() != header.parameter_count {
        return Err(Error::Format(
            "layer specs disagree with parameter count".into(),
        ));
    }
    model.set_params_flat(&params)?;
    Ok(ModelBundle {
        model,
        architecture: header.architecture,
        pipeline: header.pipeline,
        master_seed: header.master_seed,
    })
}

pub fn save_model(path: &Path, bundle: &ModelBundle) -> Result<()> {
    fs::write(path, encode_model(bundle)?).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_model(path: &Path) -> Result<ModelBundle> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    decode_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::nn::ModelConfig;
    use crate::pipeline::LabelMode;

    fn sample_bundle() -> ModelBundle {
        let cfg = ModelConfig {
            conv_filters: 4,
            conv_kernel: 3,
            reduce_units: [6, 6],
            rnn_units: 5,
            head_units: 6,
            ..ModelConfig::default()
        };
        let model = CrdnnModel::new(Architecture::TwoLstm, &cfg, 12).unwrap();
        ModelBundle {
            model,
            architecture: Architecture::TwoLstm,
            pipeline: PipelineSettings {
                smooth_alpha: crate::pipeline::DEFAULT_SMOOTH_ALPHA,
                window: WindowConfig {
                    window_size: 9,
                    decimation: 10,
                    stride: 25,
                    label_mode: LabelMode::Final,
                },
                stats: ChannelStats {
                    mean: [1.0, 2.0, 0.0, 3.0, 4.0],
                    std: [0.5, 1.5, 1.0, 2.5, 3.5],
                    degenerate_channels: vec![],
                },
            },
            master_seed: 42,
        }
    }

    #[test]
    fn roundtrip_preserves_parameters_and_predictions() {
        let bundle = sample_bundle();
        let bytes = encode_model(&bundle).unwrap();
        let loaded = decode_model(&bytes).unwrap();
        assert_eq!(bundle.model.params_flat(), loaded.model.params_flat());
        assert_eq!(bundle.pipeline, loaded.pipeline);
        assert_eq!(bundle.master_seed, loaded.master_seed);

        let mut window = Matrix::zeros(9, 5);
        for (i, v) in window.data_mut().iter_mut().enumerate() {
            *v = (i as f64 * 0.31).sin();
        }
        let a = bundle.model.forward(&window).unwrap();
        let b = loaded.model.forward(&window).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn encoding_is_deterministic() {
        let bundle = sample_bundle();
        assert_eq!(encode_model(&bundle).unwrap(), encode_model(&bundle).unwrap());
    }

    #[test]
    fn bad_magic_and_version_rejected() {
        let bundle = sample_bundle();
        let mut bytes = encode_model(&bundle).unwrap();
        assert!(matches!(
            decode_model(b"XXXXXXXXrest"),
            Err(Error::Format(_))
        ));
        // corrupt the version inside the JSON header
        let json_start = 12;
        let s = String::from_utf8(bytes[json_start..].to_vec()).unwrap_or_default();
        if let Some(pos) = s.find("\"format_version\":1") {
            let abs = json_start + pos + "\"format_version\":".len();
            bytes[abs] = b'9';
            assert!(matches!(decode_model(&bytes), Err(Error::Format(_))));
        }
    }

    #[test]
    fn truncated_blob_rejected() {
        let bundle = sample_bundle();
        let bytes = encode_model(&bundle).unwrap();
        assert!(matches!(
            decode_model(&bytes[..bytes.len() - 9]),
            Err(Error::Format(_))
        ));
    }
}
