//! Model checkpoint container.
//!
//! A checkpoint is a UTF-8 JSON document:
//!
//! ```text
//! {
//!   "format": "metrum-checkpoint",
//!   "version": 1,
//!   "seed": u64,
//!   "model_config": {"num_layers", "channels", "depth"},
//!   "crf_params": {"num_layers", "w_del": [..], "w_ins": [..]},
//!   "train_config": {..},
//!   "loss_log": [mean loss per epoch],
//!   "calibration": null | {"offset", "score", "song"},
//!   "tensors": [{"name", "shape", "data"}, ..]
//! }
//! ```
//!
//! Penalties equal to infinity are written as the string `"inf"`. Tensors
//! appear in [`EmissionModel::tensor_layout`] order with row-major data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmissionModel, ModelConfig, Parameters, TrainConfig};
use crate::calibrate::Calibration;
use crate::error::{Error, Result};
use crate::types::CrfParams;

pub const CHECKPOINT_FORMAT: &str = "metrum-checkpoint";
pub const CHECKPOINT_VERSION: u64 = 1;

/// Calibration with the id of the song it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredCalibration {
    pub offset: i64,
    pub score: f64,
    pub song: String,
}

impl StoredCalibration {
    pub fn calibration(&self) -> Calibration {
        Calibration {
            offset: self.offset,
            score: self.score,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: EmissionModel,
    pub crf_params: CrfParams,
    pub train_config: TrainConfig,
    pub loss_log: Vec<f64>,
    pub calibration: Option<StoredCalibration>,
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Document {
    format: String,
    version: u64,
    seed: u64,
    model_config: ModelConfig,
    crf_params: CrfParams,
    train_config: TrainConfig,
    loss_log: Vec<f64>,
    calibration: Option<StoredCalibration>,
    tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let tensors = self
            .model
            .tensor_layout()
            .into_iter()
            .zip(self.model.tensors())
            .map(|((name, shape), data)| TensorRecord {
                name,
                shape,
                data: data.to_vec(),
            })
            .collect();
        let doc = Document {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            seed: self.train_config.seed,
            model_config: *self.model.config(),
            crf_params: self.crf_params.clone(),
            train_config: self.train_config.clone(),
            loss_log: self.loss_log.clone(),
            calibration: self.calibration.clone(),
            tensors,
        };
        serde_json::to_string(&doc).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Checkpoint> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::schema("<document>", e.to_string()))?;
        match value.get("format").and_then(|f| f.as_str()) {
            Some(CHECKPOINT_FORMAT) => {}
            _ => {
                return Err(Error::schema(
                    "format",
                    format!("expected \"{CHECKPOINT_FORMAT}\""),
                ))
            }
        }
        let version = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::schema("version", "missing or not an integer"))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let doc: Document = serde_json::from_value(value)
            .map_err(|e| Error::schema("<document>", e.to_string()))?;

        let p = &doc.crf_params;
        let layers = p.num_layers();
        let crf_params = CrfParams::new(
            (1..=layers).map(|l| p.w_del(l)).collect(),
            (1..=layers).map(|l| p.w_ins(l)).collect(),
        )?;
        if layers != doc.model_config.num_layers {
            return Err(Error::schema(
                "crf_params",
                format!(
                    "{layers} layers but the model has {}",
                    doc.model_config.num_layers
                ),
            ));
        }
        doc.train_config.validate()?;

        let mut model = EmissionModel::zeros(doc.model_config)?;
        let layout = model.tensor_layout();
        if layout.len() != doc.tensors.len() {
            return Err(Error::schema(
                "tensors",
                format!(
                    "expected {} tensors, found {}",
                    layout.len(),
                    doc.tensors.len()
                ),
            ));
        }
        for ((dst, (name, shape)), record) in model
            .tensors_mut()
            .into_iter()
            .zip(layout)
            .zip(&doc.tensors)
        {
            if record.name != name || record.shape != shape || record.data.len() != dst.len() {
                return Err(Error::schema(
                    format!("tensors.{name}"),
                    format!(
                        "expected shape {shape:?}, found `{}` with shape {:?} and {} values",
                        record.name,
                        record.shape,
                        record.data.len()
                    ),
                ));
            }
            dst.copy_from_slice(&record.data);
        }
        Ok(Checkpoint {
            model,
            crf_params,
            train_config: doc.train_config,
            loss_log: doc.loss_log,
            calibration: doc.calibration,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text)
    }
}
