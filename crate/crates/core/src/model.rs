//! A trained forecaster bundled with everything needed to reuse it: window,
//! gap, scaler and training settings, saved as a JSON document.
//!
//! Floats are written in shortest round-trip form, so loading a saved model
//! reproduces every weight bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Scaler;
use crate::ingest::Pollutant;
use crate::nn::{self, Gate, LstmParams, NnError};
use crate::train::TrainConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("cannot access model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid model JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    SchemaVersion(u32),
    #[error("malformed weights: {0}")]
    Shape(String),
    #[error("recent window has {got} values, model expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastModel {
    pub target: Pollutant,
    pub params: LstmParams,
    pub window: usize,
    pub gap: usize,
    pub scaler: Scaler,
    pub seed: u64,
    pub training: TrainConfig,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Weights {
    #[serde(rename = "W_f")]
    w_f: Vec<Vec<f64>>,
    b_f: Vec<f64>,
    #[serde(rename = "W_i")]
    w_i: Vec<Vec<f64>>,
    b_i: Vec<f64>,
    #[serde(rename = "W_C")]
    w_c: Vec<Vec<f64>>,
    #[serde(rename = "b_C")]
    b_c: Vec<f64>,
    #[serde(rename = "W_o")]
    w_o: Vec<Vec<f64>>,
    b_o: Vec<f64>,
    #[serde(rename = "V")]
    v: Vec<f64>,
    b_y: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    schema_version: u32,
    target: Pollutant,
    hidden: usize,
    input_dim: usize,
    window: usize,
    gap: usize,
    scaler: Scaler,
    weights: Weights,
    seed: u64,
    training: TrainConfig,
}

fn rows(params: &LstmParams, gate: Gate) -> Vec<Vec<f64>> {
    params
        .weights(gate)
        .chunks(params.concat_len())
        .map(<[f64]>::to_vec)
        .collect()
}

fn fill_gate(
    params: &mut LstmParams,
    gate: Gate,
    matrix: &[Vec<f64>],
    bias: &[f64],
) -> Result<(), ModelError> {
    let (h, n) = (params.hidden(), params.concat_len());
    if matrix.len() != h || matrix.iter().any(|r| r.len() != n) {
        return Err(ModelError::Shape(format!("W_{} must be {h} x {n}", gate.label())));
    }
    if bias.len() != h {
        return Err(ModelError::Shape(format!("b_{} must have length {h}", gate.label())));
    }
    for (dst, src) in params.weights_mut(gate).chunks_mut(n).zip(matrix) {
        dst.copy_from_slice(src);
    }
    params.bias_mut(gate).copy_from_slice(bias);
    Ok(())
}

impl ForecastModel {
    fn to_document(&self) -> ModelDocument {
        let p = &self.params;
        ModelDocument {
            schema_version: SCHEMA_VERSION,
            target: self.target,
            hidden: p.hidden(),
            input_dim: p.input_dim(),
            window: self.window,
            gap: self.gap,
            scaler: self.scaler,
            weights: Weights {
                w_f: rows(p, Gate::Forget),
                b_f: p.bias(Gate::Forget).to_vec(),
                w_i: rows(p, Gate::Input),
                b_i: p.bias(Gate::Input).to_vec(),
                w_c: rows(p, Gate::Candidate),
                b_c: p.bias(Gate::Candidate).to_vec(),
                w_o: rows(p, Gate::Output),
                b_o: p.bias(Gate::Output).to_vec(),
                v: p.head_weights().to_vec(),
                b_y: p.head_bias(),
            },
            seed: self.seed,
            training: self.training.clone(),
        }
    }

    fn from_document(doc: ModelDocument) -> Result<Self, ModelError> {
        if doc.schema_version != SCHEMA_VERSION {
            return Err(ModelError::SchemaVersion(doc.schema_version));
        }
        if doc.hidden == 0 || doc.input_dim == 0 {
            return Err(ModelError::Shape("hidden and input_dim must be positive".into()));
        }
        let mut params = LstmParams::zeros(doc.hidden, doc.input_dim);
        let w = &doc.weights;
        fill_gate(&mut params, Gate::Forget, &w.w_f, &w.b_f)?;
        fill_gate(&mut params, Gate::Input, &w.w_i, &w.b_i)?;
        fill_gate(&mut params, Gate::Candidate, &w.w_c, &w.b_c)?;
        fill_gate(&mut params, Gate::Output, &w.w_o, &w.b_o)?;
        if w.v.len() != doc.hidden {
            return Err(ModelError::Shape(format!("V must have length {}", doc.hidden)));
        }
        params.head_weights_mut().copy_from_slice(&w.v);
        params.set_head_bias(w.b_y);
        if !(doc.scaler.max > doc.scaler.min) {
            return Err(ModelError::Shape("scaler max must exceed min".into()));
        }
        Ok(Self {
            target: doc.target,
            params,
            window: doc.window,
            gap: doc.gap,
            scaler: doc.scaler,
            seed: doc.seed,
            training: doc.training,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_document()).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        Self::from_document(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Forecast in scaled units from an already scaled window.
    pub fn predict_scaled(&self, inputs: &[f64]) -> Result<f64, NnError> {
        nn::predict(&self.params, inputs)
    }

    /// Forecast in original units from the most recent `window` readings,
    /// also in original units.
    pub fn forecast(&self, recent: &[f64]) -> Result<f64, ModelError> {
        let expected = self.window * self.params.input_dim();
        if recent.len() != expected {
            return Err(ModelError::LengthMismatch {
                expected,
                got: recent.len(),
            });
        }
        let scaled: Vec<f64> = recent.iter().map(|&v| self.scaler.transform(v)).collect();
        let z = self.predict_scaled(&scaled)?;
        Ok(self.scaler.inverse_transform(z))
    }
}
