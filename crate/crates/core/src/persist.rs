//! JSON model files. Floats are written in shortest round-trip form and
//! parsed exactly, so a reloaded model predicts bit-identically.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Scaler, TaskMode};
use crate::dropin::{TrainedModel, TrainingMeta};
use crate::error::{Error, Result};
use crate::readout::Readout;
use crate::reservoir::{Activation, ReservoirConfig, ReservoirWeights};

pub const MODEL_FORMAT: &str = "dropin-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub data: Vec<f64>,
}

impl DenseMatrix {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        DenseMatrix {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }

    fn to_matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::SchemaMismatch(format!(
                "{name}: {} values for a {}x{} matrix",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

/// Compressed sparse rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(values.len());
        }
        SparseMatrix {
            rows: m.nrows(),
            cols: m.ncols(),
            row_ptr,
            col_idx,
            values,
        }
    }

    fn to_matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        let bad = |m: &str| Error::SchemaMismatch(format!("{name}: {m}"));
        if self.row_ptr.len() != self.rows + 1
            || self.row_ptr.first() != Some(&0)
            || self.row_ptr.last() != Some(&self.values.len())
            || self.col_idx.len() != self.values.len()
        {
            return Err(bad("inconsistent sparse layout"));
        }
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
            if lo > hi {
                return Err(bad("row pointers decrease"));
            }
            for k in lo..hi {
                let j = self.col_idx[k];
                if j >= self.cols {
                    return Err(bad("column index out of range"));
                }
                m[(i, j)] = self.values[k];
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub reservoir: ReservoirConfig,
    pub activation: Activation,
    pub rescale_factor: f64,
    pub achieved_rho: f64,
    pub w_in: DenseMatrix,
    pub w_h: SparseMatrix,
    pub w_out: DenseMatrix,
    pub readout_bias: bool,
    pub washout: usize,
    pub task_mode: TaskMode,
    #[serde(default)]
    pub scaler: Option<Scaler>,
    pub meta: TrainingMeta,
}

impl ModelFile {
    pub fn from_model(m: &TrainedModel) -> Self {
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            reservoir: m.reservoir.clone(),
            activation: m.weights.activation(),
            rescale_factor: m.weights.rescale_factor(),
            achieved_rho: m.weights.achieved_rho(),
            w_in: DenseMatrix::from_matrix(m.weights.w_in()),
            w_h: SparseMatrix::from_matrix(m.weights.w_h()),
            w_out: DenseMatrix::from_matrix(&m.readout.w_out),
            readout_bias: m.readout_bias,
            washout: m.washout,
            task_mode: m.task_mode,
            scaler: m.scaler.clone(),
            meta: m.meta.clone(),
        }
    }

    pub fn into_model(self) -> Result<TrainedModel> {
        if self.format != MODEL_FORMAT {
            return Err(Error::SchemaMismatch(format!(
                "not a model file (format {:?})",
                self.format
            )));
        }
        if self.version != MODEL_VERSION {
            return Err(Error::SchemaMismatch(format!(
                "model file version {} unsupported (expected {MODEL_VERSION})",
                self.version
            )));
        }
        let weights = ReservoirWeights::from_parts(
            self.w_in.to_matrix("w_in")?,
            self.w_h.to_matrix("w_h")?,
            self.rescale_factor,
            self.achieved_rho,
            self.activation,
        )?;
        let w_out = self.w_out.to_matrix("w_out")?;
        let n_f = weights.n_reservoir() + usize::from(self.readout_bias);
        if w_out.ncols() != n_f {
            return Err(Error::DimensionMismatch {
                context: "w_out columns",
                expected: n_f,
                got: w_out.ncols(),
            });
        }
        if weights.n_inputs() != self.reservoir.n_inputs
            || weights.n_reservoir() != self.reservoir.n_reservoir
        {
            return Err(Error::SchemaMismatch(
                "weight shapes disagree with the reservoir config".into(),
            ));
        }
        if let Some(s) = &self.scaler {
            if s.n_inputs() != weights.n_inputs() || s.scale.len() != s.offset.len() {
                return Err(Error::SchemaMismatch("scaler width mismatch".into()));
            }
        }
        Ok(TrainedModel {
            reservoir: self.reservoir,
            weights,
            readout: Readout { w_out },
            task_mode: self.task_mode,
            washout: self.washout,
            readout_bias: self.readout_bias,
            scaler: self.scaler,
            meta: self.meta,
        })
    }
}

pub fn model_to_json(model: &TrainedModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelFile::from_model(model))?)
}

pub fn model_from_json(text: &str) -> Result<TrainedModel> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(MODEL_VERSION) => {}
        Some(v) => {
            return Err(Error::SchemaMismatch(format!(
                "model file version {v} unsupported (expected {MODEL_VERSION})"
            )))
        }
        None => return Err(Error::SchemaMismatch("model file has no version".into())),
    }
    let file: ModelFile = serde_json::from_str(text)?;
    file.into_model()
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = model_to_json(model)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{fit_scaler, gen_synthetic_redundant, ScaleMethod, SynthParams};
    use crate::dropin::{train_dropin, DropInConfig};

    fn model() -> (TrainedModel, crate::data::Dataset) {
        let ds = gen_synthetic_redundant(&SynthParams {
            n_sequences: 4,
            seq_len: 20,
            n_channels: 3,
            seed: 2,
            ..SynthParams::default()
        })
        .unwrap();
        let rc = ReservoirConfig::new(3, 15, 0.3).with_seed(6);
        let dc = DropInConfig {
            max_epochs: 2,
            retention_p: 0.5,
            readout_bias: true,
            ..DropInConfig::default()
        };
        let mut m = train_dropin(&ds, &ds.empty_like(), &rc, &dc, 1.0, 0.9999995).unwrap();
        m.scaler = Some(fit_scaler(&ds, ScaleMethod::Standardize).unwrap());
        (m, ds)
    }

    #[test]
    fn round_trip_is_exact() {
        let (m, ds) = model();
        let back = model_from_json(&model_to_json(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        let s = &ds.sequences()[0];
        let a = m.predict_sequence(&s.inputs, &[1]).unwrap();
        let b = back.predict_sequence(&s.inputs, &[1]).unwrap();
        assert!(a
            .iter()
            .zip(b.iter())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn file_round_trip() {
        let (m, _) = model();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        save_model(&m, &p).unwrap();
        assert_eq!(load_model(&p).unwrap(), m);
    }

    #[test]
    fn version_is_checked() {
        let (m, _) = model();
        let mut v: serde_json::Value = serde_json::from_str(&model_to_json(&m).unwrap()).unwrap();
        v["version"] = 99.into();
        assert!(matches!(
            model_from_json(&v.to_string()),
            Err(Error::SchemaMismatch(_))
        ));
        v.as_object_mut().unwrap().remove("version");
        assert!(matches!(
            model_from_json(&v.to_string()),
            Err(Error::SchemaMismatch(_))
        ));
    }

    #[test]
    fn sparse_layout_round_trips() {
        let m = DMatrix::from_row_slice(2, 3, &[0.0, 1.5, 0.0, -2.0, 0.0, 3.0]);
        let s = SparseMatrix::from_matrix(&m);
        assert_eq!(s.row_ptr, vec![0, 1, 3]);
        assert_eq!(s.to_matrix("m").unwrap(), m);
    }
}
