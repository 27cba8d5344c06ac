use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMethod {
    #[default]
    None,
    MinmaxToUnit,
    Standardize,
}

/// Per-feature affine map `u' = (u − offset) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub method: ScaleMethod,
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    pub fn identity(n_inputs: usize) -> Self {
        Scaler {
            method: ScaleMethod::None,
            offset: vec![0.0; n_inputs],
            scale: vec![1.0; n_inputs],
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.offset.len()
    }

    pub fn transform(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if inputs.ncols() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                context: "scaler inputs",
                expected: self.n_inputs(),
                got: inputs.ncols(),
            });
        }
        if self.method == ScaleMethod::None {
            return Ok(inputs.clone());
        }
        let mut out = inputs.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (o, s) = (self.offset[j], self.scale[j]);
            col.iter_mut().for_each(|v| *v = (*v - o) / s);
        }
        Ok(out)
    }
}

/// Fits per-feature parameters over every step of every sequence.
///
/// A constant feature would get scale 0; it is left untouched (identity)
/// and a warning is logged.
pub fn fit_scaler(dataset: &Dataset, method: ScaleMethod) -> Result<Scaler> {
    let n_u = dataset.n_inputs();
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut scaler = Scaler::identity(n_u);
    scaler.method = method;
    if method == ScaleMethod::None {
        return Ok(scaler);
    }
    for j in 0..n_u {
        let column = || {
            dataset
                .sequences()
                .iter()
                .flat_map(move |s| s.inputs.column(j).iter().copied().collect::<Vec<_>>())
        };
        let (offset, scale) = match method {
            ScaleMethod::MinmaxToUnit => {
                let (lo, hi) = column().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
                (lo, hi - lo)
            }
            ScaleMethod::Standardize => {
                let n = column().count() as f64;
                let mean = column().sum::<f64>() / n;
                let var = column().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                (mean, var.sqrt())
            }
            ScaleMethod::None => unreachable!(),
        };
        if scale > 0.0 && scale.is_finite() {
            scaler.offset[j] = offset;
            scaler.scale[j] = scale;
        } else {
            log::warn!(
                "event=constant_feature feature={} name={} action=identity",
                j,
                dataset
                    .feature_names
                    .get(j)
                    .map(String::as_str)
                    .unwrap_or("?")
            );
        }
    }
    Ok(scaler)
}

pub fn apply_scaler(dataset: &Dataset, scaler: &Scaler) -> Result<Dataset> {
    if scaler.n_inputs() != dataset.n_inputs() {
        return Err(Error::DimensionMismatch {
            context: "scaler inputs",
            expected: dataset.n_inputs(),
            got: scaler.n_inputs(),
        });
    }
    Ok(dataset.map_inputs(|m| scaler.transform(m).expect("dimensions checked")))
}
