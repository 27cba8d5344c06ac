//! Sequence datasets: in-memory model, on-disk format, importers,
//! synthetic generation, scaling and splitting.

mod canonical;
mod scaler;
mod split;
mod synth;
mod uci;

use std::collections::{BTreeMap, HashSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use canonical::{
    load_canonical, read_sequence_csv, save_canonical, sequence_csv, DatasetManifest,
    SequenceEntry, TargetKind, MANIFEST_FILE,
};
pub use scaler::{apply_scaler, fit_scaler, ScaleMethod, Scaler};
pub use split::{holdout_split, kfold};
pub use synth::{gen_synthetic_redundant, SynthParams};
pub use uci::{import_uci_movement, GroupFilter, ImportManifest, TargetColumns};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMode {
    /// One ±1 label per sequence, read at the final step.
    LastStepClassification,
    /// A real-valued target at every step.
    PerStepRegression,
}

impl TaskMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskMode::LastStepClassification => "last_step_classification",
            TaskMode::PerStepRegression => "per_step_regression",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// `T × N_Y`.
    PerStep(DMatrix<f64>),
    /// `N_Y`, attached to the last step.
    Final(DVector<f64>),
}

impl Target {
    pub fn n_outputs(&self) -> usize {
        match self {
            Target::PerStep(m) => m.ncols(),
            Target::Final(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub id: String,
    /// `T × N_U`, one row per step.
    pub inputs: DMatrix<f64>,
    pub target: Target,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    sequences: Vec<Sequence>,
    n_inputs: usize,
    n_outputs: usize,
    task_mode: TaskMode,
    pub feature_names: Vec<String>,
    pub provenance: BTreeMap<String, String>,
}

impl Dataset {
    /// Validates homogeneity; feature names default to `u_1..u_N`.
    pub fn new(sequences: Vec<Sequence>, task_mode: TaskMode) -> Result<Self> {
        let first = sequences.first().ok_or(Error::EmptyDataset)?;
        let n_inputs = first.inputs.ncols();
        let n_outputs = first.target.n_outputs();
        let feature_names = (1..=n_inputs).map(|i| format!("u_{i}")).collect();
        let ds = Dataset {
            sequences,
            n_inputs,
            n_outputs,
            task_mode,
            feature_names,
            provenance: BTreeMap::new(),
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        if self.n_inputs == 0 {
            return Err(Error::SchemaMismatch(
                "sequences have no input features".into(),
            ));
        }
        if self.n_outputs == 0 {
            return Err(Error::SchemaMismatch("sequences have no targets".into()));
        }
        let mut ids = HashSet::new();
        for s in &self.sequences {
            if s.is_empty() {
                return Err(Error::SchemaMismatch(format!("sequence {} is empty", s.id)));
            }
            if !ids.insert(s.id.as_str()) {
                return Err(Error::SchemaMismatch(format!(
                    "duplicate sequence id {}",
                    s.id
                )));
            }
            if s.inputs.ncols() != self.n_inputs {
                return Err(Error::SchemaMismatch(format!(
                    "sequence {} has {} inputs, expected {}",
                    s.id,
                    s.inputs.ncols(),
                    self.n_inputs
                )));
            }
            if s.target.n_outputs() != self.n_outputs {
                return Err(Error::SchemaMismatch(format!(
                    "sequence {} has {} outputs, expected {}",
                    s.id,
                    s.target.n_outputs(),
                    self.n_outputs
                )));
            }
            match (&s.target, self.task_mode) {
                (Target::Final(_), TaskMode::LastStepClassification) => {}
                (Target::PerStep(m), TaskMode::PerStepRegression) => {
                    if m.nrows() != s.len() {
                        return Err(Error::SchemaMismatch(format!(
                            "sequence {} has {} target rows for {} steps",
                            s.id,
                            m.nrows(),
                            s.len()
                        )));
                    }
                }
                _ => {
                    return Err(Error::SchemaMismatch(format!(
                        "sequence {} target kind does not match task mode {}",
                        s.id,
                        self.task_mode.as_str()
                    )))
                }
            }
        }
        if self.feature_names.len() != self.n_inputs {
            return Err(Error::SchemaMismatch(format!(
                "{} feature names for {} inputs",
                self.feature_names.len(),
                self.n_inputs
            )));
        }
        Ok(())
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        self.feature_names = names;
        self.validate()?;
        Ok(self)
    }

    pub fn sequences(&self) -> &[Sequence] {
        &self.sequences
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn task_mode(&self) -> TaskMode {
        self.task_mode
    }

    /// Subset by sequence index, keeping metadata. May be empty.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            sequences: indices.iter().map(|&i| self.sequences[i].clone()).collect(),
            n_inputs: self.n_inputs,
            n_outputs: self.n_outputs,
            task_mode: self.task_mode,
            feature_names: self.feature_names.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// An empty dataset with the same schema.
    pub fn empty_like(&self) -> Dataset {
        self.subset(&[])
    }

    pub(crate) fn map_inputs(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Dataset {
        let mut out = self.clone();
        for s in &mut out.sequences {
            s.inputs = f(&s.inputs);
        }
        out
    }

    /// SHA-256 over the numeric content, stable across runs.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.task_mode.as_str().as_bytes());
        h.update((self.n_inputs as u64).to_le_bytes());
        h.update((self.n_outputs as u64).to_le_bytes());
        for s in &self.sequences {
            h.update(s.id.as_bytes());
            h.update((s.len() as u64).to_le_bytes());
            for v in s.inputs.iter() {
                h.update(v.to_bits().to_le_bytes());
            }
            let target = match &s.target {
                Target::PerStep(m) => m.as_slice(),
                Target::Final(v) => v.as_slice(),
            };
            for v in target {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;

    pub fn toy_classification(n: usize, len: usize) -> Dataset {
        let seqs = (0..n)
            .map(|i| Sequence {
                id: format!("s{i}"),
                inputs: DMatrix::from_fn(len, 2, |t, j| ((i + t + j) as f64 * 0.37).sin()),
                target: Target::Final(DVector::from_element(
                    1,
                    if i % 2 == 0 { 1.0 } else { -1.0 },
                )),
            })
            .collect();
        Dataset::new(seqs, TaskMode::LastStepClassification).unwrap()
    }
}
