//! Canonical dataset directory:
//!
//! ```text
//! <dir>/manifest.json       dimensions, task mode, names, sequence index
//! <dir>/seq_00000.csv       t,u_1..u_NU[,y_1..y_NY]
//! ```
//!
//! Final-step targets live in the manifest index, per-step targets in the
//! CSV columns. Numbers are written in shortest round-trip form, so a
//! save/load cycle is bit-exact for finite values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Dataset, Sequence, Target, TaskMode};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT_TAG: &str = "dropin-dataset";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Final,
    PerStep,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub task_mode: TaskMode,
    pub target_kind: TargetKind,
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub feature_names: Vec<String>,
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
    pub sequences: Vec<SequenceEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceEntry {
    pub id: String,
    pub file: String,
    pub length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f64>>,
}

pub fn save_canonical(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let target_kind = match dataset.task_mode() {
        TaskMode::LastStepClassification => TargetKind::Final,
        TaskMode::PerStepRegression => TargetKind::PerStep,
    };
    let mut entries = Vec::with_capacity(dataset.len());
    for (i, seq) in dataset.sequences().iter().enumerate() {
        let file = format!("seq_{i:05}.csv");
        let (per_step, final_target) = match &seq.target {
            Target::PerStep(m) => (Some(m), None),
            Target::Final(v) => (None, Some(v.iter().copied().collect())),
        };
        let csv = sequence_csv(&seq.inputs, per_step);
        let path = dir.join(&file);
        fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
        entries.push(SequenceEntry {
            id: seq.id.clone(),
            file,
            length: seq.len(),
            target: final_target,
        });
    }
    let manifest = DatasetManifest {
        format: FORMAT_TAG.into(),
        version: FORMAT_VERSION,
        task_mode: dataset.task_mode(),
        target_kind,
        n_inputs: dataset.n_inputs(),
        n_outputs: dataset.n_outputs(),
        feature_names: dataset.feature_names.clone(),
        provenance: dataset.provenance.clone(),
        sequences: entries,
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

/// CSV body for one sequence; shared with the prediction front end.
pub fn sequence_csv(inputs: &DMatrix<f64>, per_step: Option<&DMatrix<f64>>) -> String {
    let n_u = inputs.ncols();
    let mut out = String::from("t");
    for j in 1..=n_u {
        let _ = write!(out, ",u_{j}");
    }
    if let Some(y) = per_step {
        for j in 1..=y.ncols() {
            let _ = write!(out, ",y_{j}");
        }
    }
    out.push('\n');
    for t in 0..inputs.nrows() {
        let _ = write!(out, "{t}");
        for j in 0..n_u {
            let _ = write!(out, ",{:?}", inputs[(t, j)]);
        }
        if let Some(y) = per_step {
            for j in 0..y.ncols() {
                let _ = write!(out, ",{:?}", y[(t, j)]);
            }
        }
        out.push('\n');
    }
    out
}

pub fn load_canonical(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    if manifest.format != FORMAT_TAG {
        return Err(Error::SchemaMismatch(format!(
            "unexpected format tag {:?}",
            manifest.format
        )));
    }
    if manifest.version != FORMAT_VERSION {
        return Err(Error::SchemaMismatch(format!(
            "unsupported dataset version {}",
            manifest.version
        )));
    }
    let expected_kind = match manifest.task_mode {
        TaskMode::LastStepClassification => TargetKind::Final,
        TaskMode::PerStepRegression => TargetKind::PerStep,
    };
    if manifest.target_kind != expected_kind {
        return Err(Error::SchemaMismatch(
            "target kind does not match task mode".into(),
        ));
    }
    let mut sequences = Vec::with_capacity(manifest.sequences.len());
    for entry in &manifest.sequences {
        let n_y = match manifest.target_kind {
            TargetKind::PerStep => manifest.n_outputs,
            TargetKind::Final => 0,
        };
        let path = dir.join(&entry.file);
        let (inputs, per_step) = read_sequence_csv(&path, manifest.n_inputs, n_y)?;
        if inputs.nrows() != entry.length {
            return Err(Error::SchemaMismatch(format!(
                "{}: {} rows, manifest says {}",
                path.display(),
                inputs.nrows(),
                entry.length
            )));
        }
        let target = match manifest.target_kind {
            TargetKind::PerStep => Target::PerStep(per_step.expect("per-step columns")),
            TargetKind::Final => {
                let v = entry.target.as_ref().ok_or_else(|| {
                    Error::SchemaMismatch(format!("sequence {} has no final target", entry.id))
                })?;
                Target::Final(DVector::from_column_slice(v))
            }
        };
        sequences.push(Sequence {
            id: entry.id.clone(),
            inputs,
            target,
        });
    }
    let mut ds = Dataset::new(sequences, manifest.task_mode)?;
    ds.provenance = manifest.provenance;
    let ds = ds.with_feature_names(manifest.feature_names)?;
    if ds.n_inputs() != manifest.n_inputs || ds.n_outputs() != manifest.n_outputs {
        return Err(Error::SchemaMismatch(
            "manifest dimensions disagree with sequence files".into(),
        ));
    }
    Ok(ds)
}

/// Reads `t,u_1..u_NU[,y_1..y_NY]`; `n_outputs = 0` means no target columns.
pub fn read_sequence_csv(
    path: &Path,
    n_inputs: usize,
    n_outputs: usize,
) -> Result<(DMatrix<f64>, Option<DMatrix<f64>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sequence_csv(path, &text, n_inputs, n_outputs)
}

fn parse_sequence_csv(
    path: &Path,
    text: &str,
    n_inputs: usize,
    n_outputs: usize,
) -> Result<(DMatrix<f64>, Option<DMatrix<f64>>)> {
    let perr = |line: usize, column: usize, message: String| Error::Parse {
        path: PathBuf::from(path),
        line,
        column,
        message,
    };
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| perr(1, 1, "missing header".into()))?;
    let mut expected = vec!["t".to_string()];
    expected.extend((1..=n_inputs).map(|j| format!("u_{j}")));
    expected.extend((1..=n_outputs).map(|j| format!("y_{j}")));
    let got: Vec<&str> = header.split(',').map(str::trim).collect();
    if got != expected {
        return Err(perr(
            1,
            1,
            format!("header {header:?}, expected {:?}", expected.join(",")),
        ));
    }
    let width = expected.len();
    let mut u_vals = Vec::new();
    let mut y_vals = Vec::new();
    let mut rows = 0;
    for (k, line) in lines.enumerate() {
        let line_no = k + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(perr(
                line_no,
                fields.len().min(width) + 1,
                format!("row has {} columns, expected {width}", fields.len()),
            ));
        }
        let t: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| perr(line_no, 1, format!("bad step index {:?}", fields[0])))?;
        if t != rows {
            return Err(perr(line_no, 1, format!("step index {t}, expected {rows}")));
        }
        for (c, f) in fields.iter().enumerate().skip(1) {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| perr(line_no, c + 1, format!("bad number {f:?}")))?;
            if c <= n_inputs {
                u_vals.push(v);
            } else {
                y_vals.push(v);
            }
        }
        rows += 1;
    }
    let inputs = DMatrix::from_row_slice(rows, n_inputs, &u_vals);
    let targets = (n_outputs > 0).then(|| DMatrix::from_row_slice(rows, n_outputs, &y_vals));
    Ok((inputs, targets))
}
