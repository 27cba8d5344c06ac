//! Importer for the UCI "Indoor User Movement Prediction from RSS data"
//! archive, driven by an import manifest rather than hard-coded names.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Dataset, Sequence, Target, TaskMode};
use crate::error::{Error, Result};

const N_ANCHORS: usize = 4;

/// Manifest for the archive layout as distributed by UCI.
pub const UCI_MOVEMENT_MANIFEST: &str = include_str!("../../data/uci_movement_manifest.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportManifest {
    /// Glob, relative to the archive root, matching one CSV per sequence.
    /// The sequence id is the last run of digits in the file stem.
    pub sequence_glob: String,
    pub target_file: String,
    pub target_column_map: TargetColumns,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_filter: Option<GroupFilter>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetColumns {
    pub sequence_id: usize,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupFilter {
    pub file: String,
    pub sequence_id_column: usize,
    pub group_column: usize,
    pub groups: Vec<String>,
}

impl ImportManifest {
    pub fn uci_movement() -> Self {
        serde_json::from_str(UCI_MOVEMENT_MANIFEST).expect("bundled manifest is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Data rows of a comma-separated file: blank lines and `#` comment
/// headers skipped, fields trimmed. Yields `(line_number, fields)`.
fn data_rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line.split(',').map(str::trim).collect()))
        }
    })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn trailing_id(path: &Path) -> Option<String> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect();
    if digits.is_empty() {
        return None;
    }
    let id: String = digits.chars().rev().collect();
    Some(normalize_id(&id))
}

fn normalize_id(raw: &str) -> String {
    match raw.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v >= 0.0 => format!("{}", v as u64),
        _ => raw.to_string(),
    }
}

fn field<'a>(path: &Path, line: usize, fields: &[&'a str], column: usize) -> Result<&'a str> {
    fields.get(column).copied().ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line,
        column: column + 1,
        message: format!("missing column {column}"),
    })
}

pub fn import_uci_movement(dir: impl AsRef<Path>, manifest: &ImportManifest) -> Result<Dataset> {
    let dir = dir.as_ref();

    let target_path = dir.join(&manifest.target_file);
    let target_text = read(&target_path)?;
    let mut labels = BTreeMap::new();
    for (line, fields) in data_rows(&target_text) {
        let id = normalize_id(field(
            &target_path,
            line,
            &fields,
            manifest.target_column_map.sequence_id,
        )?);
        let raw = field(
            &target_path,
            line,
            &fields,
            manifest.target_column_map.label,
        )?;
        let label = match raw.parse::<f64>() {
            Ok(v) if v == 1.0 || v == -1.0 => v,
            _ => {
                return Err(Error::LabelOutOfDomain {
                    id,
                    label: raw.to_string(),
                })
            }
        };
        labels.insert(id, label);
    }

    let mut provenance = BTreeMap::new();
    provenance.insert("source".into(), "uci_indoor_user_movement".into());
    let allowed: Option<HashSet<String>> = match &manifest.group_filter {
        None => None,
        Some(filter) => {
            let path = dir.join(&filter.file);
            if path.exists() {
                let text = read(&path)?;
                let wanted: HashSet<String> =
                    filter.groups.iter().map(|g| normalize_id(g)).collect();
                let mut keep = HashSet::new();
                for (line, fields) in data_rows(&text) {
                    let id = normalize_id(field(&path, line, &fields, filter.sequence_id_column)?);
                    let group = normalize_id(field(&path, line, &fields, filter.group_column)?);
                    if wanted.contains(&group) {
                        keep.insert(id);
                    }
                }
                provenance.insert("group_filter".into(), filter.groups.join(";"));
                Some(keep)
            } else {
                log::warn!(
                    "event=group_metadata_missing file={} action=use_all_sequences",
                    path.display()
                );
                provenance.insert("group_filter".into(), "absent:all_sequences".into());
                None
            }
        }
    };

    let pattern = dir.join(&manifest.sequence_glob);
    let pattern = pattern.to_string_lossy();
    let mut files: Vec<(u64, String, PathBuf)> = Vec::new();
    for entry in
        glob::glob(&pattern).map_err(|e| Error::InvalidConfig(format!("bad sequence_glob: {e}")))?
    {
        let path = entry.map_err(|e| {
            let p = e.path().to_path_buf();
            Error::io(p, e.into())
        })?;
        let id = trailing_id(&path).ok_or_else(|| {
            Error::SchemaMismatch(format!("no sequence id in file name {}", path.display()))
        })?;
        if allowed.as_ref().is_some_and(|a| !a.contains(&id)) {
            continue;
        }
        let order = id.parse::<u64>().unwrap_or(u64::MAX);
        files.push((order, id, path));
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut sequences = Vec::with_capacity(files.len());
    for (_, id, path) in files {
        let text = read(&path)?;
        let mut values = Vec::new();
        let mut rows = 0;
        for (line, fields) in data_rows(&text) {
            if fields.len() != N_ANCHORS {
                return Err(Error::InconsistentFeatureCount {
                    path: path.clone(),
                    row: line,
                    expected: N_ANCHORS,
                    got: fields.len(),
                });
            }
            for (c, f) in fields.iter().enumerate() {
                let v: f64 = f.parse().map_err(|_| Error::Parse {
                    path: path.clone(),
                    line,
                    column: c + 1,
                    message: format!("bad RSS value {f:?}"),
                })?;
                values.push(v);
            }
            rows += 1;
        }
        if rows == 0 {
            return Err(Error::SchemaMismatch(format!(
                "{} has no rows",
                path.display()
            )));
        }
        let label = *labels
            .get(&id)
            .ok_or_else(|| Error::MissingTargetEntry(id.clone()))?;
        sequences.push(Sequence {
            id,
            inputs: DMatrix::from_row_slice(rows, N_ANCHORS, &values),
            target: Target::Final(DVector::from_element(1, label)),
        });
    }
    log::info!("event=uci_import sequences={}", sequences.len());
    let names = (1..=N_ANCHORS).map(|i| format!("rss_anchor{i}")).collect();
    let mut ds =
        Dataset::new(sequences, TaskMode::LastStepClassification)?.with_feature_names(names)?;
    ds.provenance = provenance;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) {
        let p = dir.join(name);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, text).unwrap();
    }

    fn fixture(dir: &Path) {
        write(dir, "dataset/MovementAAL_RSS_1.csv", "#RSS_anchor1, RSS_anchor2, RSS_anchor3, RSS_anchor4\n-0.9,-0.48,0.28,0.3\n-0.5,-0.2,0.1,0.0\n");
        write(
            dir,
            "dataset/MovementAAL_RSS_2.csv",
            "#RSS_anchor1, RSS_anchor2, RSS_anchor3, RSS_anchor4\n10,20,30,40\n",
        );
        write(
            dir,
            "dataset/MovementAAL_RSS_3.csv",
            "#RSS_anchor1, RSS_anchor2, RSS_anchor3, RSS_anchor4\n1,2,3,4\n5,6,7,8\n9,10,11,12\n",
        );
        write(
            dir,
            "dataset/MovementAAL_target.csv",
            "#sequence_ID, class_label\n1, 1\n2, -1\n3, 1\n",
        );
        write(
            dir,
            "groups/MovementAAL_DatasetGroup.csv",
            "#sequence_ID, dataset_ID\n1, 1\n2, 2\n3, 3\n",
        );
    }

    #[test]
    fn imports_with_group_filter() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        let d = import_uci_movement(dir.path(), &ImportManifest::uci_movement()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.n_inputs(), 4);
        assert_eq!(d.task_mode(), TaskMode::LastStepClassification);
        let ids: Vec<&str> = d.sequences().iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["1", "2"]);
        assert_eq!(d.sequences()[0].len(), 2);
        assert_eq!(
            d.sequences()[1].target,
            Target::Final(DVector::from_element(1, -1.0))
        );
    }

    #[test]
    fn missing_group_file_uses_everything() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        fs::remove_file(dir.path().join("groups/MovementAAL_DatasetGroup.csv")).unwrap();
        let d = import_uci_movement(dir.path(), &ImportManifest::uci_movement()).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.provenance["group_filter"], "absent:all_sequences");
    }

    #[test]
    fn three_column_row_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        write(dir.path(), "dataset/MovementAAL_RSS_2.csv", "#h\n1,2,3\n");
        assert!(matches!(
            import_uci_movement(dir.path(), &ImportManifest::uci_movement()),
            Err(Error::InconsistentFeatureCount {
                expected: 4,
                got: 3,
                ..
            })
        ));
    }

    #[test]
    fn bad_label_and_missing_target() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        write(
            dir.path(),
            "dataset/MovementAAL_target.csv",
            "#h\n1, 1\n2, 0\n3, 1\n",
        );
        assert!(matches!(
            import_uci_movement(dir.path(), &ImportManifest::uci_movement()),
            Err(Error::LabelOutOfDomain { .. })
        ));
        write(
            dir.path(),
            "dataset/MovementAAL_target.csv",
            "#h\n1, 1\n3, 1\n",
        );
        assert!(matches!(
            import_uci_movement(dir.path(), &ImportManifest::uci_movement()),
            Err(Error::MissingTargetEntry(id)) if id == "2"
        ));
    }
}
