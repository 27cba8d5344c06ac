//! Experiment configuration: one JSON document, validated before any data
//! is read. Command-line flags override fields after loading.

use std::fs;
use std::path::{Path, PathBuf};

use dropin_core::data::{ScaleMethod, SynthParams};
use dropin_core::model_select::{Grid, HyperConfig};
use dropin_core::reservoir::{Activation, ReservoirConfig};
use dropin_core::{DropInConfig, SeedSet, DEFAULT_LAMBDA};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub scaling: ScaleMethod,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub cv: CvSection,
    /// Single configuration used by `train`.
    #[serde(default)]
    pub model: Option<HyperConfig>,
    /// Search space used by `gridsearch`.
    #[serde(default)]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub reservoir: ReservoirSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub seeds: SeedSet,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub ablation: Option<AblationSection>,
}

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Directory written by `save_canonical`.
    Canonical(PathBuf),
    Synthetic(SynthParams),
    /// Root of the UCI movement archive.
    Uci(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    /// Hold-out test fraction; 0 trains on everything.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            test_fraction: 0.2,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvSection {
    pub folds: Option<usize>,
    pub n_topologies: usize,
}

impl Default for CvSection {
    fn default() -> Self {
        CvSection {
            folds: None,
            n_topologies: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridPreset {
    #[default]
    Fast,
    Full,
}

/// A preset grid with optional per-field replacements.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub preset: GridPreset,
    pub n_reservoir: Option<Vec<usize>>,
    pub leak_rate: Option<Vec<f64>>,
    pub delta: Option<Vec<f64>>,
    pub retention_p: Option<Vec<f64>>,
}

impl GridSection {
    pub fn resolve(&self, lambda: f64) -> Grid {
        let mut g = match self.preset {
            GridPreset::Fast => Grid::fast(),
            GridPreset::Full => Grid::paper_full(),
        };
        if let Some(v) = &self.n_reservoir {
            g.n_reservoir = v.clone();
        }
        if let Some(v) = &self.leak_rate {
            g.leak_rate = v.clone();
        }
        if let Some(v) = &self.delta {
            g.delta = v.clone();
        }
        if let Some(v) = &self.retention_p {
            g.retention_p = v.clone();
        }
        g.lambda = lambda;
        g
    }
}

/// Reservoir settings that are not searched over.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReservoirSection {
    pub connectivity: Option<f64>,
    pub input_scale: Option<f64>,
    pub recurrent_init_bound: Option<f64>,
    pub spectral_target: Option<f64>,
    pub activation: Option<Activation>,
}

impl ReservoirSection {
    pub fn template(&self, n_inputs: usize) -> ReservoirConfig {
        let mut rc = ReservoirConfig::new(n_inputs, 1, 1.0);
        if let Some(v) = self.connectivity {
            rc.connectivity = v;
        }
        if let Some(v) = self.input_scale {
            rc.input_scale = v;
        }
        if let Some(v) = self.recurrent_init_bound {
            rc.recurrent_init_bound = v;
        }
        if let Some(v) = self.spectral_target {
            rc.spectral_target = v;
        }
        if let Some(v) = self.activation {
            rc.activation = v;
        }
        rc
    }
}

/// Training-loop settings; seeds and p come from `seeds` and the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub washout: usize,
    pub readout_bias: bool,
    pub masked_validation: bool,
    pub cache_states: bool,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let d = DropInConfig::default();
        TrainingSection {
            max_epochs: d.max_epochs,
            patience: d.patience,
            validation_fraction: d.validation_fraction,
            washout: d.washout,
            readout_bias: d.readout_bias,
            masked_validation: d.masked_validation,
            cache_states: d.cache_states,
        }
    }
}

impl TrainingSection {
    pub fn dropin(&self, retention_p: f64, seeds: &SeedSet) -> DropInConfig {
        DropInConfig {
            retention_p,
            max_epochs: self.max_epochs,
            patience: self.patience,
            shuffle_seed: seeds.shuffle,
            mask_seed: seeds.mask,
            validation_fraction: self.validation_fraction,
            washout: self.washout,
            readout_bias: self.readout_bias,
            masked_validation: self.masked_validation,
            cache_states: self.cache_states,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationSection {
    pub k_max: usize,
    /// 0-based feature indices; all inputs when absent.
    #[serde(default)]
    pub ablatable: Option<Vec<usize>>,
}

/// Which parts of the config a command needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Train,
    GridSearch,
}

impl ExperimentConfig {
    /// Reads the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        match &mut cfg.dataset {
            DatasetSpec::Canonical(p) | DatasetSpec::Uci(p) => *p = base.join(&*p),
            DatasetSpec::Synthetic(_) => {}
        }
        cfg.output_dir = base.join(&cfg.output_dir);
        Ok(cfg)
    }

    pub fn validate(&self, purpose: Purpose) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(0.0..1.0).contains(&self.split.test_fraction) {
            return bad(format!(
                "split.test_fraction {} outside [0, 1)",
                self.split.test_fraction
            ));
        }
        if self.cv.n_topologies == 0 {
            return bad("cv.n_topologies must be positive".into());
        }
        if matches!(self.cv.folds, Some(k) if k < 2) {
            return bad("cv.folds must be at least 2".into());
        }
        if let DatasetSpec::Synthetic(p) = &self.dataset {
            if p.n_channels < 2 || p.n_sequences == 0 || p.seq_len == 0 {
                return bad("dataset.synthetic needs n_channels >= 2 and positive sizes".into());
            }
        }
        if let Some(a) = &self.ablation {
            if matches!(&a.ablatable, Some(v) if v.is_empty()) {
                return bad("ablation.ablatable must not be empty".into());
            }
        }
        let dropin = self.training.dropin(1.0, &self.seeds);
        dropin.validate()?;
        let mut rc = self.reservoir.template(1);
        rc.n_reservoir = 2;
        rc.validate()?;
        match purpose {
            Purpose::Train => {
                let Some(m) = &self.model else {
                    return bad("`model` is required for train".into());
                };
                Grid::single(*m, self.lambda).validate()?;
            }
            Purpose::GridSearch => {
                if self.split.test_fraction == 0.0 {
                    return bad("gridsearch needs split.test_fraction > 0".into());
                }
                self.grid().validate()?;
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Grid {
        self.grid.clone().unwrap_or_default().resolve(self.lambda)
    }
}
