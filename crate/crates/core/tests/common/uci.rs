//! Movement-task reproduction run shared by the acceptance suite and its
//! smoke test on a fixture archive.

use std::path::Path;

use dropin_core::data::{holdout_split, import_uci_movement, ImportManifest};
use dropin_core::model_select::{
    refit_and_test, AblationSpec, FinalReport, HyperConfig, SearchOptions,
};
use dropin_core::{Result, DEFAULT_LAMBDA};

pub const SPLIT_SEED: u64 = 1;
pub const RUN_SEED: u64 = 7;

/// Selected configurations: (N_R, a, δ, p).
pub const STANDARD: HyperConfig = HyperConfig {
    n_reservoir: 500,
    leak_rate: 0.1,
    delta: 0.1,
    retention_p: 1.0,
};
pub const DROPIN_08: HyperConfig = HyperConfig {
    n_reservoir: 500,
    leak_rate: 0.2,
    delta: 0.001,
    retention_p: 0.8,
};

pub struct UciRun {
    pub n_sequences: usize,
    pub standard: FinalReport,
    pub dropin: FinalReport,
}

impl UciRun {
    pub fn mean_at(report: &FinalReport, k: usize) -> f64 {
        report.ablation.as_ref().unwrap().level(k).unwrap().mean
    }
}

pub fn run(dir: &Path, configs: (HyperConfig, HyperConfig)) -> Result<UciRun> {
    let ds = import_uci_movement(dir, &ImportManifest::uci_movement())?;
    let (train, test) = holdout_split(&ds, 0.2, SPLIT_SEED)?;
    let opts = SearchOptions::new(ds.n_inputs(), RUN_SEED);
    let spec = AblationSpec {
        k_max: 2,
        ablatable: (0..ds.n_inputs()).collect(),
    };
    let standard = refit_and_test(
        &configs.0,
        &train,
        &test,
        DEFAULT_LAMBDA,
        &opts,
        Some(&spec),
    )?;
    let dropin = refit_and_test(
        &configs.1,
        &train,
        &test,
        DEFAULT_LAMBDA,
        &opts,
        Some(&spec),
    )?;
    Ok(UciRun {
        n_sequences: ds.len(),
        standard,
        dropin,
    })
}
