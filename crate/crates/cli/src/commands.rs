use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use dropin_core::data::{
    apply_scaler, fit_scaler, gen_synthetic_redundant, holdout_split, import_uci_movement,
    load_canonical, read_sequence_csv, save_canonical, ImportManifest, SynthParams,
};
use dropin_core::dropin::MonitorSource;
use dropin_core::model_select::{AblationSpec, HyperConfig, SearchOptions};
use dropin_core::{
    ablation_curve, evaluate as score, grid_search, load_model, refit_and_test, save_model,
    AblationReport, Dataset, Error, SeedSet, TaskMode, Trainer,
};
use serde::Serialize;

use crate::config::{DatasetSpec, ExperimentConfig, SplitSection};
use crate::error::CliResult;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(io_err(path))?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))?;
    Ok(())
}

fn load_dataset(spec: &DatasetSpec) -> CliResult<Dataset> {
    Ok(match spec {
        DatasetSpec::Canonical(dir) => load_canonical(dir)?,
        DatasetSpec::Synthetic(p) => gen_synthetic_redundant(p)?,
        DatasetSpec::Uci(dir) => import_uci_movement(dir, &ImportManifest::uci_movement())?,
    })
}

fn split(ds: Dataset, s: &SplitSection) -> CliResult<(Dataset, Option<Dataset>)> {
    if s.test_fraction == 0.0 {
        return Ok((ds, None));
    }
    let (train, test) = holdout_split(&ds, s.test_fraction, s.seed)?;
    Ok((train, Some(test)))
}

/// Writes the raw (unscaled) splits so later `evaluate` runs see the
/// same sequences the model was trained and tested on.
fn save_splits(out: &Path, train: &Dataset, test: Option<&Dataset>) -> CliResult<()> {
    save_canonical(train, out.join("train_split"))?;
    if let Some(test) = test {
        save_canonical(test, out.join("test_split"))?;
    }
    Ok(())
}

pub fn import_uci(dir: &Path, manifest: Option<&Path>, out: &Path) -> CliResult<()> {
    let manifest = match manifest {
        Some(p) => ImportManifest::load(p)?,
        None => ImportManifest::uci_movement(),
    };
    let ds = import_uci_movement(dir, &manifest)?;
    save_canonical(&ds, out)?;
    log::info!(
        "event=import n_sequences={} n_inputs={} out={}",
        ds.len(),
        ds.n_inputs(),
        out.display()
    );
    Ok(())
}

pub fn synth(params: &SynthParams, out: &Path) -> CliResult<()> {
    let ds = gen_synthetic_redundant(params)?;
    save_canonical(&ds, out)?;
    log::info!(
        "event=synth n_sequences={} n_inputs={} task={} out={}",
        ds.len(),
        ds.n_inputs(),
        ds.task_mode().as_str(),
        out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct TrainReport {
    config: HyperConfig,
    lambda: f64,
    seeds: SeedSet,
    metric: &'static str,
    train_metric: f64,
    test_metric: Option<f64>,
    monitor: MonitorSource,
    epochs_run: usize,
    best_epoch: usize,
    n_train: usize,
    n_test: usize,
    dataset_fingerprint: String,
}

pub fn train(cfg: &ExperimentConfig) -> CliResult<()> {
    let hc = cfg.model.expect("validated");
    let (train, test) = split(load_dataset(&cfg.dataset)?, &cfg.split)?;
    let scaler = fit_scaler(&train, cfg.scaling)?;
    let scaled = apply_scaler(&train, &scaler)?;
    let mut rc = cfg.reservoir.template(train.n_inputs());
    rc.n_reservoir = hc.n_reservoir;
    rc.leak_rate = hc.leak_rate;
    rc.seed = cfg.seeds.weights;
    let dc = cfg.training.dropin(hc.retention_p, &cfg.seeds);
    let mut model =
        Trainer::new(rc, dc, hc.delta, cfg.lambda).fit(&scaled, &scaled.empty_like())?;
    model.scaler = Some(scaler);
    let test_metric = test.as_ref().map(|t| score(&model, t, &[])).transpose()?;

    let out = &cfg.output_dir;
    create_dir(out)?;
    save_model(&model, out.join("model.json"))?;
    save_splits(out, &train, test.as_ref())?;
    let report = TrainReport {
        config: hc,
        lambda: cfg.lambda,
        seeds: model.meta.seeds,
        metric: model.metric_kind().as_str(),
        train_metric: model.meta.train_metric,
        test_metric,
        monitor: model.meta.monitor,
        epochs_run: model.meta.epochs_run,
        best_epoch: model.meta.best_epoch,
        n_train: train.len(),
        n_test: test.as_ref().map_or(0, Dataset::len),
        dataset_fingerprint: model.meta.dataset_fingerprint.clone(),
    };
    write_json(&out.join("train_report.json"), &report)?;
    log::info!(
        "event=train_done metric={} train_metric={} test_metric={} epochs_run={} out={}",
        report.metric,
        report.train_metric,
        test_metric.map_or("none".into(), |v| v.to_string()),
        report.epochs_run,
        out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct GridSearchReport {
    selected: HyperConfig,
    metric: &'static str,
    folds: usize,
    n_topologies: usize,
    n_configs: usize,
    cv_train_mean: f64,
    cv_train_std: f64,
    cv_val_mean: f64,
    cv_val_std: f64,
    refit_seed: u64,
    train_metric: f64,
    test_metric: f64,
    n_train: usize,
    n_test: usize,
    ablation: Option<Vec<LevelSummary>>,
}

#[derive(Debug, Serialize)]
struct LevelSummary {
    k: usize,
    mean: f64,
    std: f64,
    n_subsets: usize,
}

fn level_summaries(r: &AblationReport) -> Vec<LevelSummary> {
    r.levels
        .iter()
        .map(|l| LevelSummary {
            k: l.k,
            mean: l.mean,
            std: l.std,
            n_subsets: l.subsets.len(),
        })
        .collect()
}

fn write_ablation(report: &AblationReport, curve: &Path, summary: &Path) -> CliResult<()> {
    let mut w = create(curve)?;
    report.write_curve_csv(&mut w)?;
    w.flush().map_err(io_err(curve))?;
    let mut w = create(summary)?;
    report.write_summary_csv(&mut w)?;
    w.flush().map_err(io_err(summary))?;
    Ok(())
}

pub fn gridsearch(cfg: &ExperimentConfig, jobs: Option<usize>) -> CliResult<()> {
    let grid = cfg.grid();
    let (train, test) = split(load_dataset(&cfg.dataset)?, &cfg.split)?;
    let test = test.expect("validated: gridsearch needs a test split");
    let scaler = fit_scaler(&train, cfg.scaling)?;
    let train_s = apply_scaler(&train, &scaler)?;
    let test_s = apply_scaler(&test, &scaler)?;

    let mut opts = SearchOptions::new(train.n_inputs(), cfg.seeds.weights);
    opts.folds = cfg.cv.folds;
    opts.n_topologies = cfg.cv.n_topologies;
    opts.jobs = jobs;
    opts.reservoir = cfg.reservoir.template(train.n_inputs());
    opts.dropin = cfg.training.dropin(1.0, &cfg.seeds);
    let outcome = grid_search(&train_s, &grid, &opts)?;

    let spec = cfg.ablation.as_ref().map(|a| AblationSpec {
        k_max: a.k_max,
        ablatable: a
            .ablatable
            .clone()
            .unwrap_or_else(|| (0..train.n_inputs()).collect()),
    });
    let fin = refit_and_test(
        &outcome.best,
        &train_s,
        &test_s,
        grid.lambda,
        &opts,
        spec.as_ref(),
    )?;
    let mut model = fin.model;
    model.scaler = Some(scaler);

    let out = &cfg.output_dir;
    create_dir(out)?;
    let report_path = out.join("gridsearch_report.csv");
    let mut w = create(&report_path)?;
    outcome.write_report_csv(&mut w)?;
    w.flush().map_err(io_err(&report_path))?;
    save_model(&model, out.join("model.json"))?;
    save_splits(out, &train, Some(&test))?;
    if let Some(ab) = &fin.ablation {
        write_ablation(
            ab,
            &out.join("ablation_curve.csv"),
            &out.join("ablation_summary.csv"),
        )?;
    }
    let best = outcome.best_result();
    let report = GridSearchReport {
        selected: fin.config,
        metric: fin.metric.as_str(),
        folds: outcome.folds,
        n_topologies: outcome.n_topologies,
        n_configs: outcome.results.len(),
        cv_train_mean: best.train_mean,
        cv_train_std: best.train_std,
        cv_val_mean: best.val_mean,
        cv_val_std: best.val_std,
        refit_seed: fin.topology_seed,
        train_metric: fin.train_metric,
        test_metric: fin.test_metric,
        n_train: train.len(),
        n_test: test.len(),
        ablation: fin.ablation.as_ref().map(level_summaries),
    };
    write_json(&out.join("final_report.json"), &report)?;
    log::info!(
        "event=gridsearch_done n_reservoir={} leak_rate={} delta={} p={} test_metric={} out={}",
        fin.config.n_reservoir,
        fin.config.leak_rate,
        fin.config.delta,
        fin.config.retention_p,
        fin.test_metric,
        out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalSummary<'a> {
    metric: &'static str,
    value: f64,
    missing: &'a [usize],
    n_sequences: usize,
}

fn evaluate_summary(model: &Path, data: &Path, missing: &[usize]) -> CliResult<String> {
    let model = load_model(model)?;
    let ds = load_canonical(data)?;
    let value = score(&model, &ds, missing)?;
    let summary = EvalSummary {
        metric: model.metric_kind().as_str(),
        value,
        missing,
        n_sequences: ds.len(),
    };
    Ok(serde_json::to_string(&summary).map_err(Error::from)?)
}

pub fn evaluate(model: &Path, data: &Path, missing: &[usize]) -> CliResult<()> {
    println!("{}", evaluate_summary(model, data, missing)?);
    Ok(())
}

pub fn ablate(
    model: &Path,
    data: &Path,
    k_max: usize,
    ablatable: Option<&[usize]>,
    out: &Path,
) -> CliResult<()> {
    let model = load_model(model)?;
    let ds = load_canonical(data)?;
    let ablatable: Vec<usize> = match ablatable {
        Some(v) => v.to_vec(),
        None => (0..model.n_inputs()).collect(),
    };
    let report = ablation_curve(&model, &ds, k_max, &ablatable)?;
    create_dir(out)?;
    write_ablation(&report, &out.join("curve.csv"), &out.join("summary.csv"))?;
    for l in &report.levels {
        log::info!(
            "event=ablation k={} mean={} std={} n_subsets={}",
            l.k,
            l.mean,
            l.std,
            l.subsets.len()
        );
    }
    Ok(())
}

/// Number of target columns implied by the header of a sequence file.
fn target_columns(path: &Path, n_inputs: usize) -> CliResult<usize> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let header = text.lines().next().unwrap_or("");
    let n_cols = header.split(',').count();
    if n_cols < 1 + n_inputs {
        return Err(Error::DimensionMismatch {
            context: "sequence file columns",
            expected: 1 + n_inputs,
            got: n_cols,
        }
        .into());
    }
    Ok(n_cols - 1 - n_inputs)
}

pub fn predict(model: &Path, input: &Path, missing: &[usize], out: Option<&Path>) -> CliResult<()> {
    let model = load_model(model)?;
    let n_targets = target_columns(input, model.n_inputs())?;
    let (inputs, _) = read_sequence_csv(input, model.n_inputs(), n_targets)?;
    let preds = model.predict_sequence(&inputs, missing)?;
    let first = match model.task_mode {
        TaskMode::LastStepClassification => inputs.nrows() - 1,
        TaskMode::PerStepRegression => model.washout,
    };
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let dest = out.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf);
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["t".to_string()];
    header.extend((1..=preds.ncols()).map(|j| format!("y_{j}")));
    w.write_record(&header).map_err(Error::from)?;
    for (i, row) in preds.row_iter().enumerate() {
        let mut rec = vec![(first + i).to_string()];
        rec.extend(row.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(Error::from)?;
    }
    w.flush().map_err(io_err(&dest))?;
    Ok(())
}
