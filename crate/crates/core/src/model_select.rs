//! Hyperparameter search: k-fold cross-validation repeated over several
//! random reservoir topologies, then a refit on the full training set.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{kfold, Dataset, TaskMode};
use crate::dropin::{DropInConfig, TrainedModel, Trainer};
use crate::error::{Error, Result};
use crate::eval::{ablation_curve, evaluate, mean_std, AblationReport, MetricKind};
use crate::readout::DEFAULT_LAMBDA;
use crate::reservoir::{draw_raw_weights, rescale_raw, ReservoirConfig, ReservoirWeights};
use crate::rng::derive_seed;

const TOPOLOGY_TAG: u64 = 0x746f_706f;
const FOLD_TAG: u64 = 0x666f_6c64;
const REFIT_TAG: u64 = 0x7265_6669;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub n_reservoir: Vec<usize>,
    pub leak_rate: Vec<f64>,
    pub delta: Vec<f64>,
    pub retention_p: Vec<f64>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}

impl Grid {
    /// Full grid; `retention_p` defaults to the standard model only.
    pub fn paper_full() -> Self {
        Grid {
            n_reservoir: vec![50, 100, 300, 500],
            leak_rate: vec![0.1, 0.2, 0.3, 0.5, 1.0],
            delta: vec![0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0],
            retention_p: vec![1.0],
            lambda: DEFAULT_LAMBDA,
        }
    }

    /// Reduced grid for quick runs.
    pub fn fast() -> Self {
        Grid {
            n_reservoir: vec![50, 100],
            leak_rate: vec![0.1, 0.5, 1.0],
            delta: vec![0.01, 1.0, 100.0],
            retention_p: vec![1.0],
            lambda: DEFAULT_LAMBDA,
        }
    }

    pub fn single(config: HyperConfig, lambda: f64) -> Self {
        Grid {
            n_reservoir: vec![config.n_reservoir],
            leak_rate: vec![config.leak_rate],
            delta: vec![config.delta],
            retention_p: vec![config.retention_p],
            lambda,
        }
    }

    pub fn with_retention_p(mut self, p: Vec<f64>) -> Self {
        self.retention_p = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("grid: {m}")));
        if self.n_reservoir.is_empty()
            || self.leak_rate.is_empty()
            || self.delta.is_empty()
            || self.retention_p.is_empty()
        {
            return bad("every list must be non-empty");
        }
        if self.n_reservoir.contains(&0) {
            return bad("n_reservoir must be positive");
        }
        if self.leak_rate.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return bad("leak_rate must lie in (0, 1]");
        }
        if self.delta.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return bad("delta must be positive");
        }
        if self.retention_p.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return bad("retention_p must lie in [0, 1]");
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad("lambda must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn configs(&self) -> Vec<HyperConfig> {
        let mut out = Vec::new();
        for &n_reservoir in &self.n_reservoir {
            for &leak_rate in &self.leak_rate {
                for &delta in &self.delta {
                    for &retention_p in &self.retention_p {
                        out.push(HyperConfig {
                            n_reservoir,
                            leak_rate,
                            delta,
                            retention_p,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperConfig {
    pub n_reservoir: usize,
    pub leak_rate: f64,
    pub delta: f64,
    pub retention_p: f64,
}

impl HyperConfig {
    /// Tie-break order: smaller N_R, then smaller δ, leak and p.
    fn tie_key(&self, other: &Self) -> std::cmp::Ordering {
        self.n_reservoir
            .cmp(&other.n_reservoir)
            .then(self.delta.total_cmp(&other.delta))
            .then(self.leak_rate.total_cmp(&other.leak_rate))
            .then(self.retention_p.total_cmp(&other.retention_p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub fold: usize,
    pub topology: usize,
    pub train_metric: Option<f64>,
    pub val_metric: Option<f64>,
    pub error: Option<String>,
}

impl Trial {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub config: HyperConfig,
    pub trials: Vec<Trial>,
    pub train_mean: f64,
    pub train_std: f64,
    pub val_mean: f64,
    pub val_std: f64,
    pub n_ok: usize,
}

impl TrialResult {
    fn from_trials(config: HyperConfig, trials: Vec<Trial>) -> Self {
        let train: Vec<f64> = trials.iter().filter_map(|t| t.train_metric).collect();
        let val: Vec<f64> = trials.iter().filter_map(|t| t.val_metric).collect();
        let (train_mean, train_std) = stats(&train);
        let (val_mean, val_std) = stats(&val);
        TrialResult {
            config,
            n_ok: val.len(),
            trials,
            train_mean,
            train_std,
            val_mean,
            val_std,
        }
    }

    pub fn failed(&self) -> bool {
        self.n_ok == 0
    }
}

fn stats(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        mean_std(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Cross-validation folds; `None` picks 5 for classification, 3 for regression.
    pub folds: Option<usize>,
    pub n_topologies: usize,
    pub seed: u64,
    /// Worker threads; `None` uses every available core.
    pub jobs: Option<usize>,
    /// Fixed reservoir settings (connectivity, scales, target radius).
    pub reservoir: ReservoirConfig,
    /// Epoch budget, patience, mask/shuffle seeds, washout, bias.
    pub dropin: DropInConfig,
}

impl SearchOptions {
    pub fn new(n_inputs: usize, seed: u64) -> Self {
        SearchOptions {
            folds: None,
            n_topologies: 3,
            seed,
            jobs: None,
            reservoir: ReservoirConfig::new(n_inputs, 1, 1.0),
            dropin: DropInConfig::default(),
        }
    }

    fn folds_for(&self, mode: TaskMode) -> usize {
        self.folds.unwrap_or(match mode {
            TaskMode::LastStepClassification => 5,
            TaskMode::PerStepRegression => 3,
        })
    }

    /// Weight seed of topology `j` at size `n_r`; shared by every leak rate,
    /// δ and p so those comparisons see the same pre-rescale draw.
    pub fn topology_seed(&self, n_r: usize, j: usize) -> u64 {
        derive_seed(
            derive_seed(self.seed, TOPOLOGY_TAG, n_r as u64),
            TOPOLOGY_TAG,
            j as u64,
        )
    }

    pub fn refit_seed(&self) -> u64 {
        derive_seed(self.seed, REFIT_TAG, 0)
    }

    fn reservoir_for(&self, c: &HyperConfig, seed: u64) -> ReservoirConfig {
        ReservoirConfig {
            n_reservoir: c.n_reservoir,
            leak_rate: c.leak_rate,
            seed,
            ..self.reservoir.clone()
        }
    }

    fn dropin_for(&self, c: &HyperConfig) -> DropInConfig {
        self.dropin.clone().with_p(c.retention_p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: HyperConfig,
    pub metric: MetricKind,
    pub folds: usize,
    pub n_topologies: usize,
    pub results: Vec<TrialResult>,
}

impl SearchOutcome {
    pub fn best_result(&self) -> &TrialResult {
        self.results
            .iter()
            .find(|r| r.config == self.best)
            .expect("best config has a result")
    }

    /// One `trial` row per (config, fold, topology) followed by one
    /// `summary` row per config.
    pub fn write_report_csv(&self, mut w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(&mut w);
        out.write_record([
            "kind",
            "n_reservoir",
            "leak_rate",
            "delta",
            "retention_p",
            "fold",
            "topology",
            "metric_kind",
            "train_metric",
            "val_metric",
            "train_std",
            "val_std",
            "n_ok",
            "status",
        ])?;
        let f = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        let cfg = |c: &HyperConfig| {
            [
                c.n_reservoir.to_string(),
                format!("{:?}", c.leak_rate),
                format!("{:?}", c.delta),
                format!("{:?}", c.retention_p),
            ]
        };
        for r in &self.results {
            for t in &r.trials {
                let [n, a, d, p] = cfg(&r.config);
                out.write_record([
                    "trial".to_string(),
                    n,
                    a,
                    d,
                    p,
                    t.fold.to_string(),
                    t.topology.to_string(),
                    self.metric.as_str().to_string(),
                    f(t.train_metric),
                    f(t.val_metric),
                    String::new(),
                    String::new(),
                    String::new(),
                    match &t.error {
                        None => "ok".to_string(),
                        Some(e) => format!("failed: {e}"),
                    },
                ])?;
            }
        }
        for r in &self.results {
            let [n, a, d, p] = cfg(&r.config);
            let status = if r.failed() {
                "failed"
            } else if r.config == self.best {
                "selected"
            } else {
                "ok"
            };
            out.write_record([
                "summary".to_string(),
                n,
                a,
                d,
                p,
                String::new(),
                String::new(),
                self.metric.as_str().to_string(),
                f(Some(r.train_mean)),
                f(Some(r.val_mean)),
                f(Some(r.train_std)),
                f(Some(r.val_std)),
                r.n_ok.to_string(),
                status.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<report csv>", e))?;
        Ok(())
    }
}

pub(crate) fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Picks the best non-failed result: highest mean accuracy or lowest mean
/// MAE, ties broken by [`HyperConfig`] order.
pub fn select_best(results: &[TrialResult], metric: MetricKind) -> Option<HyperConfig> {
    results
        .iter()
        .filter(|r| !r.failed() && !r.val_mean.is_nan())
        .min_by(|a, b| {
            let by_metric = if metric.higher_is_better() {
                b.val_mean.total_cmp(&a.val_mean)
            } else {
                a.val_mean.total_cmp(&b.val_mean)
            };
            by_metric.then(a.config.tie_key(&b.config))
        })
        .map(|r| r.config)
}

pub fn grid_search(train: &Dataset, grid: &Grid, opts: &SearchOptions) -> Result<SearchOutcome> {
    grid.validate()?;
    if opts.n_topologies == 0 {
        return Err(Error::InvalidConfig("n_topologies must be positive".into()));
    }
    let mode = train.task_mode();
    let metric = MetricKind::for_task(mode);
    let k = opts.folds_for(mode);
    let folds = kfold(train, k, derive_seed(opts.seed, FOLD_TAG, 0))?;
    let configs = grid.configs();

    with_pool(opts.jobs, || {
        // one rescaled reservoir per (N_R, leak, topology), from a raw draw
        // shared across leak rates
        let mut keys: Vec<(usize, u64, usize)> = Vec::new();
        for c in &configs {
            for j in 0..opts.n_topologies {
                let key = (c.n_reservoir, c.leak_rate.to_bits(), j);
                if !keys.contains(&key) {
                    keys.push(key);
                }
            }
        }
        let mut raw: HashMap<(usize, usize), _> = HashMap::new();
        for &(n_r, _, j) in &keys {
            if let std::collections::hash_map::Entry::Vacant(e) = raw.entry((n_r, j)) {
                let rc = ReservoirConfig {
                    n_reservoir: n_r,
                    seed: opts.topology_seed(n_r, j),
                    ..opts.reservoir.clone()
                };
                e.insert(draw_raw_weights(&rc));
            }
        }
        let weights: HashMap<(usize, u64, usize), std::result::Result<ReservoirWeights, String>> =
            keys.par_iter()
                .map(|&(n_r, a_bits, j)| {
                    let rc = ReservoirConfig {
                        n_reservoir: n_r,
                        leak_rate: f64::from_bits(a_bits),
                        seed: opts.topology_seed(n_r, j),
                        ..opts.reservoir.clone()
                    };
                    let w = match &raw[&(n_r, j)] {
                        Ok((w_in, w_h)) => {
                            rescale_raw(&rc, w_in.clone(), w_h).map_err(|e| e.to_string())
                        }
                        Err(e) => Err(e.to_string()),
                    };
                    ((n_r, a_bits, j), w)
                })
                .collect();

        let work: Vec<(usize, usize, usize)> = (0..configs.len())
            .flat_map(|ci| {
                (0..folds.len()).flat_map(move |f| (0..opts.n_topologies).map(move |j| (ci, f, j)))
            })
            .collect();
        let trials: Vec<(usize, Trial)> = work
            .par_iter()
            .map(|&(ci, f, j)| {
                let c = &configs[ci];
                let (fold_train, fold_val) = &folds[f];
                let w = &weights[&(c.n_reservoir, c.leak_rate.to_bits(), j)];
                let outcome = w.clone().map_err(Error::NumericalBreakdown).and_then(|w| {
                    let rc = opts.reservoir_for(c, opts.topology_seed(c.n_reservoir, j));
                    let model = Trainer::new(rc, opts.dropin_for(c), c.delta, grid.lambda)
                        .with_weights(w)
                        .fit(fold_train, fold_val)?;
                    let val = evaluate(&model, fold_val, &[])?;
                    Ok((model.meta.train_metric, val))
                });
                let trial = match outcome {
                    Ok((tr, va)) => Trial {
                        fold: f,
                        topology: j,
                        train_metric: Some(tr),
                        val_metric: Some(va),
                        error: None,
                    },
                    Err(e) => {
                        log::warn!(
                            "event=trial_failed n_reservoir={} leak_rate={} delta={} p={} fold={} topology={} error=\"{}\"",
                            c.n_reservoir, c.leak_rate, c.delta, c.retention_p, f, j, e
                        );
                        Trial {
                            fold: f,
                            topology: j,
                            train_metric: None,
                            val_metric: None,
                            error: Some(e.to_string()),
                        }
                    }
                };
                (ci, trial)
            })
            .collect();

        let mut per_config: Vec<Vec<Trial>> = vec![Vec::new(); configs.len()];
        for (ci, t) in trials {
            per_config[ci].push(t);
        }
        let results: Vec<TrialResult> = configs
            .iter()
            .zip(per_config)
            .map(|(c, t)| {
                let r = TrialResult::from_trials(*c, t);
                log::debug!(
                    "event=config_done n_reservoir={} leak_rate={} delta={} p={} val_mean={} val_std={} n_ok={} metric={}",
                    c.n_reservoir, c.leak_rate, c.delta, c.retention_p, r.val_mean, r.val_std, r.n_ok, metric.as_str()
                );
                r
            })
            .collect();
        let best = select_best(&results, metric)
            .ok_or_else(|| Error::NumericalBreakdown("every grid configuration failed".into()))?;
        log::info!(
            "event=selected n_reservoir={} leak_rate={} delta={} p={} metric={}",
            best.n_reservoir,
            best.leak_rate,
            best.delta,
            best.retention_p,
            metric.as_str()
        );
        Ok(SearchOutcome {
            best,
            metric,
            folds: k,
            n_topologies: opts.n_topologies,
            results,
        })
    })?
}

#[derive(Debug, Clone)]
pub struct FinalReport {
    pub config: HyperConfig,
    pub topology_seed: u64,
    pub metric: MetricKind,
    pub train_metric: f64,
    pub test_metric: f64,
    pub model: TrainedModel,
    pub ablation: Option<AblationReport>,
}

/// Ablation request for [`refit_and_test`].
#[derive(Debug, Clone, PartialEq)]
pub struct AblationSpec {
    pub k_max: usize,
    pub ablatable: Vec<usize>,
}

/// Trains one model on all of `train` with a fresh topology and scores it
/// on `test`.
pub fn refit_and_test(
    config: &HyperConfig,
    train: &Dataset,
    test: &Dataset,
    lambda: f64,
    opts: &SearchOptions,
    ablation: Option<&AblationSpec>,
) -> Result<FinalReport> {
    let seed = opts.refit_seed();
    let rc = opts.reservoir_for(config, seed);
    let model = Trainer::new(rc, opts.dropin_for(config), config.delta, lambda)
        .fit(train, &train.empty_like())?;
    let test_metric = evaluate(&model, test, &[])?;
    let ablation = match ablation {
        Some(spec) => Some(with_pool(opts.jobs, || {
            ablation_curve(&model, test, spec.k_max, &spec.ablatable)
        })??),
        None => None,
    };
    log::info!(
        "event=refit n_reservoir={} leak_rate={} delta={} p={} seed={} train_metric={} test_metric={} metric={}",
        config.n_reservoir,
        config.leak_rate,
        config.delta,
        config.retention_p,
        seed,
        model.meta.train_metric,
        test_metric,
        model.metric_kind().as_str()
    );
    Ok(FinalReport {
        config: *config,
        topology_seed: seed,
        metric: model.metric_kind(),
        train_metric: model.meta.train_metric,
        test_metric,
        model,
        ablation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic_redundant, SynthParams};

    fn ds() -> Dataset {
        gen_synthetic_redundant(&SynthParams {
            n_sequences: 9,
            seq_len: 30,
            n_channels: 3,
            seed: 11,
            ..SynthParams::default()
        })
        .unwrap()
    }

    fn opts() -> SearchOptions {
        let mut o = SearchOptions::new(3, 4);
        o.n_topologies = 2;
        o.dropin.max_epochs = 3;
        o.jobs = Some(2);
        o
    }

    fn cfg(n: usize, a: f64, d: f64) -> HyperConfig {
        HyperConfig {
            n_reservoir: n,
            leak_rate: a,
            delta: d,
            retention_p: 1.0,
        }
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(Grid::paper_full().configs().len(), 4 * 5 * 7);
        assert_eq!(Grid::fast().configs().len(), 18);
        let mut g = Grid::fast();
        g.delta.clear();
        assert!(g.validate().is_err());
    }

    #[test]
    fn single_config_is_selected() {
        let c = cfg(8, 0.5, 1.0);
        let out = grid_search(&ds(), &Grid::single(c, 1.0), &opts()).unwrap();
        assert_eq!(out.best, c);
        let r = &out.results[0];
        assert_eq!(r.trials.len(), 3 * 2);
        let vals: Vec<f64> = r.trials.iter().filter_map(|t| t.val_metric).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!((mean - r.val_mean).abs() <= 1e-12);
    }

    #[test]
    fn selection_tie_break_and_direction() {
        let mk = |c, v: f64| {
            TrialResult::from_trials(
                c,
                vec![Trial {
                    fold: 0,
                    topology: 0,
                    train_metric: Some(v),
                    val_metric: Some(v),
                    error: None,
                }],
            )
        };
        let a = mk(cfg(100, 0.1, 0.1), 0.5);
        let b = mk(cfg(50, 0.1, 1.0), 0.5);
        let c = mk(cfg(50, 0.1, 0.1), 0.5);
        let d = mk(cfg(500, 0.1, 0.1), 0.7);
        assert_eq!(
            select_best(&[a.clone(), b.clone(), c.clone()], MetricKind::Accuracy),
            Some(c.config)
        );
        assert_eq!(
            select_best(&[a.clone(), d.clone()], MetricKind::Accuracy),
            Some(d.config)
        );
        assert_eq!(
            select_best(&[a.clone(), d], MetricKind::Mae),
            Some(a.config)
        );
        let failed = TrialResult::from_trials(
            cfg(10, 0.1, 0.1),
            vec![Trial {
                fold: 0,
                topology: 0,
                train_metric: None,
                val_metric: None,
                error: Some("x".into()),
            }],
        );
        assert_eq!(
            select_best(&[failed, b.clone()], MetricKind::Mae),
            Some(b.config)
        );
    }

    #[test]
    fn topologies_shared_across_leak_rates() {
        let o = opts();
        let base = o.reservoir_for(&cfg(20, 0.1, 1.0), o.topology_seed(20, 1));
        let other = o.reservoir_for(&cfg(20, 1.0, 9.0), o.topology_seed(20, 1));
        assert_eq!(
            draw_raw_weights(&base).unwrap(),
            draw_raw_weights(&other).unwrap()
        );
        assert_ne!(o.topology_seed(20, 0), o.topology_seed(20, 1));
        assert_ne!(o.topology_seed(20, 0), o.topology_seed(50, 0));
    }

    #[test]
    fn infeasible_configs_are_disqualified() {
        // a = 0.005 keeps 1 - a above the target radius: no rescale exists
        let mut g = Grid::single(cfg(8, 0.005, 1.0), 1.0);
        g.leak_rate.push(0.5);
        let out = grid_search(&ds(), &g, &opts()).unwrap();
        assert!(out.results[0].failed());
        assert_eq!(out.best.leak_rate, 0.5);
        let mut buf = Vec::new();
        out.write_report_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("failed"));
        assert!(text.contains("selected"));
    }

    #[test]
    fn refit_on_train_equals_train_metric() {
        let d = ds();
        let c = cfg(8, 0.5, 1.0);
        let r = refit_and_test(&c, &d, &d, 1.0, &opts(), None).unwrap();
        assert_eq!(r.test_metric, r.train_metric);
    }
}
