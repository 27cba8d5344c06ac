//! DropIn training: online RLS over reservoir states where every
//! presentation of a training sequence hides a random subset of its input
//! features for all of its timesteps.
//!
//! ```text
//! S⁻¹ ← δ⁻¹·I
//! repeat until the monitored metric stops improving or max_epochs:
//!     shuffle the sequence order
//!     for each sequence:
//!         draw mask M, bit j kept with probability p
//!         x ← 0
//!         for each step t:
//!             x ← leaky update on M ⊙ u(t)
//!             RLS step on (x, y*(t))      (last step only when classifying)
//! ```
//!
//! Predictions never rescale weights by `p`.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{holdout_split, Dataset, Scaler, Sequence, Target, TaskMode};
use crate::error::{Error, Result};
use crate::eval::{MetricAcc, MetricKind};
use crate::readout::{rls_init, DiscountedError, Readout};
use crate::reservoir::{init_weights, ReservoirConfig, ReservoirWeights};
use crate::rng::{self, derive_seed, SeedSet};

/// Input retention vector; `true` keeps the feature.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    bits: Vec<bool>,
}

impl Mask {
    pub fn all(n_inputs: usize) -> Self {
        Mask {
            bits: vec![true; n_inputs],
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Mask { bits }
    }

    /// Mask keeping everything except the listed features.
    pub fn dropping(n_inputs: usize, missing: &[usize]) -> Result<Self> {
        let mut bits = vec![true; n_inputs];
        for &j in missing {
            *bits
                .get_mut(j)
                .ok_or(Error::InvalidFeatureIndex { index: j, n_inputs })? = false;
        }
        Ok(Mask { bits })
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn n_retained(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_full(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }

    #[inline]
    fn apply_into(&self, u: impl Iterator<Item = f64>, out: &mut [f64]) {
        for ((o, v), &keep) in out.iter_mut().zip(u).zip(&self.bits) {
            *o = if keep { v } else { 0.0 };
        }
    }
}

/// One Bernoulli(p) draw per feature, always consuming exactly `n_inputs`
/// samples from `rng`.
pub fn sample_mask(n_inputs: usize, p: f64, rng: &mut impl Rng) -> Mask {
    Mask {
        bits: (0..n_inputs).map(|_| rng.random::<f64>() < p).collect(),
    }
}

/// Dropped features become exactly zero.
pub fn apply_mask(u: &DVector<f64>, m: &Mask) -> Result<DVector<f64>> {
    if u.len() != m.len() {
        return Err(Error::DimensionMismatch {
            context: "mask length",
            expected: u.len(),
            got: m.len(),
        });
    }
    let mut out = DVector::zeros(u.len());
    m.apply_into(u.iter().copied(), out.as_mut_slice());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DropInConfig {
    pub retention_p: f64,
    pub max_epochs: usize,
    /// Epochs without improvement before stopping; 0 disables early stopping.
    pub patience: usize,
    pub shuffle_seed: u64,
    pub mask_seed: u64,
    /// Fraction of the training set held out for early stopping when no
    /// validation set is supplied.
    pub validation_fraction: f64,
    /// Leading steps of each sequence excluded from per-step fitting/scoring.
    pub washout: usize,
    /// Append a constant-1 feature to the reservoir state.
    pub readout_bias: bool,
    /// Score the monitor set with freshly drawn masks instead of full inputs.
    pub masked_validation: bool,
    /// Memoize reservoir features per (sequence, mask); results are identical.
    pub cache_states: bool,
}

impl Default for DropInConfig {
    fn default() -> Self {
        DropInConfig {
            retention_p: 1.0,
            max_epochs: 100,
            patience: 10,
            shuffle_seed: 2,
            mask_seed: 3,
            validation_fraction: 0.0,
            washout: 0,
            readout_bias: false,
            masked_validation: false,
            cache_states: true,
        }
    }
}

impl DropInConfig {
    pub fn with_p(mut self, p: f64) -> Self {
        self.retention_p = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.retention_p) {
            return Err(Error::InvalidConfig(format!(
                "retention_p {} outside [0, 1]",
                self.retention_p
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max_epochs must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidConfig(format!(
                "validation_fraction {} outside [0, 1)",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorSource {
    Validation,
    InternalHoldout,
    Training,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub rls_steps: u64,
    pub discounted_error: f64,
    pub monitor_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub retention_p: f64,
    pub lambda: f64,
    pub delta: f64,
    pub seeds: SeedSet,
    pub metric: MetricKind,
    pub monitor: MonitorSource,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_monitor_metric: f64,
    /// Unmasked metric of the returned readout on the full training set.
    pub train_metric: f64,
    pub dataset_fingerprint: String,
    pub history: Vec<EpochStats>,
}

/// Reservoir, readout and the settings needed to reproduce predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub reservoir: ReservoirConfig,
    pub weights: ReservoirWeights,
    pub readout: Readout,
    pub task_mode: TaskMode,
    pub washout: usize,
    pub readout_bias: bool,
    /// Applied to raw inputs before masking, when present.
    pub scaler: Option<Scaler>,
    pub meta: TrainingMeta,
}

impl TrainedModel {
    pub fn n_inputs(&self) -> usize {
        self.weights.n_inputs()
    }

    pub fn n_outputs(&self) -> usize {
        self.readout.n_outputs()
    }

    pub fn leak_rate(&self) -> f64 {
        self.reservoir.leak_rate
    }

    pub fn metric_kind(&self) -> MetricKind {
        MetricKind::for_task(self.task_mode)
    }

    pub(crate) fn steps(&self) -> StepSel {
        StepSel::for_task(self.task_mode, self.washout)
    }

    /// Readout outputs for one raw input sequence with `missing` features
    /// zeroed: one row per scored step (every step from the washout on for
    /// regression, the final step for classification).
    pub fn predict_sequence(
        &self,
        inputs: &DMatrix<f64>,
        missing: &[usize],
    ) -> Result<DMatrix<f64>> {
        let mask = Mask::dropping(self.n_inputs(), missing)?;
        let scaled;
        let inputs = match &self.scaler {
            Some(s) => {
                scaled = s.transform(inputs)?;
                &scaled
            }
            None => inputs,
        };
        if inputs.ncols() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                context: "sequence columns",
                expected: self.n_inputs(),
                got: inputs.ncols(),
            });
        }
        let feats = sequence_features(
            &self.weights,
            self.leak_rate(),
            inputs,
            &mask,
            self.steps(),
            self.readout_bias,
            &mut |_, _| {},
        )?;
        Ok(feats.predict(&self.readout))
    }
}

/// Which steps of a sequence receive a readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum StepSel {
    Last,
    From(usize),
}

impl StepSel {
    pub(crate) fn for_task(mode: TaskMode, washout: usize) -> Self {
        match mode {
            TaskMode::LastStepClassification => StepSel::Last,
            TaskMode::PerStepRegression => StepSel::From(washout),
        }
    }

    fn includes(self, t: usize, len: usize) -> bool {
        match self {
            StepSel::Last => t + 1 == len,
            StepSel::From(w) => t >= w,
        }
    }
}

/// Row-major block of readout features for the selected steps.
#[derive(Debug, Clone)]
pub(crate) struct Features {
    pub(crate) n_features: usize,
    pub(crate) data: Vec<f64>,
}

impl Features {
    pub(crate) fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_features.max(1))
    }

    pub(crate) fn n_rows(&self) -> usize {
        self.data.len() / self.n_features.max(1)
    }

    pub(crate) fn predict(&self, readout: &Readout) -> DMatrix<f64> {
        let n_y = readout.n_outputs();
        let mut out = DMatrix::zeros(self.n_rows(), n_y);
        let mut y = vec![0.0; n_y];
        for (r, x) in self.rows().enumerate() {
            readout.predict_into(x, &mut y);
            for (j, &v) in y.iter().enumerate() {
                out[(r, j)] = v;
            }
        }
        out
    }

    fn bytes(&self) -> usize {
        self.data.len() * std::mem::size_of::<f64>()
    }
}

/// Runs the reservoir from zero on masked inputs and collects features
/// for the selected steps. `on_input(t, u)` sees every masked input fed in.
pub(crate) fn sequence_features(
    weights: &ReservoirWeights,
    a: f64,
    inputs: &DMatrix<f64>,
    mask: &Mask,
    steps: StepSel,
    bias: bool,
    on_input: &mut dyn FnMut(usize, &[f64]),
) -> Result<Features> {
    let (len, n_u) = inputs.shape();
    if len == 0 {
        return Err(Error::EmptySequence);
    }
    if n_u != weights.n_inputs() || mask.len() != n_u {
        return Err(Error::DimensionMismatch {
            context: "sequence columns",
            expected: weights.n_inputs(),
            got: n_u,
        });
    }
    let n_r = weights.n_reservoir();
    let n_f = n_r + usize::from(bias);
    let mut x = vec![0.0; n_r];
    let mut pre = vec![0.0; n_r];
    let mut u = vec![0.0; n_u];
    let mut data = Vec::new();
    for t in 0..len {
        mask.apply_into(inputs.row(t).iter().copied(), &mut u);
        on_input(t, &u);
        weights.advance(&mut x, &u, a, &mut pre);
        if steps.includes(t, len) {
            data.extend_from_slice(&x);
            if bias {
                data.push(1.0);
            }
        }
    }
    Ok(Features {
        n_features: n_f,
        data,
    })
}

/// Targets aligned with the feature rows of [`sequence_features`].
pub(crate) fn sequence_targets(seq: &Sequence, steps: StepSel) -> Vec<f64> {
    match (&seq.target, steps) {
        (Target::Final(v), _) => v.iter().copied().collect(),
        (Target::PerStep(m), StepSel::From(w)) => {
            let mut out = Vec::with_capacity(m.len());
            for t in w..m.nrows() {
                out.extend(m.row(t).iter().copied());
            }
            out
        }
        (Target::PerStep(m), StepSel::Last) => m.row(m.nrows() - 1).iter().copied().collect(),
    }
}

/// Instrumentation hooks for training runs.
pub trait TrainingObserver {
    /// A sequence is about to be presented with `mask`.
    fn on_presentation(&mut self, _epoch: usize, _seq: usize, _mask: &Mask) {}
    /// A masked input is fed to the reservoir (only when features are
    /// actually recomputed, i.e. not served from the cache).
    fn on_input(&mut self, _epoch: usize, _seq: usize, _t: usize, _u: &[f64]) {}
    fn on_epoch(&mut self, _stats: &EpochStats) {}
}

struct NoObserver;
impl TrainingObserver for NoObserver {}

/// Cached feature blocks are dropped once this budget is exhausted.
const CACHE_BUDGET_BYTES: usize = 64 << 20;

#[derive(Default)]
struct FeatureCache {
    map: HashMap<(usize, Mask), Arc<Features>>,
    bytes: usize,
}

impl FeatureCache {
    fn get(&self, key: &(usize, Mask)) -> Option<Arc<Features>> {
        self.map.get(key).cloned()
    }

    fn offer(&mut self, key: (usize, Mask), f: Arc<Features>) {
        let b = f.bytes();
        if self.bytes + b <= CACHE_BUDGET_BYTES {
            self.bytes += b;
            self.map.insert(key, f);
        }
    }
}

/// Configured training run. [`train_dropin`] and [`train_standard`] are the
/// usual entry points; the builder form allows reusing weights across trials
/// and attaching an observer.
pub struct Trainer<'o> {
    reservoir: ReservoirConfig,
    dropin: DropInConfig,
    delta: f64,
    lambda: f64,
    weights: Option<ReservoirWeights>,
    observer: Option<&'o mut dyn TrainingObserver>,
}

impl<'o> Trainer<'o> {
    pub fn new(reservoir: ReservoirConfig, dropin: DropInConfig, delta: f64, lambda: f64) -> Self {
        Trainer {
            reservoir,
            dropin,
            delta,
            lambda,
            weights: None,
            observer: None,
        }
    }

    /// Use prebuilt weights instead of constructing them from the config.
    pub fn with_weights(mut self, weights: ReservoirWeights) -> Self {
        self.weights = Some(weights);
        self
    }

    pub fn with_observer(mut self, observer: &'o mut dyn TrainingObserver) -> Self {
        self.observer = Some(observer);
        self
    }

    pub fn fit(self, train: &Dataset, val: &Dataset) -> Result<TrainedModel> {
        let Trainer {
            reservoir: rc,
            dropin: dc,
            delta,
            lambda,
            weights,
            observer,
        } = self;
        let mut fallback = NoObserver;
        let observer: &mut dyn TrainingObserver = match observer {
            Some(o) => o,
            None => &mut fallback,
        };
        dc.validate()?;
        rc.validate()?;
        if train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if train.n_inputs() != rc.n_inputs {
            return Err(Error::DimensionMismatch {
                context: "training inputs",
                expected: rc.n_inputs,
                got: train.n_inputs(),
            });
        }
        if !val.is_empty()
            && (val.n_inputs() != train.n_inputs()
                || val.n_outputs() != train.n_outputs()
                || val.task_mode() != train.task_mode())
        {
            return Err(Error::SchemaMismatch(
                "validation set does not match the training schema".into(),
            ));
        }
        let weights = match weights {
            Some(w) => w,
            None => init_weights(&rc)?,
        };
        if weights.n_inputs() != rc.n_inputs || weights.n_reservoir() != rc.n_reservoir {
            return Err(Error::DimensionMismatch {
                context: "reservoir weights",
                expected: rc.n_reservoir,
                got: weights.n_reservoir(),
            });
        }

        let split;
        let (fit_set, monitor_set, monitor) = if !val.is_empty() {
            (train, val, MonitorSource::Validation)
        } else if dc.validation_fraction > 0.0 && train.len() >= 2 {
            let seed = derive_seed(dc.shuffle_seed, 0x7661_6c69, 0);
            split = holdout_split(train, dc.validation_fraction, seed)?;
            (&split.0, &split.1, MonitorSource::InternalHoldout)
        } else {
            (train, train, MonitorSource::Training)
        };

        let task = train.task_mode();
        let steps = StepSel::for_task(task, dc.washout);
        let metric = MetricKind::for_task(task);
        let a = rc.leak_rate;
        let n_u = rc.n_inputs;
        let n_f = rc.n_reservoir + usize::from(dc.readout_bias);
        let n_y = train.n_outputs();

        let mut rls = rls_init(delta, n_f, lambda)?;
        let mut readout = Readout::zeros(n_y, n_f);
        let mut shuffle_rng = rng::seeded(dc.shuffle_seed);
        let mut mask_rng = rng::seeded(dc.mask_seed);
        let mut monitor_mask_rng = rng::seeded(derive_seed(dc.mask_seed, 0x6d6f_6e69, 0));

        let fit_targets: Vec<Vec<f64>> = fit_set
            .sequences()
            .iter()
            .map(|s| sequence_targets(s, steps))
            .collect();
        let mut cache = FeatureCache::default();
        let monitor_bank = if dc.masked_validation {
            None
        } else {
            Some(feature_bank(
                &weights,
                a,
                monitor_set,
                steps,
                dc.readout_bias,
            )?)
        };

        let mut order: Vec<usize> = (0..fit_set.len()).collect();
        let mut err = vec![0.0; n_y];
        let mut history = Vec::new();
        let mut best: Option<(usize, f64, Readout)> = None;
        let mut since_best = 0;

        for epoch in 1..=dc.max_epochs {
            order.shuffle(&mut shuffle_rng);
            let mut disc = DiscountedError::new(lambda);
            let steps_before = rls.n;
            for &i in &order {
                let mask = sample_mask(n_u, dc.retention_p, &mut mask_rng);
                observer.on_presentation(epoch, i, &mask);
                let key = (i, mask);
                let feats = match dc.cache_states.then(|| cache.get(&key)).flatten() {
                    Some(f) => f,
                    None => {
                        let f = Arc::new(sequence_features(
                            &weights,
                            a,
                            &fit_set.sequences()[i].inputs,
                            &key.1,
                            steps,
                            dc.readout_bias,
                            &mut |t, u| observer.on_input(epoch, i, t, u),
                        )?);
                        if dc.cache_states {
                            cache.offer(key, Arc::clone(&f));
                        }
                        f
                    }
                };
                let targets = &fit_targets[i];
                for (x, y) in feats.rows().zip(targets.chunks_exact(n_y)) {
                    rls.step(&mut readout, x, y, &mut err)?;
                    disc.push(&err);
                }
            }

            let monitor_metric = match &monitor_bank {
                Some(bank) => bank_metric(bank, &readout, metric)?,
                None => {
                    let mut acc = MetricAcc::new(metric);
                    for s in monitor_set.sequences() {
                        let m = sample_mask(n_u, dc.retention_p, &mut monitor_mask_rng);
                        let f = sequence_features(
                            &weights,
                            a,
                            &s.inputs,
                            &m,
                            steps,
                            dc.readout_bias,
                            &mut |_, _| {},
                        )?;
                        acc.push_block(&f.predict(&readout), &sequence_targets(s, steps));
                    }
                    acc.value()?
                }
            };
            let stats = EpochStats {
                epoch,
                rls_steps: rls.n - steps_before,
                discounted_error: disc.value(n_y),
                monitor_metric,
            };
            log::debug!(
                "epoch={} rls_steps={} discounted_error={:e} monitor_metric={} metric={} p={}",
                stats.epoch,
                stats.rls_steps,
                stats.discounted_error,
                stats.monitor_metric,
                metric.as_str(),
                dc.retention_p
            );
            observer.on_epoch(&stats);
            history.push(stats);

            let improved = match &best {
                None => monitor_metric.is_finite(),
                Some((_, b, _)) => metric.is_better(monitor_metric, *b),
            };
            if improved || best.is_none() {
                best = Some((epoch, monitor_metric, readout.clone()));
                since_best = 0;
            } else {
                since_best += 1;
            }
            if dc.patience > 0 && since_best >= dc.patience {
                break;
            }
        }

        let (best_epoch, best_metric, best_readout) = best.expect("at least one epoch ran");
        let train_bank = feature_bank(&weights, a, train, steps, dc.readout_bias)?;
        let train_metric = bank_metric(&train_bank, &best_readout, metric)?;
        log::debug!(
            "event=training_done epochs_run={} best_epoch={} best_monitor_metric={} train_metric={} metric={}",
            history.len(),
            best_epoch,
            best_metric,
            train_metric,
            metric.as_str()
        );

        Ok(TrainedModel {
            reservoir: rc.clone(),
            weights,
            readout: best_readout,
            task_mode: task,
            washout: dc.washout,
            readout_bias: dc.readout_bias,
            scaler: None,
            meta: TrainingMeta {
                retention_p: dc.retention_p,
                lambda,
                delta,
                seeds: SeedSet {
                    weights: rc.seed,
                    shuffle: dc.shuffle_seed,
                    mask: dc.mask_seed,
                },
                metric,
                monitor,
                epochs_run: history.len(),
                best_epoch,
                best_monitor_metric: best_metric,
                train_metric,
                dataset_fingerprint: train.fingerprint(),
                history,
            },
        })
    }
}

/// Unmasked features and targets for a whole dataset.
pub(crate) struct FeatureBank {
    blocks: Vec<(Features, Vec<f64>)>,
}

pub(crate) fn feature_bank(
    weights: &ReservoirWeights,
    a: f64,
    ds: &Dataset,
    steps: StepSel,
    bias: bool,
) -> Result<FeatureBank> {
    let mask = Mask::all(ds.n_inputs());
    let blocks = ds
        .sequences()
        .iter()
        .map(|s| {
            Ok((
                sequence_features(weights, a, &s.inputs, &mask, steps, bias, &mut |_, _| {})?,
                sequence_targets(s, steps),
            ))
        })
        .collect::<Result<_>>()?;
    Ok(FeatureBank { blocks })
}

pub(crate) fn bank_metric(
    bank: &FeatureBank,
    readout: &Readout,
    metric: MetricKind,
) -> Result<f64> {
    let mut acc = MetricAcc::new(metric);
    for (f, y) in &bank.blocks {
        acc.push_block(&f.predict(readout), y);
    }
    acc.value()
}

/// DropIn training with retention probability `dc.retention_p`.
pub fn train_dropin(
    train: &Dataset,
    val: &Dataset,
    rc: &ReservoirConfig,
    dc: &DropInConfig,
    delta: f64,
    lambda: f64,
) -> Result<TrainedModel> {
    Trainer::new(rc.clone(), dc.clone(), delta, lambda).fit(train, val)
}

/// Standard LI-ESN training: DropIn with `p = 1`.
pub fn train_standard(
    train: &Dataset,
    val: &Dataset,
    rc: &ReservoirConfig,
    dc: &DropInConfig,
    delta: f64,
    lambda: f64,
) -> Result<TrainedModel> {
    train_dropin(train, val, rc, &dc.clone().with_p(1.0), delta, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic_redundant, SynthParams};
    use crate::readout::ridge_fit;
    use crate::reservoir::run_sequence;

    #[test]
    fn mask_extremes() {
        let mut r = rng::seeded(1);
        assert!(sample_mask(5, 1.0, &mut r).is_full());
        assert_eq!(sample_mask(5, 0.0, &mut r).n_retained(), 0);
    }

    #[test]
    fn apply_mask_examples() {
        let u = DVector::from_vec(vec![3.0, -1.0, 2.0]);
        assert_eq!(apply_mask(&u, &Mask::all(3)).unwrap(), u);
        assert_eq!(
            apply_mask(&u, &Mask::from_bits(vec![false; 3])).unwrap(),
            DVector::zeros(3)
        );
        let m = Mask::from_bits(vec![true, false, true]);
        let out = apply_mask(&u, &m).unwrap();
        assert_eq!(out, DVector::from_vec(vec![3.0, 0.0, 2.0]));
        assert!(out[1].is_sign_positive());
        assert!(apply_mask(&u, &Mask::all(2)).is_err());
    }

    #[test]
    fn dropping_rejects_bad_index() {
        assert!(matches!(
            Mask::dropping(3, &[3]),
            Err(Error::InvalidFeatureIndex {
                index: 3,
                n_inputs: 3
            })
        ));
    }

    fn small_regression() -> Dataset {
        gen_synthetic_redundant(&SynthParams {
            n_sequences: 6,
            seq_len: 30,
            n_channels: 3,
            noise_std: 0.1,
            seed: 5,
            ..SynthParams::default()
        })
        .unwrap()
    }

    #[test]
    fn one_pass_matches_ridge() {
        let ds = small_regression().subset(&[0]);
        let rc = ReservoirConfig::new(3, 12, 0.5).with_seed(8);
        let dc = DropInConfig {
            max_epochs: 1,
            ..DropInConfig::default()
        };
        let delta = 0.1;
        let model = train_standard(&ds, &ds.empty_like(), &rc, &dc, delta, 1.0).unwrap();
        let states = run_sequence(&model.weights, 0.5, &ds.sequences()[0].inputs, None).unwrap();
        let Target::PerStep(y) = &ds.sequences()[0].target else {
            panic!()
        };
        let ridge = ridge_fit(&states, y, delta).unwrap();
        let diff = (&model.readout.w_out - &ridge.w_out).abs().max();
        assert!(diff < 1e-6, "max diff {diff}");
    }

    #[test]
    fn p_one_equals_standard() {
        let ds = small_regression();
        let rc = ReservoirConfig::new(3, 10, 0.3).with_seed(2);
        let dc = DropInConfig {
            max_epochs: 4,
            ..DropInConfig::default()
        };
        let a = train_dropin(&ds, &ds.empty_like(), &rc, &dc, 1.0, 0.9999995).unwrap();
        let b = train_standard(
            &ds,
            &ds.empty_like(),
            &rc,
            &dc.clone().with_p(0.2),
            1.0,
            0.9999995,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cache_does_not_change_results() {
        let ds = small_regression();
        let rc = ReservoirConfig::new(3, 10, 0.3).with_seed(2);
        let dc = DropInConfig {
            max_epochs: 5,
            retention_p: 0.5,
            ..DropInConfig::default()
        };
        let a = train_dropin(&ds, &ds.empty_like(), &rc, &dc, 1.0, 0.9999995).unwrap();
        let no_cache = DropInConfig {
            cache_states: false,
            ..dc
        };
        let b = train_dropin(&ds, &ds.empty_like(), &rc, &no_cache, 1.0, 0.9999995).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_training_set_rejected() {
        let ds = small_regression();
        let rc = ReservoirConfig::new(3, 10, 0.3);
        assert!(matches!(
            train_standard(
                &ds.empty_like(),
                &ds,
                &rc,
                &DropInConfig::default(),
                1.0,
                1.0
            ),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn internal_holdout_is_used_without_validation_set() {
        let ds = small_regression();
        let rc = ReservoirConfig::new(3, 10, 0.3);
        let dc = DropInConfig {
            max_epochs: 2,
            validation_fraction: 0.34,
            ..DropInConfig::default()
        };
        let m = train_standard(&ds, &ds.empty_like(), &rc, &dc, 1.0, 1.0).unwrap();
        assert_eq!(m.meta.monitor, MonitorSource::InternalHoldout);
        let dc = DropInConfig {
            validation_fraction: 0.0,
            ..dc
        };
        let m = train_standard(&ds, &ds.empty_like(), &rc, &dc, 1.0, 1.0).unwrap();
        assert_eq!(m.meta.monitor, MonitorSource::Training);
    }

    #[test]
    fn early_stopping_respects_patience() {
        let ds = small_regression();
        let rc = ReservoirConfig::new(3, 10, 0.3);
        let dc = DropInConfig {
            max_epochs: 50,
            patience: 2,
            ..DropInConfig::default()
        };
        let m = train_standard(&ds, &ds.subset(&[0, 1]), &rc, &dc, 1.0, 1.0).unwrap();
        assert!(m.meta.epochs_run <= 50);
        assert!(m.meta.epochs_run >= m.meta.best_epoch);
        if m.meta.epochs_run < 50 {
            assert_eq!(m.meta.epochs_run - m.meta.best_epoch, 2);
        }
    }
}
