//! Metrics and the missing-feature robustness protocol.

use itertools::Itertools;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::data::{Dataset, Sequence, TaskMode};
use crate::dropin::{sequence_targets, TrainedModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Fraction of outputs whose thresholded sign matches the ±1 target.
    Accuracy,
    /// Mean absolute error pooled over every scored step and output.
    Mae,
}

impl MetricKind {
    pub fn for_task(mode: TaskMode) -> Self {
        match mode {
            TaskMode::LastStepClassification => MetricKind::Accuracy,
            TaskMode::PerStepRegression => MetricKind::Mae,
        }
    }

    pub fn higher_is_better(self) -> bool {
        matches!(self, MetricKind::Accuracy)
    }

    /// Strict improvement; NaN never improves.
    pub fn is_better(self, candidate: f64, incumbent: f64) -> bool {
        if self.higher_is_better() {
            candidate > incumbent
        } else {
            candidate < incumbent
        }
    }

    /// Degradation from `full` to `degraded`, positive when worse.
    pub fn loss(self, full: f64, degraded: f64) -> f64 {
        if self.higher_is_better() {
            full - degraded
        } else {
            degraded - full
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::Mae => "mae",
        }
    }
}

/// Thresholded class: strictly positive output means +1.
#[inline]
pub fn classify(y: f64) -> f64 {
    if y > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Running metric over flat prediction/target pairs.
#[derive(Debug, Clone)]
pub(crate) struct MetricAcc {
    kind: MetricKind,
    sum: f64,
    count: usize,
}

impl MetricAcc {
    pub(crate) fn new(kind: MetricKind) -> Self {
        MetricAcc {
            kind,
            sum: 0.0,
            count: 0,
        }
    }

    pub(crate) fn push(&mut self, pred: f64, target: f64) {
        self.sum += match self.kind {
            MetricKind::Accuracy => f64::from(u8::from(classify(pred) == target)),
            MetricKind::Mae => (pred - target).abs(),
        };
        self.count += 1;
    }

    /// `preds` rows against a row-major flat target block.
    pub(crate) fn push_block(&mut self, preds: &DMatrix<f64>, targets: &[f64]) {
        let n_y = preds.ncols();
        for (r, y) in targets
            .chunks_exact(n_y.max(1))
            .enumerate()
            .take(preds.nrows())
        {
            for (j, &t) in y.iter().enumerate() {
                self.push(preds[(r, j)], t);
            }
        }
    }

    pub(crate) fn value(&self) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::EmptyInput);
        }
        Ok(self.sum / self.count as f64)
    }
}

fn check_pairs(preds: &[f64], targets: &[f64]) -> Result<()> {
    if preds.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            context: "predictions vs targets",
            expected: targets.len(),
            got: preds.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// Fraction of `preds` whose class matches the ±1 `targets`.
pub fn accuracy(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check_pairs(preds, targets)?;
    let mut acc = MetricAcc::new(MetricKind::Accuracy);
    preds
        .iter()
        .zip(targets)
        .for_each(|(&p, &t)| acc.push(p, t));
    acc.value()
}

pub fn mae(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check_pairs(preds, targets)?;
    let mut acc = MetricAcc::new(MetricKind::Mae);
    preds
        .iter()
        .zip(targets)
        .for_each(|(&p, &t)| acc.push(p, t));
    acc.value()
}

/// Model output for one sequence with the 0-based `missing` features held
/// at zero for every step.
pub fn predict_with_missing(
    model: &TrainedModel,
    seq: &Sequence,
    missing: &[usize],
) -> Result<DMatrix<f64>> {
    model.predict_sequence(&seq.inputs, missing)
}

fn evaluate_acc(model: &TrainedModel, ds: &Dataset, missing: &[usize]) -> Result<MetricAcc> {
    if ds.n_inputs() != model.n_inputs() {
        return Err(Error::DimensionMismatch {
            context: "dataset inputs",
            expected: model.n_inputs(),
            got: ds.n_inputs(),
        });
    }
    let steps = model.steps();
    let mut acc = MetricAcc::new(model.metric_kind());
    for s in ds.sequences() {
        let preds = predict_with_missing(model, s, missing)?;
        acc.push_block(&preds, &sequence_targets(s, steps));
    }
    Ok(acc)
}

/// Task metric of `model` on `ds` with the given features missing.
pub fn evaluate(model: &TrainedModel, ds: &Dataset, missing: &[usize]) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    evaluate_acc(model, ds, missing)?.value()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetScore {
    pub missing: Vec<usize>,
    pub metric: f64,
}

/// Metric for every size-`k` subset of `ablatable` removed, in
/// lexicographic subset order.
pub fn ablate(
    model: &TrainedModel,
    test: &Dataset,
    k: usize,
    ablatable: &[usize],
) -> Result<Vec<SubsetScore>> {
    if k > ablatable.len() {
        return Err(Error::KTooLarge {
            k,
            available: ablatable.len(),
        });
    }
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for &j in ablatable {
        if j >= model.n_inputs() {
            return Err(Error::InvalidFeatureIndex {
                index: j,
                n_inputs: model.n_inputs(),
            });
        }
    }
    let mut features = ablatable.to_vec();
    features.sort_unstable();
    features.dedup();
    let subsets: Vec<Vec<usize>> = features.iter().copied().combinations(k).collect();
    subsets
        .into_par_iter()
        .map(|missing| {
            let metric = evaluate(model, test, &missing)?;
            Ok(SubsetScore { missing, metric })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationLevel {
    pub k: usize,
    pub mean: f64,
    /// Population standard deviation over subsets.
    pub std: f64,
    pub subsets: Vec<SubsetScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub metric: MetricKind,
    pub ablatable: Vec<usize>,
    pub levels: Vec<AblationLevel>,
}

impl AblationReport {
    pub fn level(&self, k: usize) -> Option<&AblationLevel> {
        self.levels.iter().find(|l| l.k == k)
    }

    /// Curve rows: `k,subset,metric,metric_kind`, subset as `;`-joined indices.
    pub fn write_curve_csv(&self, mut w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(&mut w);
        out.write_record(["k", "subset", "metric", "metric_kind"])?;
        for level in &self.levels {
            for s in &level.subsets {
                out.write_record([
                    level.k.to_string(),
                    s.missing.iter().join(";"),
                    format!("{:?}", s.metric),
                    self.metric.as_str().to_string(),
                ])?;
            }
        }
        out.flush().map_err(|e| Error::io("<curve csv>", e))?;
        Ok(())
    }

    /// Summary rows: `k,mean,std,n_subsets`.
    pub fn write_summary_csv(&self, mut w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(&mut w);
        out.write_record(["k", "mean", "std", "n_subsets"])?;
        for level in &self.levels {
            out.write_record([
                level.k.to_string(),
                format!("{:?}", level.mean),
                format!("{:?}", level.std),
                level.subsets.len().to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<summary csv>", e))?;
        Ok(())
    }
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Ablation levels `k = 0..=k_max`; subsets are weighted equally.
pub fn ablation_curve(
    model: &TrainedModel,
    test: &Dataset,
    k_max: usize,
    ablatable: &[usize],
) -> Result<AblationReport> {
    let levels = (0..=k_max)
        .map(|k| {
            let subsets = ablate(model, test, k, ablatable)?;
            let metrics: Vec<f64> = subsets.iter().map(|s| s.metric).collect();
            let (mean, std) = mean_std(&metrics);
            log::info!(
                "event=ablation_level k={} subsets={} mean={} std={} metric={}",
                k,
                subsets.len(),
                mean,
                std,
                model.metric_kind().as_str()
            );
            Ok(AblationLevel {
                k,
                mean,
                std,
                subsets,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ablatable = ablatable.to_vec();
    ablatable.sort_unstable();
    ablatable.dedup();
    Ok(AblationReport {
        metric: model.metric_kind(),
        ablatable,
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic_redundant, SynthParams};
    use crate::dropin::{train_standard, DropInConfig};
    use crate::reservoir::ReservoirConfig;

    #[test]
    fn accuracy_examples() {
        assert_eq!(
            accuracy(&[0.3, -0.2, 0.0], &[1.0, -1.0, -1.0]).unwrap(),
            1.0
        );
        assert_eq!(accuracy(&[0.3, 0.2], &[-1.0, 1.0]).unwrap(), 0.5);
        assert!(matches!(accuracy(&[], &[]), Err(Error::EmptyInput)));
        assert!(accuracy(&[1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[1.0, 2.0], &[1.5, 1.0]).unwrap(), 0.75);
        assert_eq!(mae(&[3.0], &[3.0]).unwrap(), 0.0);
    }

    #[test]
    fn metric_direction() {
        assert!(MetricKind::Accuracy.is_better(0.9, 0.8));
        assert!(MetricKind::Mae.is_better(0.1, 0.2));
        assert!(!MetricKind::Mae.is_better(f64::NAN, 0.2));
        assert_eq!(MetricKind::Accuracy.loss(0.9, 0.7), 0.9 - 0.7);
        assert_eq!(MetricKind::Mae.loss(0.1, 0.3), 0.3 - 0.1);
    }

    fn model_and_data() -> (TrainedModel, Dataset) {
        let ds = gen_synthetic_redundant(&SynthParams {
            n_sequences: 5,
            seq_len: 25,
            n_channels: 4,
            seed: 3,
            ..SynthParams::default()
        })
        .unwrap();
        let rc = ReservoirConfig::new(4, 10, 0.5).with_seed(1);
        let dc = DropInConfig {
            max_epochs: 2,
            ..DropInConfig::default()
        };
        let m = train_standard(&ds, &ds.empty_like(), &rc, &dc, 1.0, 1.0).unwrap();
        (m, ds)
    }

    #[test]
    fn ablation_counts_and_baseline() {
        let (m, ds) = model_and_data();
        let report = ablation_curve(&m, &ds, 4, &[0, 1, 2, 3]).unwrap();
        let counts: Vec<usize> = report.levels.iter().map(|l| l.subsets.len()).collect();
        assert_eq!(counts, vec![1, 4, 6, 4, 1]);
        let full = evaluate(&m, &ds, &[]).unwrap();
        assert_eq!(report.levels[0].mean, full);
        assert_eq!(report.levels[0].std, 0.0);
        let all = report.level(4).unwrap();
        assert_eq!(all.subsets[0].missing, vec![0, 1, 2, 3]);
    }

    #[test]
    fn ablation_errors() {
        let (m, ds) = model_and_data();
        assert!(matches!(
            ablate(&m, &ds, 3, &[0, 1]),
            Err(Error::KTooLarge { .. })
        ));
        assert!(matches!(
            ablate(&m, &ds, 1, &[0, 9]),
            Err(Error::InvalidFeatureIndex { index: 9, .. })
        ));
    }

    #[test]
    fn csv_layout() {
        let (m, ds) = model_and_data();
        let report = ablation_curve(&m, &ds, 1, &[0, 2]).unwrap();
        let mut buf = Vec::new();
        report.write_curve_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,subset,metric,metric_kind");
        assert_eq!(lines.len(), 1 + 1 + 2);
        assert!(lines[1].starts_with("0,,"));
        assert!(lines[2].starts_with("1,0,"));
        let mut buf = Vec::new();
        report.write_summary_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k,mean,std,n_subsets\n0,"));
    }
}
