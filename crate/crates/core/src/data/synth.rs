//! Redundant-channel surrogate task.
//!
//! A latent signal `z(t)` (three random-phase sinusoids, amplitude 1/3 each)
//! is observed through `d` noisy copies `u_i(t) = z(t) + ε_i(t)`. Every
//! channel carries the same information, so any subset of channels suffices.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Sequence, Target, TaskMode};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    pub n_sequences: usize,
    pub seq_len: usize,
    pub n_channels: usize,
    pub noise_std: f64,
    pub task_mode: TaskMode,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_sequences: 60,
            seq_len: 100,
            n_channels: 6,
            noise_std: 0.3,
            task_mode: TaskMode::PerStepRegression,
            seed: 0,
        }
    }
}

const N_COMPONENTS: usize = 3;
const MIN_PERIOD: f64 = 10.0;
/// Give up on class balancing after this many draws per requested sequence.
const MAX_DRAWS_PER_SEQUENCE: usize = 1000;

pub fn gen_synthetic_redundant(params: &SynthParams) -> Result<Dataset> {
    if params.n_channels < 2 {
        return Err(Error::InvalidParameters(format!(
            "need at least 2 channels, got {}",
            params.n_channels
        )));
    }
    if params.n_sequences == 0 || params.seq_len == 0 {
        return Err(Error::InvalidParameters(
            "n_sequences and seq_len must be positive".into(),
        ));
    }
    if !(params.noise_std >= 0.0 && params.noise_std.is_finite()) {
        return Err(Error::InvalidParameters(format!(
            "noise_std {} must be non-negative",
            params.noise_std
        )));
    }
    let mut rng = rng::seeded(params.seed);
    let noise = Normal::new(0.0, params.noise_std).expect("validated std");
    let max_period = (params.seq_len as f64).max(MIN_PERIOD);

    let draw = |rng: &mut rng::SeededRng| -> (DMatrix<f64>, DVector<f64>) {
        let comps: Vec<(f64, f64)> = (0..N_COMPONENTS)
            .map(|_| {
                let period = if max_period > MIN_PERIOD {
                    rng.random_range(MIN_PERIOD..=max_period)
                } else {
                    MIN_PERIOD
                };
                (period, rng.random_range(0.0..TAU))
            })
            .collect();
        let z = DVector::from_fn(params.seq_len, |t, _| {
            comps
                .iter()
                .map(|&(p, phi)| (TAU * t as f64 / p + phi).sin())
                .sum::<f64>()
                / N_COMPONENTS as f64
        });
        let inputs = DMatrix::from_fn(params.seq_len, params.n_channels, |t, _| z[t]);
        let inputs = if params.noise_std > 0.0 {
            inputs.map(|v| v + noise.sample(rng))
        } else {
            inputs
        };
        (inputs, z)
    };

    let mut sequences = Vec::with_capacity(params.n_sequences);
    match params.task_mode {
        TaskMode::PerStepRegression => {
            for i in 0..params.n_sequences {
                let (inputs, z) = draw(&mut rng);
                sequences.push(Sequence {
                    id: format!("synth_{i:04}"),
                    inputs,
                    target: Target::PerStep(DMatrix::from_column_slice(
                        params.seq_len,
                        1,
                        z.as_slice(),
                    )),
                });
            }
        }
        TaskMode::LastStepClassification => {
            // fill exact class quotas by rejection so the positive fraction is
            // within half a sequence of 0.5
            let mut quota = [params.n_sequences.div_ceil(2), params.n_sequences / 2];
            let mut draws = 0;
            while quota.iter().any(|&q| q > 0) {
                draws += 1;
                if draws > MAX_DRAWS_PER_SEQUENCE * params.n_sequences {
                    return Err(Error::InvalidParameters("could not balance classes".into()));
                }
                let (inputs, z) = draw(&mut rng);
                let label = if z.mean() >= 0.0 { 1.0 } else { -1.0 };
                let slot = usize::from(label < 0.0);
                if quota[slot] == 0 {
                    continue;
                }
                quota[slot] -= 1;
                let i = sequences.len();
                sequences.push(Sequence {
                    id: format!("synth_{i:04}"),
                    inputs,
                    target: Target::Final(DVector::from_element(1, label)),
                });
            }
        }
    }
    let names = (1..=params.n_channels)
        .map(|i| format!("channel_{i}"))
        .collect();
    let mut ds = Dataset::new(sequences, params.task_mode)?.with_feature_names(names)?;
    ds.provenance
        .insert("generator".into(), "synthetic_redundant".into());
    ds.provenance.insert("seed".into(), params.seed.to_string());
    ds.provenance
        .insert("noise_std".into(), format!("{:?}", params.noise_std));
    Ok(ds)
}
