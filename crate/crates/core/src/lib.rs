//! Leaky-integrator echo state networks with input-dropout ("DropIn")
//! training for robustness to missing input features.
//!
//! The pieces, bottom up:
//!
//! * [`reservoir`]: weight construction, echo-state rescaling, state update.
//! * [`readout`]: linear readout trained by RLS, plus a ridge reference.
//! * [`dropin`]: the masked training loop and [`TrainedModel`].
//! * [`eval`]: metrics and missing-feature ablation.
//! * [`data`]: datasets, importers, synthetic task, scaling, splits.
//! * [`model_select`]: grid search with k-fold CV over random topologies.
//! * [`persist`]: JSON model files.

pub mod data;
pub mod dropin;
pub mod error;
pub mod eval;
pub mod model_select;
pub mod persist;
pub mod readout;
pub mod reservoir;
pub mod rng;

pub use data::{Dataset, Sequence, Target, TaskMode};
pub use dropin::{
    apply_mask, sample_mask, train_dropin, train_standard, DropInConfig, Mask, TrainedModel,
    Trainer, TrainingObserver,
};
pub use error::{Error, ErrorCategory, Result};
pub use eval::{
    ablate, ablation_curve, evaluate, predict_with_missing, AblationReport, MetricKind,
};
pub use model_select::{grid_search, refit_and_test, Grid, HyperConfig, SearchOptions};
pub use persist::{load_model, save_model, ModelFile};
pub use readout::{Readout, RlsState, DEFAULT_LAMBDA};
pub use reservoir::{ReservoirConfig, ReservoirState, ReservoirWeights};
pub use rng::SeedSet;
