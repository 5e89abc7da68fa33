//! Environment-debiased driver assessment and placement.
//!
//! A baseline network `V(s)` predicts trip performance from the environment
//! alone and a behavior network `Q(s, a)` adds the driver's behavior. Their
//! difference, the behavioral advantage, ranks drivers with environment bias
//! removed and, maximized over `a` with CMA-ES, picks the best-suited driver
//! for a given trip.

// The `!(x > 0.0)` checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assessment;
pub mod cmaes;
pub mod error;
pub mod fsio;
pub mod models;
pub mod neural;
pub mod normalization;
pub mod placement;
pub mod synth;
pub mod trip_data;

pub use assessment::{assess_drivers, spearman, trip_advantages, DriverAssessment, Ranking, TripAdvantage};
pub use cmaes::{CmaesConfig, CmaesResult, StopReason};
pub use error::{Error, Result};
pub use models::{AdvantageModel, AdvantageParts, BaselineModel, BehaviorModel, BundleMeta, TrainHyper};
pub use neural::{Mlp, MlpConfig, TrainOptions, TrainReport};
pub use normalization::{Layout, NormalizationStats};
pub use placement::{
    match_driver, place, place_normalized, DriverProfile, FixedTemplate, PlacementResult, ProfileSet,
    SearchOptions,
};
pub use synth::{generate, GroundTruth, SynthConfig};
pub use trip_data::{load_dataset, Dataset, DatasetSchema, LoadOptions, TripRecord};
