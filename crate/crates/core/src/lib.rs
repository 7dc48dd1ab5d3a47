//! Calibrated confidence for black-box LLM answers to multiple-choice questions.
//!
//! The estimator queries a model several times with randomized rephrasings of the
//! same question and reports the frequency of the majority answer as confidence.
//! This crate holds the backend-agnostic pieces: domain types, prompt rendering,
//! answer extraction and aggregation, calibration metrics, logistic/KS statistics
//! and the latent toy model used to check the estimator against known ground truth.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the `*64` aliases below
//! fix the scalar to `f64`, which is what the harness uses.

pub mod domain;
pub mod infer;
pub mod metrics;
pub mod rephrase;
pub mod scalar;
pub mod stats;
pub mod toy;
pub mod verify;

pub use domain::{
    AnswerRecord, ChoiceLabel, DecodeConfig, DomainError, Extracted, Prediction, PredictionSummary, Question, Strategy,
    StrategyKind, MAX_CHOICES, MIN_CHOICES,
};
pub use scalar::Real;

pub type ScoredItem64 = metrics::ScoredItem<f64>;
pub type ScoredItem32 = metrics::ScoredItem<f32>;
pub type CalibrationReport64 = metrics::CalibrationReport<f64>;
pub type CalibrationReport32 = metrics::CalibrationReport<f32>;
pub type ReliabilityBin64 = metrics::ReliabilityBin<f64>;
pub type LogisticParams64 = stats::LogisticParams<f64>;
pub type LogisticParams32 = stats::LogisticParams<f32>;
pub type LatentToyModel64 = toy::LatentToyModel<f64>;
pub type LatentToyModel32 = toy::LatentToyModel<f32>;
