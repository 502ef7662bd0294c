//! Calibrated abstention for question-answering models.
//!
//! A model's answer is emitted only when its certainty score clears a
//! threshold chosen from uncertain (incorrectly answered) calibration
//! examples, so that the rate of wrongly-answered questions slipping
//! through stays below `alpha` with probability at least `1 - delta`.
//! The guarantee is finite-sample and distribution-free.
//!
//! Module map:
//! - [`scores`]: entropy-based certainty scores (vanilla, semantic, kernel).
//! - [`calibration`]: order-statistic threshold selection and the predictor.
//! - [`shift`]: covariate-shift correction via density ratios and rejection sampling.
//! - [`dataset`]: record ingestion, answer canonicalization, labeling, splitting.
//! - [`evaluation`]: accuracy / FPR / FNR reports and curve tables.
//! - [`simulation`]: Monte Carlo certification on synthetic score laws.
//! - [`cli`]: command-line front end.

pub mod calibration;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod scores;
pub mod shift;
pub mod simulation;

mod fsutil;

pub use calibration::{
    binomial_tail_v, calibrate, predict, select_k_hat, threshold_sweep, CalibrationInput,
    CertaintyPredictor, Decision, SweepPoint,
};
pub use dataset::{canonicalize, label_correctness, load_records, split_certain_uncertain, QuestionRecord, SplitResult};
pub use error::{Error, Result};
pub use evaluation::{evaluate, fpr_alpha_curve, EvaluationReport, LabeledScore};
pub use scores::{
    kernel_language_entropy, normalize_kernel, score_record, semantic_entropy, vanilla_entropy,
    AnswerSample, CertaintyScore, ScoreFunction, SemanticKernel,
};
pub use shift::{calibrate_under_shift, clip_bound_b, rejection_sample, ShiftConfig};

/// Crate version recorded in serialized predictors.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
