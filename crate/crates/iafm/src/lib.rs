//! Learning-curve modeling toolkit for practice logs.
//!
//! Fits the iAFM and AFM mixed-effects logistic models to (student, KC)
//! practice sequences by maximum likelihood under a Laplace approximation,
//! and runs length-sensitivity refits (truncation, pattern-mixture
//! stratification, random windows) together with a synthetic-data workbench
//! for checking what those refits do under known generative mechanisms.
//!
//! The crate is organized around the pipeline:
//!
//! * [`corpus`] — ingest canonical TSV practice logs, preprocess, and
//!   describe pair-length structure.
//! * [`fitter`] — sparse crossed-random-effects logistic fits (PIRLS inner
//!   loop, Nelder-Mead outer loop), BLUP extraction, singularity checks.
//! * [`refit`] — truncate / stratify / random-window transformations and
//!   the eligibility rules for each protocol.
//! * [`summary`] — IQRs, shrinkage ratios, mastery translations, and
//!   fit-to-fit comparisons.
//! * [`simulate`] — generative corpora (linear log-odds and concave
//!   exponential-approach curves, performance-coupled stopping).
//! * [`cli`] — batch commands with file artifacts and run manifests.

pub mod cli;
pub mod corpus;
pub mod fitter;
pub mod refit;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod summary;

pub use corpus::{ColumnMapping, CorpusStats, Dataset, ObservationRow, PracticePair};
pub use fitter::{
    fit, is_singular, CovarianceBlock, FitConfig, FitResult, FixedEffects, ModelSpec,
    RandomEffectEstimates,
};
pub use refit::{run_protocol, EligibilityReason, EligibilityReport, RefitPlan};
pub use simulate::{simulate, SimConfig, StoppingRule};
pub use summary::{compare, summarize, ComparisonRow, FitSummary};
