//! Aggregation of noisy multi-label crowdsourced annotations.
//!
//! Two Bayesian models are fitted by mean-field coordinate ascent:
//!
//! * [`bnc`] treats every label as an independent binary task;
//! * [`bmmb`] draws each instance's true label vector from a mixture of
//!   independent Bernoullis, which captures dependency between labels.
//!
//! Both estimate a per-annotator, per-label reliability. [`metrics`] holds
//! the majority-vote baseline and the evaluation measures, [`sim`] the
//! annotator simulator, and [`experiments`] the end-to-end pipeline used by
//! the command-line tool.

pub mod bmmb;
pub mod bnc;
pub mod data;
pub mod error;
pub mod experiments;
pub mod ingest;
pub mod math;
pub mod metrics;
pub mod sim;
mod variational;

pub use data::{
    annotation_stats, binarize, choose_prior, Annotation, AnnotationSet, BmmbState, BncState,
    FitConfig, FitResult, Hyperparams, LabelMatrix, LabelSetDistribution, Matrix, ModelKind,
};
pub use error::{Error, Result};
