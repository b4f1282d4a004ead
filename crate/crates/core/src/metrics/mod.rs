//! Ranking and classification metrics plus bootstrap uncertainty.

mod bootstrap;
mod f1;
mod tau;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, RelevanceRank};

pub use bootstrap::{bootstrap, bootstrap_many, bootstrap_train, BootstrapSummary, ResampleUnit, SizeSummary};
pub use f1::{f1_per_class, ClassMetrics, ClassScores};
pub use tau::{kendall_tau, mean_group_tau, tau_counts, TauCounts, TauReport, TauVariant};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {pred} predictions vs {truth} labels")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("need at least {need} items, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("bootstrap needs at least one resample")]
    NoResamples,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Kendall's tau plus per-class scores for one prediction set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub tau: TauReport,
    pub classes: ClassMetrics,
    pub n: usize,
}

pub fn evaluate(pred: &[RelevanceRank], truth: &[RelevanceRank], variant: TauVariant) -> Result<MetricReport> {
    Ok(MetricReport {
        tau: kendall_tau(pred, truth, variant)?,
        classes: f1_per_class(pred, truth)?,
        n: pred.len(),
    })
}

/// Names of the scalar metrics reported for every run, in CSV order.
pub const METRIC_NAMES: [&str; 5] = [
    "kendall_tau",
    "f1_most",
    "f1_second_most",
    "f1_second_least",
    "f1_least",
];

impl MetricReport {
    /// Values matching [`METRIC_NAMES`].
    pub fn scalars(&self) -> [f64; 5] {
        let f1 = |r: RelevanceRank| self.classes.per_class[r.index()].f1;
        [
            self.tau.tau,
            f1(RelevanceRank::MOST),
            f1(RelevanceRank::SECOND_MOST),
            f1(RelevanceRank::SECOND_LEAST),
            f1(RelevanceRank::LEAST),
        ]
    }
}
