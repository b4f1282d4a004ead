use serde::{Deserialize, Serialize};

use super::{MetricsError, Result};
use crate::corpus::RelevanceRank;

/// One-vs-rest scores for a single rank.
///
/// Zero denominators yield 0 and set the matching `*_undefined` flag.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positive: u64,
    pub predicted: u64,
    pub support: u64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    /// Neither predicted nor present in the labels.
    pub absent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    /// Indexed by rank value (0 = least relevant).
    pub per_class: [ClassScores; 4],
    /// `confusion[true][pred]`.
    pub confusion: [[u64; 4]; 4],
    pub accuracy: f64,
}

pub fn f1_per_class(pred: &[RelevanceRank], truth: &[RelevanceRank]) -> Result<ClassMetrics> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    let mut confusion = [[0u64; 4]; 4];
    for (p, t) in pred.iter().zip(truth) {
        confusion[t.index()][p.index()] += 1;
    }
    let per_class = std::array::from_fn(|k| {
        let tp = confusion[k][k];
        let predicted: u64 = (0..4).map(|t| confusion[t][k]).sum();
        let support: u64 = confusion[k].iter().sum();
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        ClassScores {
            precision,
            recall,
            f1,
            true_positive: tp,
            predicted,
            support,
            precision_undefined: predicted == 0,
            recall_undefined: support == 0,
            absent: predicted == 0 && support == 0,
        }
    });
    let correct: u64 = (0..4).map(|k| confusion[k][k]).sum();
    let accuracy = if pred.is_empty() {
        0.0
    } else {
        correct as f64 / pred.len() as f64
    };
    Ok(ClassMetrics {
        per_class,
        confusion,
        accuracy,
    })
}
