//! One-hot and thermometer label codecs with their readout rules.
//!
//! | rank | one-hot      | thermometer |
//! |------|--------------|-------------|
//! | 3    | `[0,0,0,1]`  | `[1,1,1]`   |
//! | 2    | `[0,0,1,0]`  | `[1,1,0]`   |
//! | 1    | `[0,1,0,0]`  | `[1,0,0]`   |
//! | 0    | `[1,0,0,0]`  | `[0,0,0]`   |
//!
//! One-hot outputs are read per pair with an argmax, so two candidates of the
//! same prompt can receive the same rank. Thermometer outputs are per-bit
//! probabilities; the grouped readout sums them per candidate and ranks the
//! four sums, which always yields a permutation of `{0,1,2,3}`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::RelevanceRank;

#[derive(Debug, Error, PartialEq)]
pub enum EncodingError {
    #[error("grouped readout needs exactly 4 candidates, got {0}")]
    GroupSize(usize),
    #[error("score vector does not match the {0} codec")]
    SchemeMismatch(Codec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Codec {
    #[default]
    Onehot,
    Thermometer,
}

impl Codec {
    /// Number of output heads a model needs for this codec.
    pub fn width(self) -> usize {
        match self {
            Codec::Onehot => 4,
            Codec::Thermometer => 3,
        }
    }

    pub fn encode(self, rank: RelevanceRank) -> LabelVector {
        match self {
            Codec::Onehot => LabelVector::Onehot(encode_onehot(rank)),
            Codec::Thermometer => LabelVector::Thermometer(encode_thermometer(rank)),
        }
    }

    /// Ranks for one prompt group, scores in candidate order.
    ///
    /// One-hot reads each candidate independently; thermometer uses the
    /// grouped sum ranking.
    pub fn readout_group(self, scores: &[ScoreVector]) -> Result<Vec<RelevanceRank>, EncodingError> {
        match self {
            Codec::Onehot => scores
                .iter()
                .map(|s| match s {
                    ScoreVector::Onehot(v) => Ok(readout_onehot(v)),
                    ScoreVector::Thermometer(_) => Err(EncodingError::SchemeMismatch(self)),
                })
                .collect(),
            Codec::Thermometer => {
                let probs = scores
                    .iter()
                    .map(|s| match s {
                        ScoreVector::Thermometer(p) => Ok(*p),
                        ScoreVector::Onehot(_) => Err(EncodingError::SchemeMismatch(self)),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(readout_thermometer_grouped(&probs)?.to_vec())
            }
        }
    }

    /// Rank of a single pair, without looking at the rest of its group.
    pub fn readout_single(self, score: &ScoreVector) -> Result<RelevanceRank, EncodingError> {
        match (self, score) {
            (Codec::Onehot, ScoreVector::Onehot(v)) => Ok(readout_onehot(v)),
            (Codec::Thermometer, ScoreVector::Thermometer(p)) => Ok(readout_thermometer_ungrouped(p)),
            _ => Err(EncodingError::SchemeMismatch(self)),
        }
    }
}

impl fmt::Display for Codec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Codec::Onehot => "onehot",
            Codec::Thermometer => "thermometer",
        })
    }
}

impl FromStr for Codec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "onehot" | "one-hot" => Ok(Codec::Onehot),
            "thermometer" => Ok(Codec::Thermometer),
            other => Err(format!("unknown codec `{other}` (expected onehot|thermometer)")),
        }
    }
}

/// Binary training target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelVector {
    Onehot([u8; 4]),
    Thermometer([u8; 3]),
}

impl LabelVector {
    pub fn bits(&self) -> &[u8] {
        match self {
            LabelVector::Onehot(b) => b,
            LabelVector::Thermometer(b) => b,
        }
    }
}

/// Model output for one pair: raw head scores (one-hot) or per-bit
/// probabilities in `[0, 1]` (thermometer).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScoreVector {
    Onehot([f64; 4]),
    Thermometer([f64; 3]),
}

pub fn encode_onehot(rank: RelevanceRank) -> [u8; 4] {
    let mut bits = [0; 4];
    bits[rank.index()] = 1;
    bits
}

/// Bit `k` is set iff `rank > k`.
pub fn encode_thermometer(rank: RelevanceRank) -> [u8; 3] {
    std::array::from_fn(|k| u8::from(rank.index() > k))
}

/// Index of the largest score; ties go to the lowest index.
pub fn readout_onehot(scores: &[f64; 4]) -> RelevanceRank {
    let mut best = 0;
    for i in 1..4 {
        if scores[i].total_cmp(&scores[best]) == Ordering::Greater {
            best = i;
        }
    }
    RelevanceRank::ALL[best]
}

/// Ranks four values: the largest gets 3, the smallest 0. Equal values are
/// ordered by ascending position, earlier positions receiving higher ranks.
pub fn rank_four(values: &[f64; 4]) -> [RelevanceRank; 4] {
    let mut order = [0usize, 1, 2, 3];
    // Descending by value, ascending by position on ties.
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut ranks = [RelevanceRank::LEAST; 4];
    for (place, &pos) in order.iter().enumerate() {
        ranks[pos] = RelevanceRank::ALL[3 - place];
    }
    ranks
}

/// Grouped thermometer readout over the four candidates of one prompt.
pub fn readout_thermometer_grouped(group: &[[f64; 3]]) -> Result<[RelevanceRank; 4], EncodingError> {
    if group.len() != 4 {
        return Err(EncodingError::GroupSize(group.len()));
    }
    let sums: [f64; 4] = std::array::from_fn(|i| group[i].iter().sum());
    Ok(rank_four(&sums))
}

/// Number of bits whose probability is strictly above 0.5.
pub fn readout_thermometer_ungrouped(probs: &[f64; 3]) -> RelevanceRank {
    let count = probs.iter().filter(|&&p| p > 0.5).count();
    RelevanceRank::ALL[count]
}
