//! Brute-force k-nearest-neighbors vote over relevance ranks.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, ModelError, Result};
use crate::corpus::RelevanceRank;
use crate::encoding::{Codec, ScoreVector};

/// Added to distances before inverting them for distance weighting.
pub const DISTANCE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnWeights {
    #[default]
    Uniform,
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnMetric {
    #[default]
    Euclidean,
    Manhattan,
}

impl KnnMetric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            KnnMetric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            KnnMetric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

impl fmt::Display for KnnWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KnnWeights::Uniform => "uniform",
            KnnWeights::Distance => "distance",
        })
    }
}

impl FromStr for KnnWeights {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "uniform" => Ok(KnnWeights::Uniform),
            "distance" => Ok(KnnWeights::Distance),
            other => Err(format!("unknown knn weights `{other}`")),
        }
    }
}

impl FromStr for KnnMetric {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            // Minkowski with the default p = 2 is the Euclidean distance.
            "euclidean" | "minkowski" => Ok(KnnMetric::Euclidean),
            "manhattan" => Ok(KnnMetric::Manhattan),
            other => Err(format!("unknown knn metric `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub n_neighbors: usize,
    #[serde(default)]
    pub weights: KnnWeights,
    #[serde(default)]
    pub metric: KnnMetric,
}

impl KnnConfig {
    pub fn new(n_neighbors: usize) -> Self {
        KnnConfig {
            n_neighbors,
            weights: KnnWeights::Uniform,
            metric: KnnMetric::Euclidean,
        }
    }

    pub fn with_weights(mut self, weights: KnnWeights) -> Self {
        self.weights = weights;
        self
    }

    pub fn with_metric(mut self, metric: KnnMetric) -> Self {
        self.metric = metric;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub config: KnnConfig,
    pub train: FeatureMatrix,
    pub ranks: Vec<RelevanceRank>,
}

impl KnnModel {
    pub fn fit(features: &FeatureMatrix, ranks: &[RelevanceRank], config: &KnnConfig) -> Result<Self> {
        if features.rows() == 0 {
            return Err(ModelError::EmptyTrainingSet);
        }
        if config.n_neighbors == 0 {
            return Err(ModelError::InvalidConfig("n_neighbors must be at least 1".into()));
        }
        if config.n_neighbors > features.rows() {
            return Err(ModelError::TooManyNeighbors {
                k: config.n_neighbors,
                n: features.rows(),
            });
        }
        let mut train = features.clone();
        train.quantize();
        Ok(KnnModel {
            config: *config,
            train,
            ranks: ranks.to_vec(),
        })
    }

    /// Normalized vote share per rank. Nearest neighbors are chosen by
    /// distance, then by training row index.
    pub fn votes(&self, query: &[f64]) -> [f64; 4] {
        let k = self.config.n_neighbors;
        let mut dists: Vec<(f64, usize)> = self
            .train
            .iter_rows()
            .enumerate()
            .map(|(i, row)| (self.config.metric.distance(query, row), i))
            .collect();
        let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dists.len() {
            dists.select_nth_unstable_by(k - 1, by_distance);
            dists.truncate(k);
        }
        dists.sort_unstable_by(by_distance);
        let mut votes = [0.0f64; 4];
        for &(d, i) in &dists {
            let w = match self.config.weights {
                KnnWeights::Uniform => 1.0,
                KnnWeights::Distance => 1.0 / (d + DISTANCE_EPSILON),
            };
            votes[self.ranks[i].index()] += w;
        }
        let total: f64 = votes.iter().sum();
        votes.map(|v| v / total)
    }

    /// One-hot: vote shares (argmax picks the lowest rank on ties).
    /// Thermometer: bit `k` is the vote share of ranks above `k`.
    pub fn predict_scores(&self, features: &FeatureMatrix, codec: Codec) -> Result<Vec<ScoreVector>> {
        if features.dim() != self.train.dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.train.dim(),
                got: features.dim(),
            });
        }
        let rows: Vec<&[f64]> = features.iter_rows().collect();
        Ok(rows
            .par_iter()
            .map(|q| {
                let v = self.votes(q);
                match codec {
                    Codec::Onehot => ScoreVector::Onehot(v),
                    Codec::Thermometer => ScoreVector::Thermometer(std::array::from_fn(|k| v[k + 1..].iter().sum())),
                }
            })
            .collect())
    }

    pub fn predict(&self, features: &FeatureMatrix) -> Result<Vec<RelevanceRank>> {
        Ok(self
            .predict_scores(features, Codec::Onehot)?
            .iter()
            .map(|s| match s {
                ScoreVector::Onehot(v) => crate::encoding::readout_onehot(v),
                ScoreVector::Thermometer(_) => unreachable!("one-hot scores requested"),
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::stack_groups;
    use crate::models::testutil::planted_groups;

    fn r(v: u8) -> RelevanceRank {
        RelevanceRank::new(v).unwrap()
    }

    #[test]
    fn k1_memorizes_training_data() {
        let groups = planted_groups(25, 5, 0.1, 1.0, 3);
        let (x, y) = stack_groups(&groups).unwrap();
        for metric in [KnnMetric::Euclidean, KnnMetric::Manhattan] {
            let m = KnnModel::fit(&x, &y, &KnnConfig::new(1).with_metric(metric)).unwrap();
            assert_eq!(m.predict(&x).unwrap(), y);
        }
    }

    #[test]
    fn uniform_majority_of_three() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![0.1], vec![0.2], vec![5.0]]).unwrap();
        let y = vec![r(2), r(2), r(0), r(3)];
        let m = KnnModel::fit(&x, &y, &KnnConfig::new(3)).unwrap();
        let q = FeatureMatrix::from_rows(&[vec![0.05]]).unwrap();
        assert_eq!(m.predict(&q).unwrap(), vec![r(2)]);
    }

    #[test]
    fn ties_go_to_lowest_rank_and_distance_weighting_breaks_them() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let y = vec![r(3), r(1)];
        let q = FeatureMatrix::from_rows(&[vec![0.2]]).unwrap();
        let uniform = KnnModel::fit(&x, &y, &KnnConfig::new(2)).unwrap();
        assert_eq!(uniform.predict(&q).unwrap(), vec![r(1)]);
        let weighted = KnnModel::fit(&x, &y, &KnnConfig::new(2).with_weights(KnnWeights::Distance)).unwrap();
        assert_eq!(weighted.predict(&q).unwrap(), vec![r(3)]);
    }

    #[test]
    fn exact_match_with_distance_weights_dominates() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![0.5], vec![0.6]]).unwrap();
        let y = vec![r(0), r(2), r(2)];
        let m = KnnModel::fit(&x, &y, &KnnConfig::new(3).with_weights(KnnWeights::Distance)).unwrap();
        let q = FeatureMatrix::from_rows(&[vec![0.0]]).unwrap();
        assert_eq!(m.predict(&q).unwrap(), vec![r(0)]);
    }

    #[test]
    fn thermometer_scores_are_tail_shares() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![0.1], vec![0.2], vec![0.3]]).unwrap();
        let y = vec![r(0), r(1), r(3), r(3)];
        let m = KnnModel::fit(&x, &y, &KnnConfig::new(4)).unwrap();
        let q = FeatureMatrix::from_rows(&[vec![0.0]]).unwrap();
        match m.predict_scores(&q, Codec::Thermometer).unwrap()[0] {
            ScoreVector::Thermometer(p) => assert_eq!(p, [0.75, 0.5, 0.5]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn k_larger_than_train_is_error() {
        let x = FeatureMatrix::from_rows(&[vec![0.0]]).unwrap();
        assert!(matches!(
            KnnModel::fit(&x, &[r(0)], &KnnConfig::new(2)),
            Err(ModelError::TooManyNeighbors { k: 2, n: 1 })
        ));
    }

    #[test]
    fn reference_best_config_is_expressible() {
        let cfg = KnnConfig::new(16)
            .with_weights("distance".parse().unwrap())
            .with_metric("euclidean".parse().unwrap());
        assert_eq!(cfg.n_neighbors, 16);
        assert_eq!(cfg.weights, KnnWeights::Distance);
    }
}
