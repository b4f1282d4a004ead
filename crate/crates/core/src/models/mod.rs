//! Rank classifiers over pair feature vectors.
//!
//! A pipeline is an optional PCA front-end, a model (kNN or SGD-trained
//! linear heads) and a label codec. Fitted parameters are rounded to `f32`
//! at the end of fitting so that a model reloaded from its binary container
//! predicts exactly like the in-memory one.

pub mod knn;
pub mod pca;
pub mod persist;
pub mod search;
pub mod sgd;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, RelevanceRank};
use crate::embedder::FeatureMode;
use crate::encoding::{Codec, EncodingError, ScoreVector};
use crate::metrics::MetricsError;

pub use knn::{KnnConfig, KnnMetric, KnnModel, KnnWeights};
pub use pca::{fit_pca, PcaTransform};
pub use search::{
    random_search, IntDist, KnnSpace, RealDist, SearchOutcome, SearchRow, SearchSpace, SearchSpec, SgdSpace,
};
pub use sgd::{Loss, Penalty, SgdConfig, SgdModel};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("n_neighbors = {k} exceeds the {n} training rows")]
    TooManyNeighbors { k: usize, n: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("feature dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite feature value at row {row}")]
    NonFinite { row: usize },
    #[error("pca: {0}")]
    Pca(String),
    #[error("search: {0}")]
    Search(String),
    #[error("model file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(ModelError::InvalidConfig(format!(
                "matrix of {rows}x{dim} needs {} values, got {}",
                rows * dim,
                data.len()
            )));
        }
        Ok(FeatureMatrix { rows, dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(ModelError::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(FeatureMatrix {
            rows: rows.len(),
            dim,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1)).take(self.rows)
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(pos) => Err(ModelError::NonFinite {
                row: pos / self.dim.max(1),
            }),
            None => Ok(()),
        }
    }

    fn quantize(&mut self) {
        quantize(&mut self.data);
    }
}

pub(crate) fn quantize(values: &mut [f64]) {
    for v in values {
        *v = f64::from(*v as f32);
    }
}

/// Model family and its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Knn(KnnConfig),
    Sgd(SgdConfig),
}

impl ModelConfig {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelConfig::Knn(_) => "knn",
            ModelConfig::Sgd(c) => match c.loss {
                Loss::Logistic => "sgd_logistic",
                Loss::Hinge => "sgd_hinge",
                Loss::ModifiedHuber => "sgd_modified_huber",
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// PCA output width; `None` passes features through unchanged.
    #[serde(default)]
    pub pca_components: Option<usize>,
    pub model: ModelConfig,
    #[serde(default)]
    pub codec: Codec,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Fitted {
    Knn(KnnModel),
    Sgd(SgdModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: PipelineConfig,
    pub feature_mode: FeatureMode,
    pub input_dim: usize,
    pub pca: Option<PcaTransform>,
    pub fitted: Fitted,
}

/// Labeled features for the four candidates of one prompt, in candidate order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGroup {
    pub group_id: String,
    pub features: Vec<Vec<f64>>,
    pub ranks: [RelevanceRank; 4],
}

pub fn stack_groups<G: std::borrow::Borrow<LabeledGroup>>(groups: &[G]) -> Result<(FeatureMatrix, Vec<RelevanceRank>)> {
    let mut rows: Vec<&[f64]> = Vec::with_capacity(groups.len() * 4);
    let mut ranks = Vec::with_capacity(groups.len() * 4);
    for g in groups {
        let g = g.borrow();
        rows.extend(g.features.iter().map(Vec::as_slice));
        ranks.extend_from_slice(&g.ranks);
    }
    Ok((FeatureMatrix::from_rows(&rows)?, ranks))
}

/// Fits the full pipeline on labeled rows.
pub fn fit_pipeline(
    features: &FeatureMatrix,
    ranks: &[RelevanceRank],
    config: &PipelineConfig,
    feature_mode: FeatureMode,
) -> Result<TrainedModel> {
    if features.rows() == 0 {
        return Err(ModelError::EmptyTrainingSet);
    }
    if ranks.len() != features.rows() {
        return Err(ModelError::InvalidConfig(format!(
            "{} labels for {} rows",
            ranks.len(),
            features.rows()
        )));
    }
    features.check_finite()?;
    let pca = match config.pca_components {
        Some(k) => Some(fit_pca(features, k)?),
        None => None,
    };
    let reduced;
    let inputs = match &pca {
        Some(t) => {
            reduced = t.apply(features)?;
            &reduced
        }
        None => features,
    };
    let fitted = match &config.model {
        ModelConfig::Knn(c) => Fitted::Knn(KnnModel::fit(inputs, ranks, c)?),
        ModelConfig::Sgd(c) => Fitted::Sgd(SgdModel::fit(inputs, ranks, c, config.codec)?),
    };
    Ok(TrainedModel {
        config: config.clone(),
        feature_mode,
        input_dim: features.dim(),
        pca,
        fitted,
    })
}

impl TrainedModel {
    pub fn codec(&self) -> Codec {
        self.config.codec
    }

    /// Per-row scores in the codec's layout.
    pub fn predict_scores(&self, features: &FeatureMatrix) -> Result<Vec<ScoreVector>> {
        if features.dim() != self.input_dim {
            return Err(ModelError::DimensionMismatch {
                expected: self.input_dim,
                got: features.dim(),
            });
        }
        let reduced;
        let inputs = match &self.pca {
            Some(t) => {
                reduced = t.apply(features)?;
                &reduced
            }
            None => features,
        };
        Ok(match &self.fitted {
            Fitted::Knn(m) => m.predict_scores(inputs, self.codec())?,
            Fitted::Sgd(m) => m.predict_scores(inputs)?,
        })
    }

    /// Grouped and per-pair readouts for each group.
    pub fn predict_groups<G: std::borrow::Borrow<LabeledGroup>>(&self, groups: &[G]) -> Result<Vec<GroupPrediction>> {
        let (features, _) = stack_groups(groups)?;
        let scores = self.predict_scores(&features)?;
        groups
            .iter()
            .zip(scores.chunks_exact(4))
            .map(|(g, s)| {
                let g = g.borrow();
                let ranked = self.codec().readout_group(s)?;
                let single = s
                    .iter()
                    .map(|v| self.codec().readout_single(v))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                Ok(GroupPrediction {
                    group_id: g.group_id.clone(),
                    truth: g.ranks,
                    ranked: ranked.try_into().expect("four candidates"),
                    single: single.try_into().expect("four candidates"),
                })
            })
            .collect()
    }
}

/// Predictions for the four candidates of one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPrediction {
    pub group_id: String,
    pub truth: [RelevanceRank; 4],
    /// Codec group readout (thermometer: permutation by summed bits).
    pub ranked: [RelevanceRank; 4],
    /// Independent per-pair readout.
    pub single: [RelevanceRank; 4],
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::seeds::{self, Stream};
    use rand::Rng;

    /// Groups whose 4 candidates sit at `rank * spacing` along the first axis
    /// plus small noise in the remaining axes.
    pub fn planted_groups(n: usize, dim: usize, spacing: f64, noise: f64, seed: u64) -> Vec<LabeledGroup> {
        (0..n)
            .map(|g| {
                let mut rng = seeds::rng(seed, Stream::Synthetic, g as u64);
                let perm = crate::corpus::candidate_order_for(&format!("g{g}"));
                let ranks = perm.map(|c| c.rank());
                let features = ranks
                    .iter()
                    .map(|r| {
                        let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-noise..noise)).collect();
                        v[0] = r.value() as f64 * spacing + rng.random_range(-noise..noise);
                        v
                    })
                    .collect();
                LabeledGroup {
                    group_id: format!("g{g}"),
                    features,
                    ranks,
                }
            })
            .collect()
    }
}
