//! Randomized hyperparameter search with instance-level k-fold CV.
//!
//! Every iteration draws one value per hyperparameter independently and
//! uniformly from its list or distribution, then scores the candidate by the
//! mean Kendall's tau over held-out folds. Iteration `i` draws from its own
//! seeded stream and the table is reduced in iteration order, so results do
//! not depend on how iterations are scheduled.

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    fit_pipeline, stack_groups, KnnConfig, KnnMetric, KnnWeights, LabeledGroup, Loss, ModelConfig, ModelError, Penalty,
    PipelineConfig, Result, SgdConfig,
};
use crate::corpus::{self, RelevanceRank};
use crate::embedder::FeatureMode;
use crate::encoding::Codec;
use crate::metrics::{kendall_tau, TauVariant};
use crate::seeds::{self, Stream};

/// Real-valued hyperparameter distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RealDist {
    /// Uniform on `[low, high)`.
    Uniform {
        low: f64,
        high: f64,
    },
    Choice(Vec<f64>),
}

impl RealDist {
    fn sample<R: Rng>(&self, rng: &mut R) -> Result<f64> {
        match self {
            RealDist::Uniform { low, high } if low < high => Ok(rng.random_range(*low..*high)),
            RealDist::Uniform { low, high } => Err(ModelError::Search(format!("empty range [{low}, {high})"))),
            RealDist::Choice(v) => v.choose(rng).copied().ok_or_else(|| empty("real choice")),
        }
    }
}

/// Integer hyperparameter distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntDist {
    /// Uniform on `low..high` (high exclusive).
    Range {
        low: usize,
        high: usize,
    },
    Choice(Vec<usize>),
}

impl IntDist {
    fn sample<R: Rng>(&self, rng: &mut R) -> Result<usize> {
        match self {
            IntDist::Range { low, high } if low < high => Ok(rng.random_range(*low..*high)),
            IntDist::Range { low, high } => Err(ModelError::Search(format!("empty range {low}..{high}"))),
            IntDist::Choice(v) => v.choose(rng).copied().ok_or_else(|| empty("integer choice")),
        }
    }
}

fn empty(what: &str) -> ModelError {
    ModelError::Search(format!("{what} grid is empty"))
}

fn choose<T: Copy, R: Rng>(values: &[T], rng: &mut R, what: &str) -> Result<T> {
    values.choose(rng).copied().ok_or_else(|| empty(what))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnSpace {
    pub n_neighbors: IntDist,
    pub weights: Vec<KnnWeights>,
    pub metric: Vec<KnnMetric>,
}

impl Default for KnnSpace {
    /// `n_neighbors` 1..=20, both weightings, Euclidean and Manhattan.
    fn default() -> Self {
        KnnSpace {
            n_neighbors: IntDist::Range { low: 1, high: 21 },
            weights: vec![KnnWeights::Uniform, KnnWeights::Distance],
            metric: vec![KnnMetric::Euclidean, KnnMetric::Manhattan],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdSpace {
    pub loss: Vec<Loss>,
    pub alpha: RealDist,
    pub penalty: Vec<Penalty>,
    pub max_iter: IntDist,
}

impl Default for SgdSpace {
    /// Hinge/logistic/modified-Huber, `alpha ~ U[0.0001, 0.1001)`, all three
    /// penalties, `max_iter` in `100..1000`.
    fn default() -> Self {
        SgdSpace {
            loss: vec![Loss::Hinge, Loss::Logistic, Loss::ModifiedHuber],
            alpha: RealDist::Uniform {
                low: 0.0001,
                high: 0.1001,
            },
            penalty: vec![Penalty::L2, Penalty::L1, Penalty::Elasticnet],
            max_iter: IntDist::Range { low: 100, high: 1000 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchSpace {
    Knn(KnnSpace),
    Sgd(SgdSpace),
}

/// Serializes PCA options with 0 standing for "no PCA", since TOML arrays
/// cannot hold nulls.
pub mod pca_list {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Option<usize>], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|o| o.unwrap_or(0)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Option<usize>>, D::Error> {
        Ok(Vec::<usize>::deserialize(d)?
            .into_iter()
            .map(|k| (k > 0).then_some(k))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    pub space: SearchSpace,
    /// PCA widths to sample from; `None` means no PCA.
    #[serde(default = "SearchSpec::default_pca", with = "pca_list")]
    pub pca_components: Vec<Option<usize>>,
    #[serde(default)]
    pub codec: Codec,
    #[serde(default = "SearchSpec::default_iters")]
    pub n_iter: usize,
    #[serde(default = "SearchSpec::default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tau_variant: TauVariant,
}

impl SearchSpec {
    pub fn new(space: SearchSpace, codec: Codec, seed: u64) -> Self {
        SearchSpec {
            space,
            pca_components: Self::default_pca(),
            codec,
            n_iter: Self::default_iters(),
            folds: Self::default_folds(),
            seed,
            tau_variant: TauVariant::default(),
        }
    }

    /// `[2, 50, 100, 200, None]`.
    pub fn default_pca() -> Vec<Option<usize>> {
        vec![Some(2), Some(50), Some(100), Some(200), None]
    }

    fn default_iters() -> usize {
        30
    }

    fn default_folds() -> usize {
        3
    }

    /// Draws the configuration for iteration `iter`.
    pub fn sample(&self, iter: usize) -> Result<PipelineConfig> {
        let mut rng = seeds::rng(self.seed, Stream::SearchSample, iter as u64);
        let model = match &self.space {
            SearchSpace::Knn(s) => ModelConfig::Knn(KnnConfig {
                n_neighbors: s.n_neighbors.sample(&mut rng)?,
                weights: choose(&s.weights, &mut rng, "weights")?,
                metric: choose(&s.metric, &mut rng, "metric")?,
            }),
            SearchSpace::Sgd(s) => {
                let loss = choose(&s.loss, &mut rng, "loss")?;
                let alpha = s.alpha.sample(&mut rng)?;
                let penalty = choose(&s.penalty, &mut rng, "penalty")?;
                let max_iter = s.max_iter.sample(&mut rng)?;
                ModelConfig::Sgd(
                    SgdConfig::new(alpha, max_iter, self.seed)
                        .with_loss(loss)
                        .with_penalty(penalty),
                )
            }
        };
        let pca_components = choose(&self.pca_components, &mut rng, "pca")?;
        Ok(PipelineConfig {
            pca_components,
            model,
            codec: self.codec,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRow {
    pub iteration: usize,
    pub config: PipelineConfig,
    pub fold_scores: Vec<f64>,
    pub mean_score: f64,
    pub std_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best_iteration: usize,
    pub best: PipelineConfig,
    pub best_score: f64,
    pub table: Vec<SearchRow>,
}

/// Mean held-out Kendall's tau of `config` over instance-level folds.
pub fn cross_validate(
    config: &PipelineConfig,
    groups: &[LabeledGroup],
    folds: &[Vec<usize>],
    feature_mode: FeatureMode,
    variant: TauVariant,
) -> Result<Vec<f64>> {
    folds
        .par_iter()
        .map(|held| {
            if held.is_empty() {
                return Err(ModelError::Search("empty fold".into()));
            }
            let mut is_held = vec![false; groups.len()];
            held.iter().for_each(|&i| is_held[i] = true);
            let train: Vec<&LabeledGroup> = groups
                .iter()
                .zip(&is_held)
                .filter(|(_, h)| !**h)
                .map(|(g, _)| g)
                .collect();
            if train.is_empty() {
                return Err(ModelError::Search("empty training fold".into()));
            }
            let test: Vec<&LabeledGroup> = held.iter().map(|&i| &groups[i]).collect();
            let (x, y) = stack_groups(&train)?;
            let model = fit_pipeline(&x, &y, config, feature_mode)?;
            let preds = model.predict_groups(&test)?;
            let pred: Vec<RelevanceRank> = preds.iter().flat_map(|p| p.ranked).collect();
            let truth: Vec<RelevanceRank> = preds.iter().flat_map(|p| p.truth).collect();
            Ok(kendall_tau(&pred, &truth, variant)?.tau)
        })
        .collect()
}

/// Runs the search and returns the best configuration (first on ties)
/// together with the full score table.
pub fn random_search(spec: &SearchSpec, groups: &[LabeledGroup], feature_mode: FeatureMode) -> Result<SearchOutcome> {
    if spec.n_iter == 0 {
        return Err(ModelError::Search("n_iter must be at least 1".into()));
    }
    if spec.folds < 2 {
        return Err(ModelError::Search("need at least 2 folds".into()));
    }
    let folds = corpus::kfold_indices(groups.len(), spec.folds, spec.seed)?;
    let configs = (0..spec.n_iter).map(|i| spec.sample(i)).collect::<Result<Vec<_>>>()?;
    let table = configs
        .into_par_iter()
        .enumerate()
        .map(|(iteration, config)| {
            let fold_scores = cross_validate(&config, groups, &folds, feature_mode, spec.tau_variant)?;
            let n = fold_scores.len() as f64;
            let mean_score = fold_scores.iter().sum::<f64>() / n;
            let std_score = (fold_scores.iter().map(|s| (s - mean_score).powi(2)).sum::<f64>() / n).sqrt();
            Ok(SearchRow {
                iteration,
                config,
                fold_scores,
                mean_score,
                std_score,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best_row = table.iter().fold(
        &table[0],
        |best, row| if row.mean_score > best.mean_score { row } else { best },
    );
    Ok(SearchOutcome {
        best_iteration: best_row.iteration,
        best: best_row.config.clone(),
        best_score: best_row.mean_score,
        table,
    })
}
