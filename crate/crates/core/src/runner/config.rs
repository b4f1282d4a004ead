//! Declarative experiment configuration (TOML or JSON).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::SplitSpec;
use crate::embedder::{FeatureMode, DEFAULT_DIM};
use crate::encoding::Codec;
use crate::metrics::TauVariant;
use crate::models::{ModelConfig, PipelineConfig, SearchSpace, SearchSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingSpec {
    /// Hashing vectorizer computed on the fly.
    Builtin {
        #[serde(default = "default_dim")]
        dim: usize,
    },
    /// `EMB1` file with its `.keys.json` sidecar.
    External { path: PathBuf },
}

fn default_dim() -> usize {
    DEFAULT_DIM
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        EmbeddingSpec::Builtin { dim: DEFAULT_DIM }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosineSpec {
    #[serde(default = "CosineSpec::default_step")]
    pub step: f64,
    /// Tau formula maximized by the threshold search.
    #[serde(default = "CosineSpec::default_objective")]
    pub objective: TauVariant,
}

impl CosineSpec {
    pub fn default_step() -> f64 {
        0.025
    }

    fn default_objective() -> TauVariant {
        TauVariant::TauB
    }
}

impl Default for CosineSpec {
    fn default() -> Self {
        CosineSpec {
            step: Self::default_step(),
            objective: Self::default_objective(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedSpec {
    #[serde(default)]
    pub pca_components: Option<usize>,
    pub model: ModelConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSettings {
    pub space: SearchSpace,
    /// PCA widths to sample from; 0 means no PCA.
    #[serde(default = "SearchSpec::default_pca", with = "crate::models::search::pca_list")]
    pub pca_components: Vec<Option<usize>>,
    #[serde(default = "SearchSettings::default_iters")]
    pub n_iter: usize,
    #[serde(default = "SearchSettings::default_folds")]
    pub folds: usize,
}

impl SearchSettings {
    fn default_iters() -> usize {
        30
    }

    fn default_folds() -> usize {
        3
    }
}

/// What gets trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Cosine(CosineSpec),
    Fixed(FixedSpec),
    Search(SearchSettings),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSpec {
    /// Test-set resamples per run.
    #[serde(default = "BootstrapSpec::default_test")]
    pub test_resamples: usize,
    /// Training-set resamples per curve size; 0 disables.
    #[serde(default)]
    pub train_resamples: usize,
    /// Only the first this-many curve sizes get training resamples.
    #[serde(default = "BootstrapSpec::default_train_sizes")]
    pub train_sizes: usize,
}

impl BootstrapSpec {
    fn default_test() -> usize {
        1000
    }

    fn default_train_sizes() -> usize {
        6
    }
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        BootstrapSpec {
            test_resamples: Self::default_test(),
            train_resamples: 0,
            train_sizes: Self::default_train_sizes(),
        }
    }
}

fn default_split() -> SplitSpec {
    SplitSpec {
        train_fraction: 0.8,
        seed: 0,
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    #[serde(default)]
    pub embeddings: EmbeddingSpec,
    #[serde(default)]
    pub feature_mode: FeatureMode,
    #[serde(default)]
    pub codec: Codec,
    pub method: Method,
    #[serde(default = "default_split")]
    pub split: SplitSpec,
    /// Training sizes in pairs, ascending. Empty means the full training split.
    #[serde(default)]
    pub train_sizes: Vec<usize>,
    #[serde(default)]
    pub bootstrap: BootstrapSpec,
    #[serde(default)]
    pub tau_variant: TauVariant,
    /// Seed for search, subsampling and bootstrap streams.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid TOML in {path}: {source}")]
    Toml {
        path: PathBuf,
        source: Box<toml::de::Error>,
    },
    #[error("invalid JSON in {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Invalid(String),
}

impl ExperimentConfig {
    pub fn new(dataset: impl Into<PathBuf>, method: Method) -> Self {
        ExperimentConfig {
            dataset: dataset.into(),
            embeddings: EmbeddingSpec::default(),
            feature_mode: FeatureMode::default(),
            codec: Codec::default(),
            method,
            split: default_split(),
            train_sizes: Vec::new(),
            bootstrap: BootstrapSpec::default(),
            tau_variant: TauVariant::default(),
            seed: 0,
            output_dir: default_output(),
        }
    }

    /// Reads a `.json` file as JSON and anything else as TOML. Relative paths
    /// inside the file are taken relative to the file's directory.
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut config: ExperimentConfig = if is_json {
            serde_json::from_str(&text).map_err(|source| ConfigError::Json {
                path: path.to_path_buf(),
                source,
            })?
        } else {
            toml::from_str(&text).map_err(|source| ConfigError::Toml {
                path: path.to_path_buf(),
                source: Box::new(source),
            })?
        };
        if let Some(base) = path.parent() {
            config.rebase(base);
        }
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset);
        fix(&mut self.output_dir);
        if let EmbeddingSpec::External { path } = &mut self.embeddings {
            fix(path);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.split.validate().is_err() {
            return bad(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.split.train_fraction
            ));
        }
        if self.train_sizes.contains(&0) {
            return bad("train sizes must be positive".into());
        }
        if !self.train_sizes.windows(2).all(|w| w[0] < w[1]) {
            return bad(format!(
                "train sizes must be strictly ascending, got {:?}",
                self.train_sizes
            ));
        }
        if self.bootstrap.test_resamples == 0 {
            return bad("bootstrap.test_resamples must be at least 1".into());
        }
        if let EmbeddingSpec::Builtin { dim: 0 } = self.embeddings {
            return bad("embedding dimension must be positive".into());
        }
        match &self.method {
            Method::Cosine(c) if !(c.step > 0.0 && c.step.is_finite()) => {
                bad(format!("cosine step must be positive, got {}", c.step))
            }
            Method::Search(s) if s.n_iter == 0 || s.folds < 2 => bad(format!(
                "search needs n_iter >= 1 and folds >= 2, got {} and {}",
                s.n_iter, s.folds
            )),
            _ => Ok(()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Pipeline for the fixed method.
    pub fn pipeline(&self) -> Option<PipelineConfig> {
        match &self.method {
            Method::Fixed(f) => Some(PipelineConfig {
                pca_components: f.pca_components,
                model: f.model.clone(),
                codec: self.codec,
            }),
            _ => None,
        }
    }

    /// Search spec for the search method.
    pub fn search_spec(&self) -> Option<SearchSpec> {
        match &self.method {
            Method::Search(s) => Some(SearchSpec {
                space: s.space.clone(),
                pca_components: s.pca_components.clone(),
                codec: self.codec,
                n_iter: s.n_iter,
                folds: s.folds,
                seed: self.seed,
                tau_variant: self.tau_variant,
            }),
            _ => None,
        }
    }

    /// Ten log-spaced sizes from `smallest` to `largest` pairs.
    pub fn log_ladder(smallest: usize, largest: usize, points: usize) -> Vec<usize> {
        let points = points.max(2);
        let (lo, hi) = ((smallest.max(1)) as f64, (largest.max(smallest.max(1))) as f64);
        let mut out: Vec<usize> = (0..points)
            .map(|i| (lo * (hi / lo).powf(i as f64 / (points - 1) as f64)).round() as usize)
            .collect();
        out.dedup();
        out
    }
}
