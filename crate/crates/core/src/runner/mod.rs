//! Experiment orchestration: ingest, split, featurize, fit, evaluate, report.

pub mod config;
pub mod report;

use std::borrow::Borrow;
use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{self, PairGroup, RelevanceRank};
use crate::cosine_baseline::{
    classify_by_thresholds, grid_search_thresholds, similarity_histograms, Histograms, SurfacePoint, ThresholdTriple,
    HISTOGRAM_BINS,
};
use crate::embedder::{self, cosine, BuiltinVectorizer, EmbeddingSource, FeatureMode};
use crate::metrics::{
    bootstrap_many, bootstrap_train, f1_per_class, kendall_tau, mean_group_tau, BootstrapSummary, MetricReport,
    MetricsError, SizeSummary, TauVariant, METRIC_NAMES,
};
use crate::models::{
    fit_pipeline, random_search, stack_groups, GroupPrediction, LabeledGroup, PipelineConfig, SearchOutcome,
    TrainedModel,
};

pub use config::{
    BootstrapSpec, ConfigError, CosineSpec, EmbeddingSpec, ExperimentConfig, FixedSpec, Method, SearchSettings,
};
pub use report::{emit_curve, emit_run, CurveRecord, RunRecord};

/// Pipeline stage an error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Split,
    Features,
    Search,
    Fit,
    Predict,
    Metrics,
    Bootstrap,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Split => "split",
            Stage::Features => "features",
            Stage::Search => "search",
            Stage::Fit => "fit",
            Stage::Predict => "predict",
            Stage::Metrics => "metrics",
            Stage::Bootstrap => "bootstrap",
            Stage::Report => "report",
        })
    }
}

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
#[error("[{stage}] {source}")]
pub struct RunError {
    pub stage: Stage,
    #[source]
    pub source: BoxError,
}

impl RunError {
    pub fn new(stage: Stage, source: impl Into<BoxError>) -> Self {
        RunError {
            stage,
            source: source.into(),
        }
    }
}

impl From<MetricsError> for RunError {
    fn from(e: MetricsError) -> Self {
        RunError::new(Stage::Bootstrap, e)
    }
}

pub trait StageExt<T> {
    fn stage(self, stage: Stage) -> std::result::Result<T, RunError>;
}

impl<T, E: Into<BoxError>> StageExt<T> for std::result::Result<T, E> {
    fn stage(self, stage: Stage) -> std::result::Result<T, RunError> {
        self.map_err(|e| RunError::new(stage, e))
    }
}

pub type Result<T> = std::result::Result<T, RunError>;

/// Wall-clock seconds per stage. Kept apart from the record so records stay
/// byte-identical across runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub stages: Vec<(String, f64)>,
}

impl Timings {
    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stages.push((name.to_string(), start.elapsed().as_secs_f64()));
        out
    }
}

/// Loaded, split and featurized data shared by every run of a config.
pub struct Prepared {
    pub source: EmbeddingSource,
    pub instances: usize,
    pub rejected: usize,
    /// Train and test units. For the cosine method each candidate's feature
    /// vector is its single prompt/paper similarity.
    pub train: Vec<LabeledGroup>,
    pub test: Vec<LabeledGroup>,
    pub test_set_sha256: String,
}

/// SHA-256 over the sorted group ids, one per line.
pub fn group_set_hash<G: Borrow<LabeledGroup>>(groups: &[G]) -> String {
    let mut ids: Vec<&str> = groups.iter().map(|g| g.borrow().group_id.as_str()).collect();
    ids.sort_unstable();
    let mut h = Sha256::new();
    for id in ids {
        h.update(id.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn embedding_source(spec: &EmbeddingSpec) -> Result<EmbeddingSource> {
    match spec {
        EmbeddingSpec::Builtin { dim } => Ok(EmbeddingSource::Builtin(
            BuiltinVectorizer::new(*dim).stage(Stage::Config)?,
        )),
        EmbeddingSpec::External { path } => Ok(EmbeddingSource::Store(
            embedder::load_store(path).stage(Stage::Features)?,
        )),
    }
}

/// Feature units for `groups`: pair features for learned methods, or
/// prompt/paper cosine for the threshold baseline.
pub fn featurize(
    groups: &[PairGroup],
    source: &EmbeddingSource,
    mode: FeatureMode,
    method: &Method,
) -> Result<Vec<LabeledGroup>> {
    let cosine_only = matches!(method, Method::Cosine(_));
    groups
        .par_iter()
        .map(|g| {
            let features = g
                .pairs
                .iter()
                .map(|p| {
                    if cosine_only {
                        let u = source.prompt_vector(p)?;
                        let v = source.paper_vector(p)?;
                        Ok(vec![cosine(&u, &v)?])
                    } else {
                        embedder::pair_features(p, source, mode)
                    }
                })
                .collect::<std::result::Result<Vec<_>, embedder::EmbedError>>()?;
            Ok(LabeledGroup {
                group_id: g.group_id.clone(),
                features,
                ranks: g.ranks(),
            })
        })
        .collect::<std::result::Result<Vec<_>, embedder::EmbedError>>()
        .stage(Stage::Features)
}

pub fn prepare(config: &ExperimentConfig, timings: &mut Timings) -> Result<Prepared> {
    config.validate().stage(Stage::Config)?;
    let loaded = timings.time("ingest", || corpus::load_dataset(&config.dataset).stage(Stage::Ingest))?;
    let source = embedding_source(&config.embeddings)?;
    let (train, test) = corpus::split(&loaded.groups, &config.split).stage(Stage::Split)?;
    let (train, test) = timings.time("features", || -> Result<_> {
        Ok((
            featurize(&train, &source, config.feature_mode, &config.method)?,
            featurize(&test, &source, config.feature_mode, &config.method)?,
        ))
    })?;
    let test_set_sha256 = group_set_hash(&test);
    Ok(Prepared {
        source,
        instances: loaded.groups.len(),
        rejected: loaded.rejected.len(),
        train,
        test,
        test_set_sha256,
    })
}

/// Thresholds learned by the cosine baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSummary {
    pub triple: ThresholdTriple,
    pub train_tau: f64,
    pub step: f64,
    pub objective: TauVariant,
}

/// A fitted method.
#[derive(Debug, Clone)]
pub enum Fitted {
    Thresholds {
        summary: ThresholdSummary,
        surface: Vec<SurfacePoint>,
    },
    Model {
        model: Box<TrainedModel>,
        search: Option<SearchOutcome>,
    },
}

fn similarity_rows<G: Borrow<LabeledGroup>>(groups: &[G]) -> Vec<(f64, RelevanceRank)> {
    groups
        .iter()
        .flat_map(|g| {
            let g = g.borrow();
            g.features.iter().zip(g.ranks).map(|(f, r)| (f[0], r))
        })
        .collect()
}

/// Fits the configured method on `train`.
pub fn fit_method<G: Borrow<LabeledGroup> + Sync>(config: &ExperimentConfig, train: &[G]) -> Result<Fitted> {
    match &config.method {
        Method::Cosine(c) => {
            let search = grid_search_thresholds(&similarity_rows(train), c.step, c.objective).stage(Stage::Fit)?;
            Ok(Fitted::Thresholds {
                summary: ThresholdSummary {
                    triple: search.triple,
                    train_tau: search.train_tau,
                    step: search.step,
                    objective: search.variant,
                },
                surface: search.surface,
            })
        }
        Method::Fixed(_) => {
            let pipeline = config.pipeline().expect("fixed method");
            Ok(Fitted::Model {
                model: Box::new(fit_model(&pipeline, train, config.feature_mode)?),
                search: None,
            })
        }
        Method::Search(_) => {
            let spec = config.search_spec().expect("search method");
            let owned: Vec<LabeledGroup> = train.iter().map(|g| g.borrow().clone()).collect();
            let outcome = random_search(&spec, &owned, config.feature_mode).stage(Stage::Search)?;
            let model = fit_model(&outcome.best, train, config.feature_mode)?;
            Ok(Fitted::Model {
                model: Box::new(model),
                search: Some(outcome),
            })
        }
    }
}

fn fit_model<G: Borrow<LabeledGroup>>(
    pipeline: &PipelineConfig,
    train: &[G],
    mode: FeatureMode,
) -> Result<TrainedModel> {
    let (x, y) = stack_groups(train).stage(Stage::Fit)?;
    fit_pipeline(&x, &y, pipeline, mode).stage(Stage::Fit)
}

pub fn predict<G: Borrow<LabeledGroup>>(fitted: &Fitted, test: &[G]) -> Result<Vec<GroupPrediction>> {
    match fitted {
        Fitted::Thresholds { summary, .. } => Ok(test
            .iter()
            .map(|g| {
                let g = g.borrow();
                let ranked: [RelevanceRank; 4] =
                    std::array::from_fn(|i| classify_by_thresholds(g.features[i][0], &summary.triple));
                GroupPrediction {
                    group_id: g.group_id.clone(),
                    truth: g.ranks,
                    ranked,
                    single: ranked,
                }
            })
            .collect()),
        Fitted::Model { model, .. } => model.predict_groups(test).stage(Stage::Predict),
    }
}

/// Tau on the grouped readout, per-class scores on the per-pair readout.
pub fn prediction_metrics<P: Borrow<GroupPrediction>>(
    preds: &[P],
    variant: TauVariant,
) -> std::result::Result<MetricReport, MetricsError> {
    let mut ranked = Vec::with_capacity(preds.len() * 4);
    let mut single = Vec::with_capacity(preds.len() * 4);
    let mut truth = Vec::with_capacity(preds.len() * 4);
    for p in preds {
        let p = p.borrow();
        ranked.extend_from_slice(&p.ranked);
        single.extend_from_slice(&p.single);
        truth.extend_from_slice(&p.truth);
    }
    Ok(MetricReport {
        tau: kendall_tau(&ranked, &truth, variant)?,
        classes: f1_per_class(&single, &truth)?,
        n: truth.len(),
    })
}

/// Mean of within-group tau values.
pub fn per_group_tau(preds: &[GroupPrediction], variant: TauVariant) -> std::result::Result<f64, MetricsError> {
    let pairs: Vec<(&[RelevanceRank], &[RelevanceRank])> =
        preds.iter().map(|p| (&p.ranked[..], &p.truth[..])).collect();
    mean_group_tau(&pairs, variant)
}

/// Everything one run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: RunRecord,
    pub timings: Timings,
    pub predictions: Vec<GroupPrediction>,
    pub fitted: Fitted,
    pub histograms: Option<Histograms>,
}

fn method_names(config: &ExperimentConfig, fitted: &Fitted) -> (String, String) {
    match fitted {
        Fitted::Thresholds { .. } => ("cosine".into(), "none".into()),
        Fitted::Model { model, .. } => (model.config.model.kind_name().into(), config.codec.to_string()),
    }
}

/// Fit on `train`, evaluate and bootstrap on the prepared test set.
pub fn run_on<G: Borrow<LabeledGroup> + Sync>(
    config: &ExperimentConfig,
    prepared: &Prepared,
    train: &[G],
    requested_pairs: Option<usize>,
    timings: &mut Timings,
) -> Result<RunOutput> {
    let fitted = timings.time("fit", || fit_method(config, train))?;
    evaluate_fitted(config, prepared, fitted, train.len() * 4, requested_pairs, timings)
}

/// Evaluates an already fitted method on the prepared test set.
pub fn evaluate_fitted(
    config: &ExperimentConfig,
    prepared: &Prepared,
    fitted: Fitted,
    realized_pairs: usize,
    requested_pairs: Option<usize>,
    timings: &mut Timings,
) -> Result<RunOutput> {
    let predictions = timings.time("predict", || predict(&fitted, &prepared.test))?;
    let test = prediction_metrics(&predictions, config.tau_variant).stage(Stage::Metrics)?;
    let test_per_group_tau = per_group_tau(&predictions, config.tau_variant).stage(Stage::Metrics)?;
    let variant = config.tau_variant;
    let bootstrap = timings.time("bootstrap", || {
        bootstrap_many(
            &predictions,
            config.bootstrap.test_resamples,
            config.seed,
            &METRIC_NAMES,
            |s| {
                prediction_metrics(s, variant)
                    .map(|m| m.scalars().to_vec())
                    .unwrap_or_else(|_| vec![0.0; 5])
            },
        )
        .stage(Stage::Bootstrap)
    })?;
    let histograms = match &fitted {
        Fitted::Thresholds { .. } => {
            let mut rows = similarity_rows(&prepared.train);
            rows.extend(similarity_rows(&prepared.test));
            Some(similarity_histograms(&rows, HISTOGRAM_BINS))
        }
        Fitted::Model { .. } => None,
    };
    let (model, encoding) = method_names(config, &fitted);
    let (thresholds, search, pipeline) = match &fitted {
        Fitted::Thresholds { summary, .. } => (Some(summary.clone()), None, None),
        Fitted::Model { model, search } => (None, search.clone(), Some(model.config.clone())),
    };
    let record = RunRecord {
        engine_version: crate::ENGINE_VERSION.to_string(),
        config: config.clone(),
        model,
        encoding,
        embedding_provenance: prepared.source.provenance(),
        instances: prepared.instances,
        rejected_records: prepared.rejected,
        train_instances: prepared.train.len(),
        test_instances: prepared.test.len(),
        test_set_sha256: prepared.test_set_sha256.clone(),
        requested_train_pairs: requested_pairs,
        realized_train_pairs: realized_pairs,
        split_seed: config.split.seed,
        seed: config.seed,
        thresholds,
        search,
        pipeline,
        test,
        test_per_group_tau,
        bootstrap,
    };
    Ok(RunOutput {
        record,
        timings: timings.clone(),
        predictions,
        fitted,
        histograms,
    })
}

/// Runs the config on its full training split.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    let mut timings = Timings::default();
    let prepared = prepare(config, &mut timings)?;
    run_on(config, &prepared, &prepared.train, None, &mut timings)
}

/// One run per training size against a fixed test set.
#[derive(Debug, Clone)]
pub struct CurveOutput {
    pub record: CurveRecord,
    pub timings: Timings,
}

pub fn learning_curve(config: &ExperimentConfig) -> Result<CurveOutput> {
    let mut timings = Timings::default();
    let prepared = prepare(config, &mut timings)?;
    let sizes = if config.train_sizes.is_empty() {
        vec![prepared.train.len() * 4]
    } else {
        config.train_sizes.clone()
    };
    let mut points = Vec::with_capacity(sizes.len());
    for &size in &sizes {
        let subset = corpus::subsample(&prepared.train, size, config.seed).stage(Stage::Split)?;
        let out = run_on(config, &prepared, &subset, Some(size), &mut timings)?;
        points.push(out.record);
    }
    let train_bootstrap = if config.bootstrap.train_resamples > 0 {
        let n = config.bootstrap.train_sizes.min(sizes.len());
        timings.time("train_bootstrap", || train_bootstrap(config, &prepared, &sizes[..n]))?
    } else {
        Vec::new()
    };
    Ok(CurveOutput {
        record: CurveRecord {
            engine_version: crate::ENGINE_VERSION.to_string(),
            config: config.clone(),
            test_set_sha256: prepared.test_set_sha256.clone(),
            points,
            train_bootstrap,
        },
        timings,
    })
}

fn train_bootstrap(config: &ExperimentConfig, prepared: &Prepared, sizes: &[usize]) -> Result<Vec<SizeSummary>> {
    bootstrap_train(
        &prepared.train,
        sizes,
        config.bootstrap.train_resamples,
        config.seed,
        &METRIC_NAMES,
        |draw: &[LabeledGroup]| -> Result<Vec<f64>> {
            let fitted = fit_method(config, draw)?;
            let preds = predict(&fitted, &prepared.test)?;
            Ok(prediction_metrics(&preds, config.tau_variant)
                .stage(Stage::Metrics)?
                .scalars()
                .to_vec())
        },
    )
}

/// Loads the config's data and evaluates a saved model on its test split.
pub fn evaluate_model(config: &ExperimentConfig, model: TrainedModel) -> Result<RunOutput> {
    let mut timings = Timings::default();
    let prepared = prepare(config, &mut timings)?;
    let realized = prepared.train.len() * 4;
    let fitted = Fitted::Model {
        model: Box::new(model),
        search: None,
    };
    evaluate_fitted(config, &prepared, fitted, realized, None, &mut timings)
}

/// Summary lookup by metric name.
pub fn summary<'a>(summaries: &'a [BootstrapSummary], metric: &str) -> Option<&'a BootstrapSummary> {
    summaries.iter().find(|s| s.metric == metric)
}
