use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use relbench::corpus::{self, load_dataset};
use relbench::embedder::{build_builtin_store, save_store, BuiltinVectorizer, FeatureMode, DEFAULT_DIM};
use relbench::metrics::TauVariant;
use relbench::models::persist::load_model;
use relbench::models::{
    KnnConfig, KnnMetric, KnnSpace, KnnWeights, Loss, ModelConfig, Penalty, SearchSpace, SearchSpec, SgdConfig,
    SgdSpace,
};
use relbench::runner::report::{load_records, metrics_rows, METRICS_HEADER};
use relbench::runner::{
    emit_curve, emit_run, evaluate_model, learning_curve, run_experiment, summary, CosineSpec, EmbeddingSpec,
    ExperimentConfig, FixedSpec, Method, RunOutput, SearchSettings,
};
use relbench::Codec;

#[derive(Parser)]
#[command(name = "relbench", version, about = "Relevance-ranking benchmark engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset and optionally write it as pair-level CSV.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Embed a dataset with the built-in vectorizer into an EMB1 file.
    Embed {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = DEFAULT_DIM)]
        dim: usize,
    },
    /// Learn cosine-similarity thresholds and evaluate them.
    BaselineCosine {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = CosineSpec::default_step())]
        step: f64,
        /// Tau formula the threshold search maximizes.
        #[arg(long, default_value = "tau_b")]
        objective: TauVariant,
    },
    /// Randomized hyperparameter search with k-fold CV, then fit and evaluate the best.
    Tune {
        #[command(flatten)]
        common: CommonArgs,
        /// Model family to search: knn or sgd.
        #[arg(long, default_value = "sgd")]
        family: String,
        #[arg(long, default_value_t = 30)]
        iters: usize,
        #[arg(long, default_value_t = 3)]
        folds: usize,
    },
    /// Fit one configuration, evaluate it and save the model.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Evaluate a saved model on the test split.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        model_file: PathBuf,
    },
    /// Learning curve over training sizes with a fixed test set.
    Curve {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated training sizes in pairs.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        /// Training-set resamples for the first sizes (0 disables).
        #[arg(long)]
        train_bootstrap: Option<usize>,
    },
    /// Print the metrics table of a report.json or curve.json.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Run whatever the config file describes.
    Run {
        #[command(flatten)]
        common: CommonArgs,
    },
}

/// Flags shared by every experiment command; they override config-file keys.
#[derive(Args)]
struct CommonArgs {
    /// TOML or JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset (JSON lines, or pair CSV with a .csv extension).
    #[arg(long)]
    data: Option<PathBuf>,
    /// EMB1 embedding file; the built-in vectorizer is used when absent.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    feature_mode: Option<FeatureMode>,
    #[arg(long)]
    codec: Option<Codec>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    tau_variant: Option<TauVariant>,
    /// Test-set bootstrap resamples.
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A single model configuration given on the command line.
#[derive(Args)]
struct ModelArgs {
    /// knn, sgd_logistic, sgd_hinge or sgd_modified_huber.
    #[arg(long)]
    model: Option<String>,
    /// PCA width (omit for none).
    #[arg(long)]
    pca: Option<usize>,
    #[arg(long, default_value_t = 16)]
    k: usize,
    #[arg(long, default_value = "distance")]
    weights: KnnWeights,
    #[arg(long, default_value = "euclidean")]
    metric: KnnMetric,
    #[arg(long, default_value_t = 0.0365)]
    alpha: f64,
    #[arg(long, default_value_t = 184)]
    max_iter: usize,
    #[arg(long, default_value = "l2")]
    penalty: Penalty,
}

impl ModelArgs {
    fn method(&self) -> anyhow::Result<Option<Method>> {
        let Some(name) = &self.model else {
            return Ok(None);
        };
        let model = match name.as_str() {
            "knn" => ModelConfig::Knn(
                KnnConfig::new(self.k)
                    .with_weights(self.weights)
                    .with_metric(self.metric),
            ),
            other => {
                let loss: Loss = match other.strip_prefix("sgd_") {
                    Some(l) => l.parse().map_err(anyhow::Error::msg)?,
                    None => bail!("unknown model `{other}`"),
                };
                ModelConfig::Sgd(
                    SgdConfig::new(self.alpha, self.max_iter, 0)
                        .with_loss(loss)
                        .with_penalty(self.penalty),
                )
            }
        };
        Ok(Some(Method::Fixed(FixedSpec {
            pca_components: self.pca,
            model,
        })))
    }
}

fn build_config(common: &CommonArgs, method: Option<Method>) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::from_path(path).map_err(|e| anyhow::anyhow!("[config] {e}"))?,
        None => {
            let data = common
                .data
                .clone()
                .context("[config] either --config or --data is required")?;
            let method = match &method {
                Some(m) => m.clone(),
                None => bail!("[config] no method given; pass --config or model flags"),
            };
            ExperimentConfig::new(data, method)
        }
    };
    if let Some(m) = method {
        config.method = m;
    }
    if let Some(d) = &common.data {
        config.dataset = d.clone();
    }
    if let Some(p) = &common.embeddings {
        config.embeddings = EmbeddingSpec::External { path: p.clone() };
    } else if let Some(dim) = common.dim {
        config.embeddings = EmbeddingSpec::Builtin { dim };
    }
    if let Some(v) = common.feature_mode {
        config.feature_mode = v;
    }
    if let Some(v) = common.codec {
        config.codec = v;
    }
    if let Some(v) = common.seed {
        config.seed = v;
    }
    if let Some(v) = common.split_seed {
        config.split.seed = v;
    }
    if let Some(v) = common.train_fraction {
        config.split.train_fraction = v;
    }
    if let Some(v) = common.tau_variant {
        config.tau_variant = v;
    }
    if let Some(v) = common.bootstrap {
        config.bootstrap.test_resamples = v;
    }
    if let Some(v) = &common.out {
        config.output_dir = v.clone();
    }
    config.validate().map_err(|e| anyhow::anyhow!("[config] {e}"))?;
    Ok(config)
}

fn print_run(out: &RunOutput) {
    let r = &out.record;
    println!(
        "model={} encoding={} train_pairs={} test_pairs={}",
        r.model, r.encoding, r.realized_train_pairs, r.test.n
    );
    if let Some(t) = &r.thresholds {
        println!(
            "thresholds=[{}, {}, {}] train_tau={:.4}",
            t.triple.t1, t.triple.t2, t.triple.t3, t.train_tau
        );
    }
    if let Some(s) = &r.search {
        println!("search best_iteration={} cv_tau={:.4}", s.best_iteration, s.best_score);
    }
    for name in relbench::metrics::METRIC_NAMES {
        if let Some(s) = summary(&r.bootstrap, name) {
            println!("{name}: {:.4} ± {:.4}", s.mean, s.se);
        }
    }
    println!("test kendall_tau (point) = {:.4}", r.test.tau.tau);
}

fn run_and_emit(config: &ExperimentConfig) -> anyhow::Result<()> {
    let out = run_experiment(config)?;
    emit_run(&out, &config.output_dir)?;
    print_run(&out);
    println!("wrote {}", config.output_dir.display());
    Ok(())
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Ingest { input, output } => {
            let loaded = load_dataset(&input).map_err(|e| anyhow::anyhow!("[ingest] {e}"))?;
            for r in &loaded.rejected {
                eprintln!("line {}: {}", r.line, r.reason);
            }
            println!(
                "{} instances, {} pairs, {} rejected",
                loaded.groups.len(),
                loaded.groups.len() * 4,
                loaded.rejected.len()
            );
            if let Some(path) = output {
                let pairs: Vec<_> = loaded.groups.iter().flat_map(|g| g.pairs.iter().cloned()).collect();
                let file = File::create(&path).with_context(|| format!("[ingest] cannot create {}", path.display()))?;
                corpus::write_pairs_csv(BufWriter::new(file), &pairs).map_err(|e| anyhow::anyhow!("[ingest] {e}"))?;
            }
            Ok(())
        }
        Command::Embed { input, output, dim } => {
            let loaded = load_dataset(&input).map_err(|e| anyhow::anyhow!("[ingest] {e}"))?;
            let vectorizer = BuiltinVectorizer::new(dim).map_err(|e| anyhow::anyhow!("[embed] {e}"))?;
            let store = build_builtin_store(&loaded.groups, &vectorizer).map_err(|e| anyhow::anyhow!("[embed] {e}"))?;
            save_store(&store, &output).map_err(|e| anyhow::anyhow!("[embed] {e}"))?;
            println!("{} rows of dim {dim} -> {}", store.len(), output.display());
            Ok(())
        }
        Command::BaselineCosine {
            common,
            step,
            objective,
        } => {
            let config = build_config(&common, Some(Method::Cosine(CosineSpec { step, objective })))?;
            run_and_emit(&config)
        }
        Command::Tune {
            common,
            family,
            iters,
            folds,
        } => {
            let space = match family.as_str() {
                "knn" => SearchSpace::Knn(KnnSpace::default()),
                "sgd" => SearchSpace::Sgd(SgdSpace::default()),
                other => bail!("[config] unknown search family `{other}` (expected knn|sgd)"),
            };
            let method = Method::Search(SearchSettings {
                space,
                pca_components: SearchSpec::default_pca(),
                n_iter: iters,
                folds,
            });
            let config = build_config(&common, Some(method))?;
            run_and_emit(&config)
        }
        Command::Train { common, model } => {
            let config = build_config(&common, model.method()?)?;
            if !matches!(config.method, Method::Fixed(_)) {
                bail!("[config] train needs a fixed model (use --model or a config with method = \"fixed\")");
            }
            run_and_emit(&config)
        }
        Command::Eval { common, model_file } => {
            let model = load_model(&model_file).map_err(|e| anyhow::anyhow!("[fit] {e}"))?;
            let method = Method::Fixed(FixedSpec {
                pca_components: model.config.pca_components,
                model: model.config.model.clone(),
            });
            let mut config = build_config(&common, Some(method))?;
            config.codec = model.config.codec;
            config.feature_mode = model.feature_mode;
            let out = evaluate_model(&config, model)?;
            emit_run(&out, &config.output_dir)?;
            print_run(&out);
            Ok(())
        }
        Command::Curve {
            common,
            model,
            sizes,
            train_bootstrap,
        } => {
            let mut config = build_config(&common, model.method()?)?;
            if !sizes.is_empty() {
                config.train_sizes = sizes;
            }
            if let Some(n) = train_bootstrap {
                config.bootstrap.train_resamples = n;
            }
            config.validate().map_err(|e| anyhow::anyhow!("[config] {e}"))?;
            let out = learning_curve(&config)?;
            emit_curve(&out, &config.output_dir)?;
            for p in &out.record.points {
                let tau = summary(&p.bootstrap, "kendall_tau").expect("tau summary");
                println!("size={} tau={:.4} ± {:.4}", p.realized_train_pairs, tau.mean, tau.se);
            }
            println!("wrote {}", config.output_dir.display());
            Ok(())
        }
        Command::Report { input, format } => {
            let records = load_records(&input)?;
            match format.as_str() {
                "csv" => {
                    let mut w = csv::Writer::from_writer(io::stdout());
                    w.write_record(METRICS_HEADER)?;
                    for r in &records {
                        for row in metrics_rows(r) {
                            w.write_record(&row)?;
                        }
                    }
                    w.flush()?;
                }
                "json" => println!("{}", serde_json::to_string_pretty(&records)?),
                other => bail!("[report] unknown format `{other}` (expected csv|json)"),
            }
            Ok(())
        }
        Command::Run { common } => {
            let config = build_config(&common, None)?;
            if config.train_sizes.is_empty() {
                run_and_emit(&config)
            } else {
                let out = learning_curve(&config)?;
                emit_curve(&out, &config.output_dir)?;
                println!("wrote {}", config.output_dir.display());
                Ok(())
            }
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("relbench: {e}");
            ExitCode::FAILURE
        }
    }
}
