//! Run records and the files written for them.
//!
//! Per run directory:
//!
//! - `report.json`: the full [`RunRecord`] (or [`CurveRecord`] as `curve.json`)
//! - `config.toml`: the effective configuration
//! - `metrics.csv`: `model,encoding,train_size,metric,mean,se`
//! - `predictions.csv`: per-candidate truth and both readouts
//! - `search.csv`, `model.rvm`: learned methods only
//! - `surface.csv`, `histograms.csv`: cosine baseline only
//! - `timings.json`: wall-clock seconds per stage (not deterministic)

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CurveOutput, ExperimentConfig, Fitted, Result, RunOutput, Stage, StageExt, ThresholdSummary, Timings};
use crate::cosine_baseline::{Histograms, SurfacePoint};
use crate::metrics::{BootstrapSummary, MetricReport, SizeSummary};
use crate::models::persist::save_model;
use crate::models::{GroupPrediction, PipelineConfig, SearchOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub engine_version: String,
    pub config: ExperimentConfig,
    pub model: String,
    pub encoding: String,
    pub embedding_provenance: String,
    pub instances: usize,
    pub rejected_records: usize,
    pub train_instances: usize,
    pub test_instances: usize,
    pub test_set_sha256: String,
    pub requested_train_pairs: Option<usize>,
    pub realized_train_pairs: usize,
    pub split_seed: u64,
    pub seed: u64,
    pub thresholds: Option<ThresholdSummary>,
    /// Includes the mean CV score of every sampled configuration.
    pub search: Option<SearchOutcome>,
    /// Effective pipeline of learned methods.
    pub pipeline: Option<PipelineConfig>,
    /// Point estimate on the full test set.
    pub test: MetricReport,
    pub test_per_group_tau: f64,
    pub bootstrap: Vec<BootstrapSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub engine_version: String,
    pub config: ExperimentConfig,
    /// Identical for every point by construction.
    pub test_set_sha256: String,
    pub points: Vec<RunRecord>,
    pub train_bootstrap: Vec<SizeSummary>,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).stage(Stage::Report)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).stage(Stage::Report)?;
    text.push('\n');
    fs::write(path, text).stage(Stage::Report)
}

/// `model,encoding,train_size,metric,mean,se` rows for the test bootstrap.
pub fn metrics_rows(record: &RunRecord) -> Vec<[String; 6]> {
    record
        .bootstrap
        .iter()
        .map(|s| {
            [
                record.model.clone(),
                record.encoding.clone(),
                record.realized_train_pairs.to_string(),
                s.metric.clone(),
                s.mean.to_string(),
                s.se.to_string(),
            ]
        })
        .collect()
}

pub const METRICS_HEADER: [&str; 6] = ["model", "encoding", "train_size", "metric", "mean", "se"];

pub fn write_metrics_csv(path: &Path, records: &[&RunRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(METRICS_HEADER).stage(Stage::Report)?;
    for r in records {
        for row in metrics_rows(r) {
            w.write_record(&row).stage(Stage::Report)?;
        }
    }
    w.flush().stage(Stage::Report)
}

fn write_predictions_csv(path: &Path, preds: &[GroupPrediction]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["group_id", "candidate_index", "truth", "ranked", "single"])
        .stage(Stage::Report)?;
    for p in preds {
        for i in 0..4 {
            w.write_record([
                p.group_id.clone(),
                i.to_string(),
                p.truth[i].value().to_string(),
                p.ranked[i].value().to_string(),
                p.single[i].value().to_string(),
            ])
            .stage(Stage::Report)?;
        }
    }
    w.flush().stage(Stage::Report)
}

fn write_search_csv(path: &Path, search: &SearchOutcome) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["iteration", "config", "fold_scores", "mean", "std", "best"])
        .stage(Stage::Report)?;
    for row in &search.table {
        let folds: Vec<String> = row.fold_scores.iter().map(f64::to_string).collect();
        w.write_record([
            row.iteration.to_string(),
            serde_json::to_string(&row.config).stage(Stage::Report)?,
            folds.join(";"),
            row.mean_score.to_string(),
            row.std_score.to_string(),
            (row.iteration == search.best_iteration).to_string(),
        ])
        .stage(Stage::Report)?;
    }
    w.flush().stage(Stage::Report)
}

pub fn write_surface_csv(path: &Path, surface: &[SurfacePoint]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t1", "t2", "t3", "tau"]).stage(Stage::Report)?;
    for p in surface {
        w.write_record([p.t1.to_string(), p.t2.to_string(), p.t3.to_string(), p.tau.to_string()])
            .stage(Stage::Report)?;
    }
    w.flush().stage(Stage::Report)
}

/// One row per (rank, bin): `rank,bin,lower,upper,count`.
pub fn write_histograms_csv(path: &Path, h: &Histograms) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["rank", "bin", "lower", "upper", "count"])
        .stage(Stage::Report)?;
    for (rank, counts) in h.counts.iter().enumerate() {
        for (bin, count) in counts.iter().enumerate() {
            w.write_record([
                rank.to_string(),
                bin.to_string(),
                h.edges[bin].to_string(),
                h.edges[bin + 1].to_string(),
                count.to_string(),
            ])
            .stage(Stage::Report)?;
        }
    }
    w.flush().stage(Stage::Report)
}

fn write_config(dir: &Path, config: &ExperimentConfig) -> Result<()> {
    let mut f = fs::File::create(dir.join("config.toml")).stage(Stage::Report)?;
    f.write_all(config.to_toml().as_bytes()).stage(Stage::Report)
}

fn write_timings(dir: &Path, timings: &Timings) -> Result<()> {
    write_json(&dir.join("timings.json"), timings)
}

/// Writes every artifact of one run into `dir`.
pub fn emit_run(out: &RunOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).stage(Stage::Report)?;
    write_json(&dir.join("report.json"), &out.record)?;
    write_config(dir, &out.record.config)?;
    write_metrics_csv(&dir.join("metrics.csv"), &[&out.record])?;
    write_predictions_csv(&dir.join("predictions.csv"), &out.predictions)?;
    match &out.fitted {
        Fitted::Thresholds { surface, .. } => {
            write_surface_csv(&dir.join("surface.csv"), surface)?;
        }
        Fitted::Model { model, search } => {
            save_model(model, &dir.join("model.rvm")).stage(Stage::Report)?;
            if let Some(s) = search {
                write_search_csv(&dir.join("search.csv"), s)?;
            }
        }
    }
    if let Some(h) = &out.histograms {
        write_histograms_csv(&dir.join("histograms.csv"), h)?;
    }
    write_timings(dir, &out.timings)
}

/// Writes `curve.json`, `metrics.csv`, `curve.csv` and, when present,
/// `train_bootstrap.csv` into `dir`.
pub fn emit_curve(out: &CurveOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).stage(Stage::Report)?;
    let rec = &out.record;
    write_json(&dir.join("curve.json"), rec)?;
    write_config(dir, &rec.config)?;
    let points: Vec<&RunRecord> = rec.points.iter().collect();
    write_metrics_csv(&dir.join("metrics.csv"), &points)?;

    let mut w = csv_writer(&dir.join("curve.csv"))?;
    w.write_record(["train_size", "requested_size", "metric", "mean", "se"])
        .stage(Stage::Report)?;
    for p in &rec.points {
        for s in &p.bootstrap {
            w.write_record([
                p.realized_train_pairs.to_string(),
                p.requested_train_pairs.map_or(String::new(), |v| v.to_string()),
                s.metric.clone(),
                s.mean.to_string(),
                s.se.to_string(),
            ])
            .stage(Stage::Report)?;
        }
    }
    w.flush().stage(Stage::Report)?;

    if !rec.train_bootstrap.is_empty() {
        let mut w = csv_writer(&dir.join("train_bootstrap.csv"))?;
        w.write_record(["train_size", "requested_size", "metric", "mean", "se", "n_resamples"])
            .stage(Stage::Report)?;
        for size in &rec.train_bootstrap {
            for s in &size.summaries {
                w.write_record([
                    size.realized_pairs.to_string(),
                    size.requested_pairs.to_string(),
                    s.metric.clone(),
                    s.mean.to_string(),
                    s.se.to_string(),
                    s.n_resamples.to_string(),
                ])
                .stage(Stage::Report)?;
            }
        }
        w.flush().stage(Stage::Report)?;
    }
    write_timings(dir, &out.timings)
}

/// Reads a `report.json` or `curve.json` and returns its run records.
pub fn load_records(path: &Path) -> Result<Vec<RunRecord>> {
    let text = fs::read_to_string(path).stage(Stage::Report)?;
    let value: serde_json::Value = serde_json::from_str(&text).stage(Stage::Report)?;
    if value.get("points").is_some() {
        let curve: CurveRecord = serde_json::from_value(value).stage(Stage::Report)?;
        Ok(curve.points)
    } else {
        Ok(vec![serde_json::from_value(value).stage(Stage::Report)?])
    }
}
