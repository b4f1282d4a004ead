//! Nonparametric bootstrap over instance groups.
//!
//! Resample `i` draws from its own ChaCha stream seeded with
//! `derive(seed, stream, i)`; resamples run in parallel and are reduced in
//! index order, so summaries are bit-identical for a given seed no matter how
//! the work is scheduled.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{MetricsError, Result};
use crate::corpus;
use crate::seeds::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleUnit {
    /// Whole instances (all four pairs of a prompt).
    Group,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub metric: String,
    pub mean: f64,
    /// Standard deviation of the resampled values (n - 1 denominator; 0 for n = 1).
    pub se: f64,
    pub n_resamples: usize,
    pub seed: u64,
    pub unit: ResampleUnit,
}

impl BootstrapSummary {
    fn from_values(metric: &str, values: &[f64], seed: u64) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        BootstrapSummary {
            metric: metric.to_string(),
            mean,
            se,
            n_resamples: n,
            seed,
            unit: ResampleUnit::Group,
        }
    }
}

fn resample<'a, T, R: Rng>(items: &'a [T], count: usize, rng: &mut R) -> Vec<&'a T> {
    (0..count).map(|_| &items[rng.random_range(0..items.len())]).collect()
}

/// Bootstraps several metrics from the same resamples.
///
/// `metric` receives one resample (as many groups as `items`, drawn with
/// replacement) and returns one value per entry of `names`.
pub fn bootstrap_many<T, F>(
    items: &[T],
    n_resamples: usize,
    seed: u64,
    names: &[&str],
    metric: F,
) -> Result<Vec<BootstrapSummary>>
where
    T: Sync,
    F: Fn(&[&T]) -> Vec<f64> + Sync,
{
    if items.is_empty() {
        return Err(MetricsError::TooShort { need: 1, got: 0 });
    }
    if n_resamples == 0 {
        return Err(MetricsError::NoResamples);
    }
    let values: Vec<Vec<f64>> = (0..n_resamples)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds::rng(seed, Stream::TestBootstrap, i as u64);
            let sample = resample(items, items.len(), &mut rng);
            metric(&sample)
        })
        .collect();
    Ok(names
        .iter()
        .enumerate()
        .map(|(m, name)| {
            let column: Vec<f64> = values.iter().map(|row| row[m]).collect();
            BootstrapSummary::from_values(name, &column, seed)
        })
        .collect())
}

pub fn bootstrap<T, F>(items: &[T], n_resamples: usize, seed: u64, name: &str, metric: F) -> Result<BootstrapSummary>
where
    T: Sync,
    F: Fn(&[&T]) -> f64 + Sync,
{
    let mut out = bootstrap_many(items, n_resamples, seed, &[name], |s| vec![metric(s)])?;
    Ok(out.remove(0))
}

/// Summaries for one training size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    /// Requested number of training pairs.
    pub requested_pairs: usize,
    /// Realized number of training pairs (whole instances).
    pub realized_pairs: usize,
    pub summaries: Vec<BootstrapSummary>,
}

/// Training-set bootstrap.
///
/// For every size, takes a seeded subsample of `ceil(size / 4)` instances,
/// then `n_resamples` times redraws that many instances with replacement from
/// the subsample and calls `fit_eval`, which trains on the draw and returns
/// one value per entry of `names` measured on a fixed test set.
pub fn bootstrap_train<T, E, F>(
    train: &[T],
    sizes: &[usize],
    n_resamples: usize,
    seed: u64,
    names: &[&str],
    fit_eval: F,
) -> std::result::Result<Vec<SizeSummary>, E>
where
    T: Clone + Sync + Send,
    E: From<MetricsError> + Send,
    F: Fn(&[T]) -> std::result::Result<Vec<f64>, E> + Sync,
{
    if n_resamples == 0 {
        return Err(MetricsError::NoResamples.into());
    }
    let mut out = Vec::with_capacity(sizes.len());
    for (s, &size) in sizes.iter().enumerate() {
        let subset = corpus::subsample(train, size, seed).map_err(MetricsError::from)?;
        let values: Vec<Vec<f64>> = (0..n_resamples)
            .into_par_iter()
            .map(|b| {
                let mut rng = seeds::rng(seed, Stream::TrainBootstrap, ((s as u64) << 32) | b as u64);
                let draw: Vec<T> = resample(&subset, subset.len(), &mut rng).into_iter().cloned().collect();
                fit_eval(&draw)
            })
            .collect::<std::result::Result<_, E>>()?;
        let summaries = names
            .iter()
            .enumerate()
            .map(|(m, name)| {
                let column: Vec<f64> = values.iter().map(|row| row[m]).collect();
                BootstrapSummary::from_values(name, &column, seed)
            })
            .collect();
        out.push(SizeSummary {
            requested_pairs: size,
            realized_pairs: subset.len() * 4,
            summaries,
        });
    }
    Ok(out)
}
