use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{MetricsError, Result};

/// Which tau formula a number was computed with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauVariant {
    /// `(C - D) / (C + D)`: pairs tied in either sequence are left out.
    #[default]
    ConcordanceRatio,
    /// `(C - D) / sqrt((n0 - n1) (n0 - n2))`.
    TauB,
}

impl fmt::Display for TauVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TauVariant::ConcordanceRatio => "concordance_ratio",
            TauVariant::TauB => "tau_b",
        })
    }
}

impl FromStr for TauVariant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "concordance_ratio" | "cd" => Ok(TauVariant::ConcordanceRatio),
            "tau_b" | "b" => Ok(TauVariant::TauB),
            other => Err(format!("unknown tau variant `{other}`")),
        }
    }
}

/// Pair counts over all `n (n - 1) / 2` unordered index pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TauCounts {
    pub n: u64,
    pub concordant: u64,
    pub discordant: u64,
    /// Pairs tied in the first sequence (including joint ties).
    pub tied_first: u64,
    /// Pairs tied in the second sequence (including joint ties).
    pub tied_second: u64,
    /// Pairs tied in both.
    pub tied_both: u64,
}

impl TauCounts {
    pub fn total_pairs(&self) -> u64 {
        self.n * self.n.saturating_sub(1) / 2
    }

    /// Pairs tied in at least one sequence.
    pub fn tied(&self) -> u64 {
        self.total_pairs() - self.concordant - self.discordant
    }

    /// Returns the coefficient and whether it is degenerate (zero denominator).
    pub fn tau(&self, variant: TauVariant) -> (f64, bool) {
        let c = self.concordant as f64;
        let d = self.discordant as f64;
        let denom = match variant {
            TauVariant::ConcordanceRatio => c + d,
            TauVariant::TauB => {
                let n0 = self.total_pairs() as f64;
                ((n0 - self.tied_first as f64) * (n0 - self.tied_second as f64)).sqrt()
            }
        };
        if denom > 0.0 {
            (((c - d) / denom).clamp(-1.0, 1.0), false)
        } else {
            (0.0, true)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauReport {
    pub tau: f64,
    pub variant: TauVariant,
    pub concordant: u64,
    pub discordant: u64,
    pub tied: u64,
    pub n: u64,
    /// True when the denominator was zero and `tau` was set to 0.
    pub degenerate: bool,
}

/// Kendall's tau between a predicted and a true ranking.
///
/// Runs in `O(n log n)`: sort by `(pred, truth)`, then count strict
/// inversions of `truth` with a merge sort. Those inversions are exactly the
/// discordant pairs; concordant pairs follow from the tie counts.
pub fn kendall_tau<T: Ord + Copy>(pred: &[T], truth: &[T], variant: TauVariant) -> Result<TauReport> {
    let counts = tau_counts(pred, truth)?;
    let (tau, degenerate) = counts.tau(variant);
    Ok(TauReport {
        tau,
        variant,
        concordant: counts.concordant,
        discordant: counts.discordant,
        tied: counts.tied(),
        n: counts.n,
        degenerate,
    })
}

pub fn tau_counts<T: Ord + Copy>(first: &[T], second: &[T]) -> Result<TauCounts> {
    if first.len() != second.len() {
        return Err(MetricsError::LengthMismatch {
            pred: first.len(),
            truth: second.len(),
        });
    }
    if first.len() < 2 {
        return Err(MetricsError::TooShort {
            need: 2,
            got: first.len(),
        });
    }
    let n = first.len() as u64;
    let mut pairs: Vec<(T, T)> = first.iter().copied().zip(second.iter().copied()).collect();
    pairs.sort_unstable();

    let tied_first = run_pairs(pairs.iter().map(|p| p.0));
    let tied_both = run_pairs(pairs.iter().copied());

    let mut seq: Vec<T> = pairs.iter().map(|p| p.1).collect();
    let mut scratch = seq.clone();
    let discordant = count_inversions(&mut seq, &mut scratch);
    // `seq` is now sorted.
    let tied_second = run_pairs(seq.iter().copied());

    let total = n * (n - 1) / 2;
    let concordant = total + tied_both - tied_first - tied_second - discordant;
    Ok(TauCounts {
        n,
        concordant,
        discordant,
        tied_first,
        tied_second,
        tied_both,
    })
}

/// Sum of `k (k - 1) / 2` over runs of equal adjacent values.
fn run_pairs<T: PartialEq>(sorted: impl Iterator<Item = T>) -> u64 {
    let mut total = 0;
    let mut run = 0u64;
    let mut prev: Option<T> = None;
    for v in sorted {
        if prev.as_ref() == Some(&v) {
            run += 1;
        } else {
            total += run * run.saturating_sub(1) / 2;
            run = 1;
        }
        prev = Some(v);
    }
    total + run * run.saturating_sub(1) / 2
}

/// Sorts `v` and returns the number of pairs `i < j` with `v[i] > v[j]`.
fn count_inversions<T: Ord + Copy>(v: &mut [T], scratch: &mut [T]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = {
        let (left, right) = v.split_at_mut(mid);
        let (sl, sr) = scratch.split_at_mut(mid);
        count_inversions(left, sl) + count_inversions(right, sr)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[i] <= v[j] {
            scratch[k] = v[i];
            i += 1;
        } else {
            scratch[k] = v[j];
            inv += (mid - i) as u64;
            j += 1;
        }
        k += 1;
    }
    scratch[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    scratch[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&scratch[..n]);
    inv
}

/// Average of within-group taus (each group scored on its own pairs).
/// Degenerate groups contribute 0.
pub fn mean_group_tau<T: Ord + Copy>(groups: &[(&[T], &[T])], variant: TauVariant) -> Result<f64> {
    if groups.is_empty() {
        return Err(MetricsError::TooShort { need: 1, got: 0 });
    }
    let mut sum = 0.0;
    for (pred, truth) in groups {
        sum += kendall_tau(pred, truth, variant)?.tau;
    }
    Ok(sum / groups.len() as f64)
}
