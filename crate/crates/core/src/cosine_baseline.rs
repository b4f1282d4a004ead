//! Fixed-threshold cosine-similarity classifier.
//!
//! A prompt/paper pair gets rank `#{t in (t1, t2, t3) : t <= sim}`, so bands
//! are lower-inclusive. Thresholds are learned by exhaustive search over a
//! lattice of multiples of `step`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{PairGroup, RelevanceRank};
use crate::embedder::{cosine, EmbedError, EmbeddingSource};
use crate::metrics::{tau_counts, MetricsError, TauCounts, TauVariant};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("thresholds must satisfy t1 <= t2 <= t3, got [{0}, {1}, {2}]")]
    NotMonotone(f64, f64, f64),
    #[error("step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("all {0} similarities are identical; the threshold grid is uninformative")]
    NoSpread(usize),
    #[error("need at least 2 similarity rows, got {0}")]
    TooFewRows(usize),
    #[error("non-finite similarity at row {0}")]
    NonFinite(usize),
    #[error("lattice of {0} points is too large")]
    LatticeTooLarge(usize),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub type Result<T> = std::result::Result<T, BaselineError>;

/// Lattice points beyond which the cubic search is refused.
const MAX_LATTICE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTriple {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
}

impl ThresholdTriple {
    pub fn new(t1: f64, t2: f64, t3: f64) -> Result<Self> {
        if t1 <= t2 && t2 <= t3 {
            Ok(ThresholdTriple { t1, t2, t3 })
        } else {
            Err(BaselineError::NotMonotone(t1, t2, t3))
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.t1, self.t2, self.t3]
    }
}

pub fn classify_by_thresholds(sim: f64, triple: &ThresholdTriple) -> RelevanceRank {
    let rank = triple.as_array().iter().filter(|&&t| t <= sim).count() as u8;
    RelevanceRank::new(rank).expect("at most three thresholds")
}

/// Cosine similarity of one pair, with its labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub group_id: String,
    pub candidate_index: u8,
    pub rank: RelevanceRank,
    pub similarity: f64,
}

/// Cosine between the separate prompt and paper embeddings of every pair.
pub fn similarity_table(groups: &[PairGroup], source: &EmbeddingSource) -> Result<Vec<SimilarityRow>> {
    let per_group = groups
        .par_iter()
        .map(|g| {
            g.pairs
                .iter()
                .map(|p| {
                    let u = source.prompt_vector(p)?;
                    let v = source.paper_vector(p)?;
                    Ok(SimilarityRow {
                        group_id: p.group_id.clone(),
                        candidate_index: p.candidate_index,
                        rank: p.rank,
                        similarity: cosine(&u, &v)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_group.into_iter().flatten().collect())
}

/// One grid cell: a triple and the train tau it achieves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSearch {
    pub triple: ThresholdTriple,
    pub train_tau: f64,
    pub step: f64,
    /// Tau formula the search maximized.
    pub variant: TauVariant,
    /// Every monotone lattice triple in lexicographic order.
    pub surface: Vec<SurfacePoint>,
}

/// Pred x true contingency counts.
type Table = [[u64; 4]; 4];

/// Pair counts implied by a contingency table.
fn table_counts(t: &Table) -> TauCounts {
    let choose2 = |k: u64| k * k.saturating_sub(1) / 2;
    let mut counts = TauCounts {
        n: t.iter().flatten().sum(),
        ..TauCounts::default()
    };
    for a in 0..4 {
        for b in a + 1..4 {
            for x in 0..4 {
                for y in 0..4 {
                    let n = t[a][x] * t[b][y];
                    if x < y {
                        counts.concordant += n;
                    } else if x > y {
                        counts.discordant += n;
                    }
                }
            }
        }
    }
    counts.tied_first = t.iter().map(|row| choose2(row.iter().sum())).sum();
    counts.tied_second = (0..4).map(|x| choose2(t.iter().map(|row| row[x]).sum())).sum();
    counts.tied_both = t.iter().flatten().map(|&v| choose2(v)).sum();
    counts
}

/// Lattice `k * step` covering `[lo, hi]`.
fn lattice(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    let mut first = (lo / step).floor() as i64;
    while first as f64 * step > lo {
        first -= 1;
    }
    let mut last = (hi / step).ceil() as i64;
    while (last as f64 * step) < hi {
        last += 1;
    }
    let len = (last - first + 1) as usize;
    if len > MAX_LATTICE {
        return Err(BaselineError::LatticeTooLarge(len));
    }
    Ok((first..=last).map(|k| k as f64 * step).collect())
}

/// Exhaustive search over monotone lattice triples for the one maximizing
/// Kendall's tau (`variant`) between banded similarities and true ranks.
/// Equal scores resolve to the lexicographically smallest triple.
pub fn grid_search_thresholds(
    rows: &[(f64, RelevanceRank)],
    step: f64,
    variant: TauVariant,
) -> Result<ThresholdSearch> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(BaselineError::InvalidStep(step));
    }
    if rows.len() < 2 {
        return Err(BaselineError::TooFewRows(rows.len()));
    }
    if let Some(i) = rows.iter().position(|(s, _)| !s.is_finite()) {
        return Err(BaselineError::NonFinite(i));
    }
    let lo = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Err(BaselineError::NoSpread(rows.len()));
    }
    let points = lattice(lo, hi, step)?;
    let m = points.len();

    // Cell c holds similarities with exactly c lattice points <= sim; a
    // threshold at lattice index i lifts every cell c > i by one rank.
    let mut cells = vec![[0u64; 4]; m + 1];
    for &(s, r) in rows {
        cells[points.partition_point(|&p| p <= s)][r.index()] += 1;
    }
    let mut prefix = vec![[0u64; 4]; m + 2];
    for c in 0..=m {
        for r in 0..4 {
            prefix[c + 1][r] = prefix[c][r] + cells[c][r];
        }
    }
    // Counts per true rank for cells in `from..to`.
    let range = |from: usize, to: usize| -> [u64; 4] { std::array::from_fn(|r| prefix[to][r] - prefix[from][r]) };

    let per_i: Vec<Vec<(usize, usize, usize, f64)>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            for j in i..m {
                for k in j..m {
                    let table: Table = [
                        range(0, i + 1),
                        range(i + 1, j + 1),
                        range(j + 1, k + 1),
                        range(k + 1, m + 1),
                    ];
                    out.push((i, j, k, table_counts(&table).tau(variant).0));
                }
            }
            out
        })
        .collect();

    let mut best: Option<(usize, usize, usize, f64)> = None;
    let mut surface = Vec::new();
    for cell in per_i.into_iter().flatten() {
        let (i, j, k, tau) = cell;
        surface.push(SurfacePoint {
            t1: points[i],
            t2: points[j],
            t3: points[k],
            tau,
        });
        if best.is_none_or(|b| tau > b.3) {
            best = Some(cell);
        }
    }
    let (i, j, k, train_tau) = best.expect("lattice has at least two points");
    Ok(ThresholdSearch {
        triple: ThresholdTriple::new(points[i], points[j], points[k])?,
        train_tau,
        step,
        variant,
        surface,
    })
}

/// Tau of fixed thresholds applied to `rows`.
pub fn threshold_tau(rows: &[(f64, RelevanceRank)], triple: &ThresholdTriple, variant: TauVariant) -> Result<f64> {
    let pred: Vec<RelevanceRank> = rows.iter().map(|(s, _)| classify_by_thresholds(*s, triple)).collect();
    let truth: Vec<RelevanceRank> = rows.iter().map(|r| r.1).collect();
    Ok(tau_counts(&pred, &truth)?.tau(variant).0)
}

/// Per-class similarity counts over equal-width bins spanning all rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histograms {
    /// `bins + 1` edges; the last bin includes its upper edge.
    pub edges: Vec<f64>,
    /// Indexed by rank value.
    pub counts: [Vec<u64>; 4],
}

pub const HISTOGRAM_BINS: usize = 20;

pub fn similarity_histograms(rows: &[(f64, RelevanceRank)], bins: usize) -> Histograms {
    let bins = bins.max(1);
    let lo = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if rows.is_empty() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    };
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins)
        .map(|b| if b == bins { hi } else { lo + b as f64 * width })
        .collect();
    let mut counts: [Vec<u64>; 4] = std::array::from_fn(|_| vec![0; bins]);
    for &(s, r) in rows {
        let b = (((s - lo) / width).floor() as usize).min(bins - 1);
        counts[r.index()][b] += 1;
    }
    Histograms { edges, counts }
}
