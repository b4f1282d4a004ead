//! Linear heads trained with plain stochastic gradient descent.
//!
//! One-hot targets get four one-vs-rest heads; thermometer targets get three
//! independent binary heads, head `k` separating `rank > k` from the rest.
//!
//! Each head visits the rows in a fresh seeded shuffle every epoch. The step
//! size at update `t` (counted across epochs) is
//! `eta_t = 1 / (alpha * (t0 + t))` with `t0 = 1 / alpha`, i.e.
//! `eta_t = 1 / (1 + alpha * t)`. The L2 shrink factor `1 - eta_t * alpha`
//! is clamped at 0. The intercept is not regularized.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{quantize, FeatureMatrix, ModelError, Result};
use crate::corpus::RelevanceRank;
use crate::encoding::{Codec, ScoreVector};
use crate::seeds::{self, Stream};

/// Epochs without sufficient improvement before early stopping.
const PATIENCE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    #[serde(alias = "log", alias = "log_loss")]
    Logistic,
    Hinge,
    ModifiedHuber,
}

impl Loss {
    /// Loss value and its derivative with respect to the decision value `p`.
    fn eval(self, p: f64, y: f64) -> (f64, f64) {
        let z = p * y;
        match self {
            Loss::Logistic => {
                // log(1 + exp(-z)) and d/dp = -y / (1 + exp(z)), computed stably.
                let loss = if z > 18.0 {
                    (-z).exp()
                } else if z < -18.0 {
                    -z
                } else {
                    (-z).exp().ln_1p()
                };
                let dloss = if z > 18.0 {
                    -y * (-z).exp()
                } else if z < -18.0 {
                    -y
                } else {
                    -y / (1.0 + z.exp())
                };
                (loss, dloss)
            }
            Loss::Hinge => {
                if z < 1.0 {
                    (1.0 - z, -y)
                } else {
                    (0.0, 0.0)
                }
            }
            Loss::ModifiedHuber => {
                if z >= 1.0 {
                    (0.0, 0.0)
                } else if z >= -1.0 {
                    ((1.0 - z).powi(2), -2.0 * y * (1.0 - z))
                } else {
                    (-4.0 * z, -4.0 * y)
                }
            }
        }
    }
}

impl FromStr for Loss {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "logistic" | "log" | "log_loss" => Ok(Loss::Logistic),
            "hinge" => Ok(Loss::Hinge),
            "modified_huber" => Ok(Loss::ModifiedHuber),
            other => Err(format!("unknown loss `{other}`")),
        }
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Loss::Logistic => "logistic",
            Loss::Hinge => "hinge",
            Loss::ModifiedHuber => "modified_huber",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    #[default]
    L2,
    L1,
    Elasticnet,
}

impl FromStr for Penalty {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "l2" => Ok(Penalty::L2),
            "l1" => Ok(Penalty::L1),
            "elasticnet" => Ok(Penalty::Elasticnet),
            other => Err(format!("unknown penalty `{other}`")),
        }
    }
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Penalty::L2 => "l2",
            Penalty::L1 => "l1",
            Penalty::Elasticnet => "elasticnet",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    #[serde(default)]
    pub loss: Loss,
    #[serde(default)]
    pub penalty: Penalty,
    pub alpha: f64,
    pub max_iter: usize,
    /// Early-stopping tolerance on the epoch loss; `None` runs every epoch.
    #[serde(default = "SgdConfig::default_tol")]
    pub tol: Option<f64>,
    /// L1 share of the elastic-net penalty.
    #[serde(default = "SgdConfig::default_l1_ratio")]
    pub l1_ratio: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SgdConfig {
    pub fn new(alpha: f64, max_iter: usize, seed: u64) -> Self {
        SgdConfig {
            loss: Loss::Logistic,
            penalty: Penalty::L2,
            alpha,
            max_iter,
            tol: Self::default_tol(),
            l1_ratio: Self::default_l1_ratio(),
            seed,
        }
    }

    fn default_tol() -> Option<f64> {
        Some(1e-3)
    }

    fn default_l1_ratio() -> f64 {
        0.15
    }

    pub fn with_loss(mut self, loss: Loss) -> Self {
        self.loss = loss;
        self
    }

    pub fn with_penalty(mut self, penalty: Penalty) -> Self {
        self.penalty = penalty;
        self
    }

    pub fn with_tol(mut self, tol: Option<f64>) -> Self {
        self.tol = tol;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(ModelError::InvalidConfig(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.max_iter == 0 {
            return Err(ModelError::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.l1_ratio) {
            return Err(ModelError::InvalidConfig(format!(
                "l1_ratio {} outside [0, 1]",
                self.l1_ratio
            )));
        }
        Ok(())
    }

    fn l2_share(&self) -> f64 {
        match self.penalty {
            Penalty::L2 => 1.0,
            Penalty::L1 => 0.0,
            Penalty::Elasticnet => 1.0 - self.l1_ratio,
        }
    }

    fn l1_share(&self) -> f64 {
        match self.penalty {
            Penalty::L2 => 0.0,
            Penalty::L1 => 1.0,
            Penalty::Elasticnet => self.l1_ratio,
        }
    }
}

/// One binary linear head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Epochs actually run.
    pub epochs: usize,
}

impl LinearHead {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdModel {
    pub config: SgdConfig,
    pub codec: Codec,
    pub heads: Vec<LinearHead>,
}

fn train_head(x: &FeatureMatrix, targets: &[f64], cfg: &SgdConfig, head: usize) -> LinearHead {
    let dim = x.dim();
    let mut w = vec![0.0f64; dim];
    let mut b = 0.0f64;
    let t0 = 1.0 / cfg.alpha;
    let (l2, l1) = (cfg.l2_share(), cfg.l1_share());
    let mut t = 0.0f64;
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut best_loss = f64::INFINITY;
    let mut stale = 0;
    let mut epochs = 0;
    for epoch in 0..cfg.max_iter {
        order.shuffle(&mut seeds::rng(
            cfg.seed,
            Stream::SgdEpoch,
            ((head as u64) << 32) | epoch as u64,
        ));
        let mut epoch_loss = 0.0;
        for &i in &order {
            let row = x.row(i);
            let y = targets[i];
            let p = w.iter().zip(row).map(|(a, v)| a * v).sum::<f64>() + b;
            let (loss, dloss) = cfg.loss.eval(p, y);
            epoch_loss += loss;
            let eta = 1.0 / (cfg.alpha * (t0 + t));
            if l2 > 0.0 {
                let shrink = (1.0 - eta * cfg.alpha * l2).max(0.0);
                w.iter_mut().for_each(|a| *a *= shrink);
            }
            if dloss != 0.0 {
                let step = eta * dloss;
                for (a, v) in w.iter_mut().zip(row) {
                    *a -= step * v;
                }
                b -= step;
            }
            if l1 > 0.0 {
                let cut = eta * cfg.alpha * l1;
                for a in w.iter_mut() {
                    *a = a.signum() * (a.abs() - cut).max(0.0);
                }
            }
            t += 1.0;
        }
        epochs = epoch + 1;
        if let Some(tol) = cfg.tol {
            if epoch_loss > best_loss - tol * x.rows() as f64 {
                stale += 1;
            } else {
                stale = 0;
            }
            best_loss = best_loss.min(epoch_loss);
            if stale >= PATIENCE {
                break;
            }
        }
    }
    quantize(&mut w);
    LinearHead {
        weights: w,
        bias: f64::from(b as f32),
        epochs,
    }
}

impl SgdModel {
    pub fn fit(features: &FeatureMatrix, ranks: &[RelevanceRank], config: &SgdConfig, codec: Codec) -> Result<Self> {
        config.validate()?;
        if features.rows() == 0 {
            return Err(ModelError::EmptyTrainingSet);
        }
        features.check_finite()?;
        let heads = (0..codec.width())
            .into_par_iter()
            .map(|k| {
                let targets: Vec<f64> = ranks
                    .iter()
                    .map(|r| {
                        let positive = match codec {
                            Codec::Onehot => r.index() == k,
                            Codec::Thermometer => r.index() > k,
                        };
                        if positive {
                            1.0
                        } else {
                            -1.0
                        }
                    })
                    .collect();
                train_head(features, &targets, config, k)
            })
            .collect();
        Ok(SgdModel {
            config: *config,
            codec,
            heads,
        })
    }

    /// One-hot: raw decision values. Thermometer: logistic of each decision value.
    pub fn predict_scores(&self, features: &FeatureMatrix) -> Result<Vec<ScoreVector>> {
        let dim = self.heads[0].weights.len();
        if features.dim() != dim {
            return Err(ModelError::DimensionMismatch {
                expected: dim,
                got: features.dim(),
            });
        }
        Ok(features
            .iter_rows()
            .map(|row| match self.codec {
                Codec::Onehot => ScoreVector::Onehot(std::array::from_fn(|k| self.heads[k].decision(row))),
                Codec::Thermometer => {
                    ScoreVector::Thermometer(std::array::from_fn(|k| sigmoid(self.heads[k].decision(row))))
                }
            })
            .collect())
    }

    pub fn weight_norm(&self) -> f64 {
        self.heads
            .iter()
            .flat_map(|h| &h.weights)
            .map(|w| w * w)
            .sum::<f64>()
            .sqrt()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
