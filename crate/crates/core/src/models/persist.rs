//! `RVM1` model container.
//!
//! Binary part, all little-endian:
//!
//! ```text
//! b"RVM1" | version: u32 | kind: u32 (1 knn, 2 sgd) | input_dim: u32 | pca_k: u32
//! | pca mean: input_dim f32 | pca components: pca_k * input_dim f32
//! | model_dim: u32
//! knn: rows: u32 | features: rows * model_dim f32 | ranks: rows u8
//! sgd: heads: u32 | per head: model_dim f32 weights, f32 bias
//! ```
//!
//! Hyperparameters, codec and feature mode go to `<path>.meta.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    sgd::LinearHead, FeatureMatrix, Fitted, KnnModel, ModelConfig, ModelError, PcaTransform, PipelineConfig, Result,
    SgdModel, TrainedModel,
};
use crate::corpus::RelevanceRank;
use crate::embedder::FeatureMode;

const MAGIC: &[u8; 4] = b"RVM1";
const VERSION: u32 = 1;
const KIND_KNN: u32 = 1;
const KIND_SGD: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub engine_version: String,
    pub config: PipelineConfig,
    pub feature_mode: FeatureMode,
    #[serde(default)]
    pub explained_variance: Vec<f64>,
    #[serde(default)]
    pub explained_variance_ratio: Vec<f64>,
    /// Epochs run per SGD head.
    #[serde(default)]
    pub epochs: Vec<usize>,
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| ModelError::Format(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f32s<'a>(out: &mut Vec<u8>, values: impl IntoIterator<Item = &'a f64>) {
    for v in values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| ModelError::Format(format!("truncated: need {n} bytes at offset {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(4)
            .ok_or_else(|| ModelError::Format("length overflow".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect())
    }
}

/// Binary body and metadata for `model`.
pub fn to_parts(model: &TrainedModel) -> Result<(Vec<u8>, ModelMeta)> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION as usize)?;
    let kind = match model.fitted {
        Fitted::Knn(_) => KIND_KNN,
        Fitted::Sgd(_) => KIND_SGD,
    };
    put_u32(&mut out, kind as usize)?;
    put_u32(&mut out, model.input_dim)?;
    let pca_k = model.pca.as_ref().map_or(0, PcaTransform::n_components);
    put_u32(&mut out, pca_k)?;
    if let Some(p) = &model.pca {
        put_f32s(&mut out, &p.mean);
        put_f32s(&mut out, p.components.iter().flatten());
    }
    let model_dim = if pca_k > 0 { pca_k } else { model.input_dim };
    put_u32(&mut out, model_dim)?;
    let mut epochs = Vec::new();
    match &model.fitted {
        Fitted::Knn(m) => {
            put_u32(&mut out, m.train.rows())?;
            put_f32s(&mut out, m.train.iter_rows().flatten());
            out.extend(m.ranks.iter().map(|r| r.value()));
        }
        Fitted::Sgd(m) => {
            put_u32(&mut out, m.heads.len())?;
            for h in &m.heads {
                put_f32s(&mut out, h.weights.iter().chain(std::iter::once(&h.bias)));
                epochs.push(h.epochs);
            }
        }
    }
    let meta = ModelMeta {
        engine_version: crate::ENGINE_VERSION.to_string(),
        config: model.config.clone(),
        feature_mode: model.feature_mode,
        explained_variance: model
            .pca
            .as_ref()
            .map(|p| p.explained_variance.clone())
            .unwrap_or_default(),
        explained_variance_ratio: model
            .pca
            .as_ref()
            .map(|p| p.explained_variance_ratio.clone())
            .unwrap_or_default(),
        epochs,
    };
    Ok((out, meta))
}

/// Rebuilds a model from its binary body and metadata.
pub fn from_parts(bytes: &[u8], meta: &ModelMeta) -> Result<TrainedModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(ModelError::Format("bad magic, expected RVM1".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(ModelError::Format(format!("unsupported version {version}")));
    }
    let kind = r.u32()? as u32;
    let input_dim = r.u32()?;
    let pca_k = r.u32()?;
    if meta.config.pca_components.unwrap_or(0) != pca_k {
        return Err(ModelError::Format(format!(
            "metadata pca {:?} disagrees with body width {pca_k}",
            meta.config.pca_components
        )));
    }
    let pca = if pca_k > 0 {
        let mean = r.f32s(input_dim)?;
        let flat = r.f32s(pca_k * input_dim)?;
        let components = flat.chunks_exact(input_dim.max(1)).map(<[f64]>::to_vec).collect();
        Some(PcaTransform {
            mean,
            components,
            explained_variance: meta.explained_variance.clone(),
            explained_variance_ratio: meta.explained_variance_ratio.clone(),
        })
    } else {
        None
    };
    let model_dim = r.u32()?;
    let fitted = match (kind, &meta.config.model) {
        (KIND_KNN, ModelConfig::Knn(cfg)) => {
            let rows = r.u32()?;
            let train = FeatureMatrix::new(rows, model_dim, r.f32s(rows * model_dim)?)?;
            let ranks = r
                .take(rows)?
                .iter()
                .map(|&v| RelevanceRank::new(v))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Fitted::Knn(KnnModel {
                config: *cfg,
                train,
                ranks,
            })
        }
        (KIND_SGD, ModelConfig::Sgd(cfg)) => {
            let n_heads = r.u32()?;
            if n_heads != meta.config.codec.width() {
                return Err(ModelError::Format(format!(
                    "{n_heads} heads for codec {}",
                    meta.config.codec
                )));
            }
            let heads = (0..n_heads)
                .map(|k| {
                    let mut w = r.f32s(model_dim + 1)?;
                    let bias = w.pop().expect("bias");
                    Ok(LinearHead {
                        weights: w,
                        bias,
                        epochs: meta.epochs.get(k).copied().unwrap_or(0),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Fitted::Sgd(SgdModel {
                config: *cfg,
                codec: meta.config.codec,
                heads,
            })
        }
        (k, cfg) => {
            return Err(ModelError::Format(format!(
                "body kind {k} does not match metadata kind {}",
                cfg.kind_name()
            )))
        }
    };
    if r.pos != bytes.len() {
        return Err(ModelError::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(TrainedModel {
        config: meta.config.clone(),
        feature_mode: meta.feature_mode,
        input_dim,
        pca,
        fitted,
    })
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    let (bytes, meta) = to_parts(model)?;
    fs::write(path, bytes)?;
    fs::write(meta_path(path), serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let bytes = fs::read(path)?;
    let meta: ModelMeta = serde_json::from_slice(&fs::read(meta_path(path))?)?;
    from_parts(&bytes, &meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::Codec;
    use crate::models::testutil::planted_groups;
    use crate::models::{fit_pipeline, stack_groups, KnnConfig, KnnWeights, SgdConfig};

    fn roundtrip(config: PipelineConfig) {
        let groups = planted_groups(20, 5, 1.0, 0.2, 7);
        let (x, y) = stack_groups(&groups).unwrap();
        let model = fit_pipeline(&x, &y, &config, FeatureMode::Concat).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.rvm");
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.predict_scores(&x).unwrap(), model.predict_scores(&x).unwrap());
    }

    #[test]
    fn knn_roundtrip_is_exact() {
        roundtrip(PipelineConfig {
            pca_components: Some(3),
            model: ModelConfig::Knn(KnnConfig::new(4).with_weights(KnnWeights::Distance)),
            codec: Codec::Thermometer,
        });
    }

    #[test]
    fn sgd_roundtrip_is_exact() {
        for codec in [Codec::Onehot, Codec::Thermometer] {
            roundtrip(PipelineConfig {
                pca_components: None,
                model: ModelConfig::Sgd(SgdConfig::new(0.001, 20, 3)),
                codec,
            });
        }
    }

    #[test]
    fn corrupt_bodies_are_rejected() {
        let groups = planted_groups(5, 2, 1.0, 0.2, 1);
        let (x, y) = stack_groups(&groups).unwrap();
        let cfg = PipelineConfig {
            pca_components: None,
            model: ModelConfig::Knn(KnnConfig::new(1)),
            codec: Codec::Onehot,
        };
        let model = fit_pipeline(&x, &y, &cfg, FeatureMode::Joint).unwrap();
        let (bytes, meta) = to_parts(&model).unwrap();
        assert!(from_parts(&bytes[..bytes.len() - 1], &meta).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(from_parts(&long, &meta).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(from_parts(&bad, &meta).is_err());
        let mut other = meta.clone();
        other.config.model = ModelConfig::Sgd(SgdConfig::new(0.1, 5, 0));
        assert!(from_parts(&bytes, &other).is_err());
    }
}
