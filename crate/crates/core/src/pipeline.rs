//! Dataset to feature-matrix plumbing: resolves both encoder roles through
//! their caches and fuses each pair.

use std::sync::Arc;

use crate::corpus::{Dataset, Label};
use crate::embeddings::{CachedEncoder, EmbeddingError, EmbeddingVector, EncoderRole, HashEncoder, PairEmbeddings};
use crate::fusion::{self, FusedFeature, FusionConfig, FusionError, FusionMode};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("six-element fusion needs an encoder for role B")]
    MissingRoleB,
    #[error("pair {id:?} has no gold label")]
    Unlabeled { id: String },
}

#[derive(Clone)]
pub struct Featurizer {
    pub a: Arc<CachedEncoder>,
    pub b: Option<Arc<CachedEncoder>>,
    pub fusion: FusionConfig,
}

impl Featurizer {
    pub fn new(a: CachedEncoder, b: Option<CachedEncoder>, fusion: FusionConfig) -> Self {
        Self {
            a: Arc::new(a),
            b: b.map(Arc::new),
            fusion,
        }
    }

    pub fn encoder(&self, role: EncoderRole) -> Option<&Arc<CachedEncoder>> {
        match role {
            EncoderRole::A => Some(&self.a),
            EncoderRole::B => self.b.as_ref(),
        }
    }

    /// Deterministic hash encoders for both roles, seeds 1 and 2, no cache.
    pub fn hashed(dim: usize, fusion: FusionConfig) -> Self {
        Self::new(
            CachedEncoder::uncached(Box::new(HashEncoder::with_default_id(dim, 1))),
            Some(CachedEncoder::uncached(Box::new(HashEncoder::with_default_id(dim, 2)))),
            fusion,
        )
    }

    fn encode(enc: &CachedEncoder, dataset: &Dataset) -> Result<(Vec<EmbeddingVector>, Vec<EmbeddingVector>), EmbeddingError> {
        let texts: Vec<&str> = dataset
            .pairs()
            .iter()
            .flat_map(|p| [p.text1.as_str(), p.text2.as_str()])
            .collect();
        let mut vecs = enc.resolve(&texts)?.into_iter();
        let mut r1 = Vec::with_capacity(dataset.len());
        let mut r2 = Vec::with_capacity(dataset.len());
        while let (Some(a), Some(b)) = (vecs.next(), vecs.next()) {
            r1.push(a);
            r2.push(b);
        }
        Ok((r1, r2))
    }

    pub fn featurize(&self, dataset: &Dataset) -> Result<Vec<FusedFeature>, PipelineError> {
        let (r1_a, r2_a) = Self::encode(&self.a, dataset)?;
        match self.fusion.mode {
            FusionMode::ThreeElement => {
                let cfg = self.fusion;
                r1_a.into_iter()
                    .zip(r2_a)
                    .map(|(r1, r2)| {
                        // role B is ignored in this mode; reuse A to satisfy the pair shape
                        let pe = PairEmbeddings::new(r1.clone(), r2.clone(), r1, r2)?;
                        Ok(fusion::fuse(&pe, cfg)?)
                    })
                    .collect()
            }
            FusionMode::SixElement => {
                let b = self.b.as_ref().ok_or(PipelineError::MissingRoleB)?;
                let (r1_b, r2_b) = Self::encode(b, dataset)?;
                r1_a.into_iter()
                    .zip(r2_a)
                    .zip(r1_b.into_iter().zip(r2_b))
                    .map(|((a1, a2), (b1, b2))| Ok(fusion::fuse(&PairEmbeddings::new(a1, a2, b1, b2)?, self.fusion)?))
                    .collect()
            }
        }
    }
}

/// Gold labels in dataset order; every pair must be labelled.
pub fn gold_labels(dataset: &Dataset) -> Result<Vec<Label>, PipelineError> {
    dataset
        .pairs()
        .iter()
        .map(|p| p.label.ok_or_else(|| PipelineError::Unlabeled { id: p.id.clone() }))
        .collect()
}
