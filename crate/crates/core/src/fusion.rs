//! Classifier input features built from pair embeddings.
//!
//! Six-element layout over two encoder roles A and B:
//! `R1ᴬ ⊕ R2ᴬ ⊕ (R1ᴬ − R2ᴬ) ⊕ R1ᴮ ⊕ R2ᴮ ⊕ (R1ᴮ − R2ᴮ)`.
//! The three-element layout keeps only one role: `R1 ⊕ R2 ⊕ (R1 − R2)`.

use serde::{Deserialize, Serialize};

use crate::embeddings::{EmbeddingVector, PairEmbeddings};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FusionError {
    #[error("cannot fuse vectors of dimension {left} and {right}")]
    DimMismatch { left: usize, right: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureLayout {
    SixElement { dim_a: usize, dim_b: usize },
    ThreeElement { dim: usize },
}

impl FeatureLayout {
    pub fn len(self) -> usize {
        match self {
            FeatureLayout::SixElement { dim_a, dim_b } => 3 * dim_a + 3 * dim_b,
            FeatureLayout::ThreeElement { dim } => 3 * dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedFeature {
    pub values: Vec<f64>,
    pub layout: FeatureLayout,
}

/// Which fusion the pipeline applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Both encoder roles, six blocks.
    #[default]
    SixElement,
    /// Role A only, three blocks.
    ThreeElement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FusionConfig {
    pub mode: FusionMode,
    /// L2-normalize each sentence vector before fusing.
    #[serde(default)]
    pub normalize: bool,
}

fn push_triplet(out: &mut Vec<f64>, r1: &[f64], r2: &[f64]) {
    out.extend_from_slice(r1);
    out.extend_from_slice(r2);
    out.extend(r1.iter().zip(r2).map(|(a, b)| a - b));
}

fn check(r1: &EmbeddingVector, r2: &EmbeddingVector) -> Result<(), FusionError> {
    if r1.dim() != r2.dim() {
        return Err(FusionError::DimMismatch {
            left: r1.dim(),
            right: r2.dim(),
        });
    }
    Ok(())
}

pub fn fuse_three(r1: &EmbeddingVector, r2: &EmbeddingVector) -> Result<FusedFeature, FusionError> {
    check(r1, r2)?;
    let mut values = Vec::with_capacity(3 * r1.dim());
    push_triplet(&mut values, r1.values(), r2.values());
    Ok(FusedFeature {
        values,
        layout: FeatureLayout::ThreeElement { dim: r1.dim() },
    })
}

pub fn fuse_six(pe: &PairEmbeddings) -> Result<FusedFeature, FusionError> {
    check(&pe.r1_a, &pe.r2_a)?;
    check(&pe.r1_b, &pe.r2_b)?;
    let layout = FeatureLayout::SixElement {
        dim_a: pe.r1_a.dim(),
        dim_b: pe.r1_b.dim(),
    };
    let mut values = Vec::with_capacity(layout.len());
    push_triplet(&mut values, pe.r1_a.values(), pe.r2_a.values());
    push_triplet(&mut values, pe.r1_b.values(), pe.r2_b.values());
    Ok(FusedFeature { values, layout })
}

fn l2_normalized(v: &EmbeddingVector) -> EmbeddingVector {
    let norm = v.values().iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return v.clone();
    }
    let values = v.values().iter().map(|x| x / norm).collect();
    EmbeddingVector::new(v.model_id(), values).expect("scaling keeps finite values finite")
}

/// Applies `cfg` to one pair. Three-element mode ignores role B.
pub fn fuse(pe: &PairEmbeddings, cfg: FusionConfig) -> Result<FusedFeature, FusionError> {
    let prepared;
    let pe = if cfg.normalize {
        prepared = PairEmbeddings {
            r1_a: l2_normalized(&pe.r1_a),
            r2_a: l2_normalized(&pe.r2_a),
            r1_b: l2_normalized(&pe.r1_b),
            r2_b: l2_normalized(&pe.r2_b),
        };
        &prepared
    } else {
        pe
    };
    match cfg.mode {
        FusionMode::SixElement => fuse_six(pe),
        FusionMode::ThreeElement => fuse_three(&pe.r1_a, &pe.r2_a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(model: &str, v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(model, v.to_vec()).unwrap()
    }

    fn pe(a1: &[f64], a2: &[f64], b1: &[f64], b2: &[f64]) -> PairEmbeddings {
        PairEmbeddings::new(ev("a", a1), ev("a", a2), ev("b", b1), ev("b", b2)).unwrap()
    }

    #[test]
    fn six_element_example() {
        let f = fuse_six(&pe(&[1.0, 0.0], &[0.0, 1.0], &[2.0, 2.0], &[1.0, 3.0])).unwrap();
        assert_eq!(
            f.values,
            vec![1.0, 0.0, 0.0, 1.0, 1.0, -1.0, 2.0, 2.0, 1.0, 3.0, 1.0, -1.0]
        );
        assert_eq!(f.layout, FeatureLayout::SixElement { dim_a: 2, dim_b: 2 });
        assert_eq!(f.layout.len(), 12);
    }

    #[test]
    fn three_element_example() {
        let f = fuse_three(&ev("a", &[1.0, 2.0]), &ev("a", &[0.0, 1.0])).unwrap();
        assert_eq!(f.values, vec![1.0, 2.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(f.values.len(), f.layout.len());
        assert_eq!(
            fuse_three(&ev("a", &[1.0, 2.0]), &ev("a", &[0.0])),
            Err(FusionError::DimMismatch { left: 2, right: 1 })
        );
    }

    #[test]
    fn identical_sentences_zero_differences() {
        let f = fuse_six(&pe(&[0.3, -0.2, 0.9], &[0.3, -0.2, 0.9], &[4.0], &[4.0])).unwrap();
        assert!(f.values[6..9].iter().all(|&v| v == 0.0));
        assert_eq!(f.values[11], 0.0);
        assert_eq!(f.values.len(), 3 * 3 + 3);
    }

    #[test]
    fn mixed_dims_lengths() {
        let f = fuse_six(&pe(&[1.0; 4], &[2.0; 4], &[1.0; 7], &[0.0; 7])).unwrap();
        assert_eq!(f.values.len(), 3 * 4 + 3 * 7);
    }

    #[test]
    fn fuse_modes_and_normalization() {
        let p = pe(&[3.0, 4.0], &[0.0, 2.0], &[1.0], &[1.0]);
        let three = fuse(&p, FusionConfig { mode: FusionMode::ThreeElement, normalize: false }).unwrap();
        assert_eq!(three, fuse_three(&p.r1_a, &p.r2_a).unwrap());
        let normed = fuse(&p, FusionConfig { mode: FusionMode::SixElement, normalize: true }).unwrap();
        let want = [0.6, 0.8, 0.0, 1.0, 0.6, -0.2];
        assert!(normed.values[..6].iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn vecs(n: usize) -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(-1e3f64..1e3, n)
        }

        proptest! {
            #[test]
            fn six_prefix_is_three_and_swap_antisymmetry(
                (a1, a2, b1, b2) in (1usize..8, 1usize..8).prop_flat_map(|(da, db)| (vecs(da), vecs(da), vecs(db), vecs(db)))
            ) {
                let da = a1.len();
                let f = fuse_six(&pe(&a1, &a2, &b1, &b2)).unwrap();
                let three = fuse_three(&ev("a", &a1), &ev("a", &a2)).unwrap();
                prop_assert_eq!(&f.values[..3 * da], three.values.as_slice());
                prop_assert!(f.values.iter().all(|v| v.is_finite()));

                let swapped = fuse_six(&pe(&a2, &a1, &b1, &b2)).unwrap();
                prop_assert_eq!(&swapped.values[..da], &f.values[da..2 * da]);
                prop_assert_eq!(&swapped.values[da..2 * da], &f.values[..da]);
                for i in 2 * da..3 * da {
                    prop_assert_eq!(swapped.values[i], -f.values[i]);
                }
                prop_assert_eq!(&swapped.values[3 * da..], &f.values[3 * da..]);
            }
        }
    }
}
