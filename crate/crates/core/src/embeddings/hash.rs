use xxhash_rust::xxh3::xxh3_64_with_seed;

use super::{EmbeddingError, EmbeddingProvider};

/// Lowercases `text` and splits it on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Maps a hash to a uniform value in [-1, 1).
fn unit_interval(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

/// Deterministic bag-of-tokens pseudo-embedding.
///
/// Each token contributes a seeded hash value per dimension; contributions
/// are summed and the sum is L2-normalized. Token order does not matter. A
/// text without tokens maps to the unit vector along dimension 0.
pub fn hash_encode(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    assert!(dim >= 1, "hash_encode needs dim >= 1");
    let mut acc = vec![0.0; dim];
    for token in tokenize(text) {
        let base = xxh3_64_with_seed(token.as_bytes(), seed);
        for (j, slot) in acc.iter_mut().enumerate() {
            *slot += unit_interval(splitmix64(base ^ (j as u64).wrapping_mul(0xd6e8_feb8_6659_fd93)));
        }
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        acc.iter_mut().for_each(|v| *v = 0.0);
        acc[0] = 1.0;
    } else {
        acc.iter_mut().for_each(|v| *v /= norm);
    }
    acc
}

/// Provider wrapping [`hash_encode`]; the encoder-free stand-in for a
/// pretrained sentence model.
#[derive(Debug, Clone)]
pub struct HashEncoder {
    model_id: String,
    dim: usize,
    seed: u64,
}

impl HashEncoder {
    pub fn new(model_id: impl Into<String>, dim: usize, seed: u64) -> Self {
        assert!(dim >= 1, "HashEncoder needs dim >= 1");
        Self {
            model_id: model_id.into(),
            dim,
            seed,
        }
    }

    /// Model id encoding the parameters, e.g. `hash-d64-s7`.
    pub fn with_default_id(dim: usize, seed: u64) -> Self {
        Self::new(format!("hash-d{dim}-s{seed}"), dim, seed)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl EmbeddingProvider for HashEncoder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        Ok(texts.iter().map(|t| hash_encode(t, self.dim, self.seed)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_normalized() {
        let a = hash_encode("The system shall encrypt data", 32, 3);
        assert_eq!(a, hash_encode("The system shall encrypt data", 32, 3));
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
        assert_ne!(a, hash_encode("The system shall encrypt data", 32, 4));
    }

    #[test]
    fn bag_of_tokens() {
        assert_eq!(hash_encode("alpha beta", 16, 1), hash_encode("beta alpha", 16, 1));
        assert_eq!(hash_encode("Alpha, BETA!", 16, 1), hash_encode("alpha beta", 16, 1));
        assert_ne!(hash_encode("alpha beta", 16, 1), hash_encode("alpha gamma", 16, 1));
    }

    /// Recomputes the rule directly for a two-token text.
    #[test]
    fn matches_rule_by_direct_evaluation() {
        let dim = 5;
        let seed = 17;
        let mut want = vec![0.0; dim];
        for tok in ["alpha", "beta"] {
            let base = xxh3_64_with_seed(tok.as_bytes(), seed);
            for (j, w) in want.iter_mut().enumerate() {
                let h = splitmix64(base ^ (j as u64).wrapping_mul(0xd6e8_feb8_6659_fd93));
                *w += (h >> 11) as f64 / 4503599627370496.0 - 1.0;
            }
        }
        let n = want.iter().map(|v| v * v).sum::<f64>().sqrt();
        want.iter_mut().for_each(|v| *v /= n);
        assert_eq!(hash_encode("beta alpha", dim, seed), want);
    }

    #[test]
    fn empty_text_is_first_axis() {
        assert_eq!(hash_encode("", 4, 0), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(hash_encode(" ,;- ", 3, 9), vec![1.0, 0.0, 0.0]);
        assert_eq!(hash_encode("anything", 1, 0).len(), 1);
    }

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize("The UAV shall not-exceed 120m."), ["the", "uav", "shall", "not", "exceed", "120m"]);
    }
}
