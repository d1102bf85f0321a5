//! Sentence vectors from pluggable providers, backed by a persistent cache.

mod hash;
mod remote;
mod store;

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use hash::{hash_encode, tokenize, HashEncoder};
pub use remote::{EncoderFinetuner, FinetuneParams, RemoteEncoder, RemoteEncoderService, ServiceModel};
pub use store::{content_key, StoreProvider, VectorStore, STORE_MAGIC, STORE_VERSION};

/// Default number of texts per provider request.
pub const DEFAULT_BATCH_SIZE: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("model mismatch: expected {expected:?}, found {found:?}")]
    ModelMismatch { expected: String, found: String },
    #[error("vector store header mismatch: file has ({found_model:?}, {found_dim}), requested ({model:?}, {dim})")]
    HeaderMismatch {
        model: String,
        dim: usize,
        found_model: String,
        found_dim: usize,
    },
    #[error("corrupt vector store: {0}")]
    CorruptFile(String),
    #[error("vector store i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("provider returned {found} vectors for {expected} texts")]
    CountMismatch { expected: usize, found: usize },
    #[error("non-finite value in embedding from {0}")]
    NonFinite(String),
    #[error("embedding must have at least one dimension")]
    EmptyVector,
    #[error("no stored vector for text {0:?}")]
    MissingVector(String),
    #[error("encoder fine-tune rejected (status {status}): {message}")]
    FinetuneRejected { status: u16, message: String },
}

/// A finite, non-empty sentence vector tagged with the model that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    model_id: Arc<str>,
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(model_id: impl Into<Arc<str>>, values: Vec<f64>) -> Result<Self, EmbeddingError> {
        let model_id = model_id.into();
        if values.is_empty() {
            return Err(EmbeddingError::EmptyVector);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite(model_id.to_string()));
        }
        Ok(Self { model_id, values })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Both sentences of a pair under both encoder roles.
#[derive(Debug, Clone, PartialEq)]
pub struct PairEmbeddings {
    pub r1_a: EmbeddingVector,
    pub r2_a: EmbeddingVector,
    pub r1_b: EmbeddingVector,
    pub r2_b: EmbeddingVector,
}

impl PairEmbeddings {
    pub fn new(
        r1_a: EmbeddingVector,
        r2_a: EmbeddingVector,
        r1_b: EmbeddingVector,
        r2_b: EmbeddingVector,
    ) -> Result<Self, EmbeddingError> {
        for (x, y) in [(&r1_a, &r2_a), (&r1_b, &r2_b)] {
            if x.dim() != y.dim() {
                return Err(EmbeddingError::DimMismatch {
                    expected: x.dim(),
                    found: y.dim(),
                });
            }
            if x.model_id() != y.model_id() {
                return Err(EmbeddingError::ModelMismatch {
                    expected: x.model_id().to_string(),
                    found: y.model_id().to_string(),
                });
            }
        }
        Ok(Self { r1_a, r2_a, r1_b, r2_b })
    }
}

/// The two independent encoders whose outputs are fused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderRole {
    A,
    B,
}

impl EncoderRole {
    pub fn name(self) -> &'static str {
        match self {
            EncoderRole::A => "a",
            EncoderRole::B => "b",
        }
    }
}

/// A sentence encoder. Implementations must return identical vectors for
/// identical texts within one session.
pub trait EmbeddingProvider: Send + Sync {
    fn model_id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError>;
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<P> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        (**self).embed(texts)
    }
}

/// Returns one vector per input text, in input order. Cached texts are served
/// from `store`; distinct misses are fetched in batches of `batch_size` and
/// written back before returning.
pub fn resolve_embeddings(
    provider: &dyn EmbeddingProvider,
    store: &VectorStore,
    texts: &[&str],
    batch_size: usize,
) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
    if store.dim() != provider.dim() {
        return Err(EmbeddingError::DimMismatch {
            expected: store.dim(),
            found: provider.dim(),
        });
    }
    if store.model_id() != provider.model_id() {
        return Err(EmbeddingError::ModelMismatch {
            expected: store.model_id().to_string(),
            found: provider.model_id().to_string(),
        });
    }
    let model_id: Arc<str> = Arc::from(provider.model_id());

    let mut resolved: HashMap<&str, Vec<f64>> = HashMap::new();
    let mut misses: Vec<&str> = Vec::new();
    let mut seen: HashSet<&str> = HashSet::new();
    for &text in texts {
        if !seen.insert(text) {
            continue;
        }
        match store.get(text) {
            Some(v) => {
                resolved.insert(text, v);
            }
            None => misses.push(text),
        }
    }

    for chunk in misses.chunks(batch_size.max(1)) {
        let vectors = provider.embed(chunk)?;
        if vectors.len() != chunk.len() {
            return Err(EmbeddingError::CountMismatch {
                expected: chunk.len(),
                found: vectors.len(),
            });
        }
        for v in &vectors {
            if v.len() != provider.dim() {
                return Err(EmbeddingError::DimMismatch {
                    expected: provider.dim(),
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(EmbeddingError::NonFinite(provider.model_id().to_string()));
            }
        }
        store.put_many(chunk.iter().copied().zip(vectors.iter().map(Vec::as_slice)))?;
        for (&text, v) in chunk.iter().zip(vectors) {
            resolved.insert(text, v);
        }
    }

    texts
        .iter()
        .map(|t| EmbeddingVector::new(model_id.clone(), resolved[t].clone()))
        .collect()
}

/// A provider paired with the cache that fronts it.
pub struct CachedEncoder {
    provider: Box<dyn EmbeddingProvider>,
    store: VectorStore,
    batch_size: usize,
}

impl CachedEncoder {
    pub fn new(provider: Box<dyn EmbeddingProvider>, store: VectorStore) -> Self {
        Self {
            provider,
            store,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }

    /// Fronts `provider` with a fresh in-memory cache.
    pub fn uncached(provider: Box<dyn EmbeddingProvider>) -> Self {
        let store = VectorStore::in_memory(provider.model_id(), provider.dim());
        Self::new(provider, store)
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn model_id(&self) -> &str {
        self.provider.model_id()
    }

    pub fn dim(&self) -> usize {
        self.provider.dim()
    }

    pub fn store(&self) -> &VectorStore {
        &self.store
    }

    pub fn resolve(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        resolve_embeddings(self.provider.as_ref(), &self.store, texts, self.batch_size)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    struct Counting {
        inner: HashEncoder,
        calls: AtomicUsize,
        batches: Mutex<Vec<usize>>,
    }

    impl Counting {
        fn new(dim: usize) -> Self {
            Self {
                inner: HashEncoder::new("count", dim, 5),
                calls: AtomicUsize::new(0),
                batches: Mutex::new(Vec::new()),
            }
        }
    }

    impl EmbeddingProvider for Counting {
        fn model_id(&self) -> &str {
            self.inner.model_id()
        }
        fn dim(&self) -> usize {
            self.inner.dim()
        }
        fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.batches.lock().unwrap().push(texts.len());
            self.inner.embed(texts)
        }
    }

    #[test]
    fn all_cached_means_no_calls() {
        let p = Counting::new(8);
        let store = VectorStore::in_memory("count", 8);
        let texts = ["a b", "c d"];
        let first = resolve_embeddings(&p, &store, &texts, 64).unwrap();
        assert_eq!(p.calls.load(Ordering::SeqCst), 1);
        let second = resolve_embeddings(&p, &store, &texts, 64).unwrap();
        assert_eq!(p.calls.load(Ordering::SeqCst), 1);
        assert_eq!(first, second);
    }

    #[test]
    fn empty_input() {
        let p = Counting::new(8);
        let store = VectorStore::in_memory("count", 8);
        assert!(resolve_embeddings(&p, &store, &[], 64).unwrap().is_empty());
        assert_eq!(p.calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn partial_hits_fetch_one_batch_of_misses() {
        let p = Counting::new(8);
        let store = VectorStore::in_memory("count", 8);
        resolve_embeddings(&p, &store, &["t0", "t3"], 64).unwrap();
        p.batches.lock().unwrap().clear();
        let texts = ["t0", "t1", "t2", "t3", "t4"];
        let out = resolve_embeddings(&p, &store, &texts, 64).unwrap();
        assert_eq!(*p.batches.lock().unwrap(), vec![3]);
        assert_eq!(out.len(), 5);
        for (t, v) in texts.iter().zip(&out) {
            assert_eq!(v.values(), hash_encode(t, 8, 5).as_slice());
        }
    }

    #[test]
    fn misses_are_batched_and_deduplicated() {
        let p = Counting::new(4);
        let store = VectorStore::in_memory("count", 4);
        let owned: Vec<String> = (0..10).map(|i| format!("s{}", i % 7)).collect();
        let texts: Vec<&str> = owned.iter().map(String::as_str).collect();
        resolve_embeddings(&p, &store, &texts, 3).unwrap();
        assert_eq!(*p.batches.lock().unwrap(), vec![3, 3, 1]);
        assert_eq!(store.len(), 7);
    }

    #[test]
    fn store_provider_mismatch() {
        let p = Counting::new(8);
        let store = VectorStore::in_memory("count", 16);
        assert!(matches!(
            resolve_embeddings(&p, &store, &["x"], 64),
            Err(EmbeddingError::DimMismatch { expected: 16, found: 8 })
        ));
        let store = VectorStore::in_memory("other", 8);
        assert!(matches!(
            resolve_embeddings(&p, &store, &["x"], 64),
            Err(EmbeddingError::ModelMismatch { .. })
        ));
    }

    #[test]
    fn vector_and_pair_invariants() {
        assert!(matches!(EmbeddingVector::new("m", vec![]), Err(EmbeddingError::EmptyVector)));
        assert!(matches!(
            EmbeddingVector::new("m", vec![1.0, f64::NAN]),
            Err(EmbeddingError::NonFinite(_))
        ));
        let v = |m: &str, n: usize| EmbeddingVector::new(m, vec![0.5; n]).unwrap();
        assert!(PairEmbeddings::new(v("a", 2), v("a", 2), v("b", 3), v("b", 3)).is_ok());
        assert!(matches!(
            PairEmbeddings::new(v("a", 2), v("a", 3), v("b", 3), v("b", 3)),
            Err(EmbeddingError::DimMismatch { .. })
        ));
        assert!(matches!(
            PairEmbeddings::new(v("a", 2), v("a", 2), v("b", 3), v("c", 3)),
            Err(EmbeddingError::ModelMismatch { .. })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn cache_is_transparent(
                words in proptest::collection::vec("[a-e]{1,3}( [a-e]{1,3}){0,2}", 0..20),
                warm in proptest::collection::vec(any::<bool>(), 20),
                batch in 1usize..6,
            ) {
                let enc = HashEncoder::new("h", 6, 9);
                let store = VectorStore::in_memory("h", 6);
                for (w, &pre) in words.iter().zip(&warm) {
                    if pre {
                        store.put(w, &enc.embed(&[w.as_str()]).unwrap()[0]).unwrap();
                    }
                }
                let texts: Vec<&str> = words.iter().map(String::as_str).collect();
                let via_cache = resolve_embeddings(&enc, &store, &texts, batch).unwrap();
                let direct = enc.embed(&texts).unwrap();
                prop_assert_eq!(via_cache.len(), direct.len());
                for (a, b) in via_cache.iter().zip(&direct) {
                    prop_assert_eq!(a.values(), b.as_slice());
                }
            }
        }
    }
}
