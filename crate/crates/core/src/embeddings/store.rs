//! Append-only binary vector cache.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "TSRV" | version: u16 | dim: u32 | model_id_len: u32 | model_id (UTF-8)
//! then repeated records: key: u64 | dim x f64
//! ```
//!
//! Keys are the 64-bit XXH3 hash of the exact text bytes.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use xxhash_rust::xxh3::xxh3_64;

use super::{EmbeddingError, EmbeddingProvider};

pub const STORE_MAGIC: &[u8; 4] = b"TSRV";
pub const STORE_VERSION: u16 = 1;

pub fn content_key(text: &str) -> u64 {
    xxh3_64(text.as_bytes())
}

struct Inner {
    vectors: HashMap<u64, Vec<f64>>,
    file: Option<BufWriter<File>>,
}

/// Text-keyed vector cache for one `(model_id, dim)`. Writes are serialized
/// behind a lock; reads can proceed concurrently.
pub struct VectorStore {
    model_id: String,
    dim: usize,
    path: Option<PathBuf>,
    inner: RwLock<Inner>,
}

fn header_bytes(model_id: &str, dim: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(14 + model_id.len());
    out.extend_from_slice(STORE_MAGIC);
    out.extend_from_slice(&STORE_VERSION.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(model_id.len() as u32).to_le_bytes());
    out.extend_from_slice(model_id.as_bytes());
    out
}

fn corrupt(msg: impl Into<String>) -> EmbeddingError {
    EmbeddingError::CorruptFile(msg.into())
}

struct Parsed {
    model_id: String,
    dim: usize,
    vectors: HashMap<u64, Vec<f64>>,
}

fn parse(bytes: &[u8]) -> Result<Parsed, EmbeddingError> {
    if bytes.len() < 14 {
        return Err(corrupt("truncated header"));
    }
    if &bytes[..4] != STORE_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != STORE_VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let id_len = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    if dim == 0 {
        return Err(corrupt("zero dimension"));
    }
    let body_start = 14 + id_len;
    if bytes.len() < body_start {
        return Err(corrupt("truncated model id"));
    }
    let model_id = std::str::from_utf8(&bytes[14..body_start])
        .map_err(|_| corrupt("model id is not UTF-8"))?
        .to_string();
    let body = &bytes[body_start..];
    let record_len = 8 + 8 * dim;
    if body.len() % record_len != 0 {
        return Err(corrupt(format!(
            "{} trailing bytes after last complete record",
            body.len() % record_len
        )));
    }
    let mut vectors = HashMap::with_capacity(body.len() / record_len);
    for record in body.chunks_exact(record_len) {
        let key = u64::from_le_bytes(record[..8].try_into().unwrap());
        let values = record[8..]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        vectors.insert(key, values);
    }
    Ok(Parsed { model_id, dim, vectors })
}

impl VectorStore {
    pub fn in_memory(model_id: impl Into<String>, dim: usize) -> Self {
        Self {
            model_id: model_id.into(),
            dim,
            path: None,
            inner: RwLock::new(Inner {
                vectors: HashMap::new(),
                file: None,
            }),
        }
    }

    /// Opens or creates the store at `path`. An existing file must carry the
    /// same `(model_id, dim)` header.
    pub fn open(path: &Path, model_id: &str, dim: usize) -> Result<Self, EmbeddingError> {
        let existing = match std::fs::read(path) {
            Ok(bytes) if !bytes.is_empty() => Some(parse(&bytes)?),
            Ok(_) => None,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(e.into()),
        };
        let vectors = match existing {
            Some(p) => {
                if p.model_id != model_id || p.dim != dim {
                    return Err(EmbeddingError::HeaderMismatch {
                        model: model_id.to_string(),
                        dim,
                        found_model: p.model_id,
                        found_dim: p.dim,
                    });
                }
                p.vectors
            }
            None => {
                let mut f = File::create(path)?;
                f.write_all(&header_bytes(model_id, dim))?;
                f.sync_data()?;
                HashMap::new()
            }
        };
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self {
            model_id: model_id.to_string(),
            dim,
            path: Some(path.to_path_buf()),
            inner: RwLock::new(Inner {
                vectors,
                file: Some(BufWriter::new(file)),
            }),
        })
    }

    /// Opens an existing store, taking `(model_id, dim)` from its header.
    pub fn open_existing(path: &Path) -> Result<Self, EmbeddingError> {
        let mut header = Vec::new();
        File::open(path)?.take(1 << 16).read_to_end(&mut header)?;
        if header.len() < 14 {
            return Err(corrupt("truncated header"));
        }
        let id_len = u32::from_le_bytes(header[10..14].try_into().unwrap()) as usize;
        let head = parse(&header[..(14 + id_len).min(header.len())])?;
        Self::open(path, &head.model_id, head.dim)
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.inner.read().unwrap().vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, text: &str) -> Option<Vec<f64>> {
        self.inner.read().unwrap().vectors.get(&content_key(text)).cloned()
    }

    pub fn contains(&self, text: &str) -> bool {
        self.inner.read().unwrap().vectors.contains_key(&content_key(text))
    }

    pub fn put(&self, text: &str, values: &[f64]) -> Result<(), EmbeddingError> {
        self.put_many(std::iter::once((text, values)))
    }

    /// Inserts vectors for texts not yet stored and flushes them to disk.
    /// Texts already present are left untouched.
    pub fn put_many<'a>(
        &self,
        entries: impl IntoIterator<Item = (&'a str, &'a [f64])>,
    ) -> Result<(), EmbeddingError> {
        let mut inner = self.inner.write().unwrap();
        let Inner { vectors, file } = &mut *inner;
        for (text, values) in entries {
            if values.len() != self.dim {
                return Err(EmbeddingError::DimMismatch {
                    expected: self.dim,
                    found: values.len(),
                });
            }
            let key = content_key(text);
            if vectors.contains_key(&key) {
                continue;
            }
            if let Some(w) = file.as_mut() {
                w.write_all(&key.to_le_bytes())?;
                for v in values {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            vectors.insert(key, values.to_vec());
        }
        if let Some(w) = file.as_mut() {
            w.flush()?;
        }
        Ok(())
    }
}

/// Serves vectors from a store only; texts without a stored vector fail.
pub struct StoreProvider {
    store: VectorStore,
}

impl StoreProvider {
    pub fn new(store: VectorStore) -> Self {
        Self { store }
    }

    pub fn open(path: &Path) -> Result<Self, EmbeddingError> {
        Ok(Self::new(VectorStore::open_existing(path)?))
    }
}

impl EmbeddingProvider for StoreProvider {
    fn model_id(&self) -> &str {
        self.store.model_id()
    }

    fn dim(&self) -> usize {
        self.store.dim()
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        texts
            .iter()
            .map(|t| {
                self.store
                    .get(t)
                    .ok_or_else(|| EmbeddingError::MissingVector(t.to_string()))
            })
            .collect()
    }
}
