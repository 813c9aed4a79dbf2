//! Content-addressed store for generation and embedding results.
//!
//! Layout: `<root>/v1/<first two hex digits>/<digest>.json`, one immutable
//! entry per file, published by write-to-temp-then-rename. The set of present
//! digests is rebuilt by scanning the tree on open. Each entry carries a
//! SHA-256 checksum of its value; a mismatch is treated as a miss.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use interrogate_core::EmbeddingVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{EmbeddingBackend, GenerationBackend, GenerationRequest};
use crate::error::{BackendError, Error, Result};

pub const CACHE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheKind {
    Generation,
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub kind: CacheKind,
    pub backend_id: String,
    /// hex SHA-256 of the canonicalized request
    pub payload_hash: String,
}

/// Length-prefixed field encoding, independent of platform and serializer.
struct Canonical(Vec<u8>);

impl Canonical {
    fn new(tag: &str) -> Self {
        let mut c = Canonical(Vec::new());
        c.bytes(tag.as_bytes());
        c
    }

    fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.0.extend_from_slice(&(b.len() as u64).to_le_bytes());
        self.0.extend_from_slice(b);
        self
    }

    fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_le_bytes())
    }

    fn digest(&self) -> String {
        hex::encode(Sha256::digest(&self.0))
    }
}

impl CacheKey {
    pub fn generation(backend_identity: &str, req: &GenerationRequest) -> Self {
        let mut c = Canonical::new("generation");
        c.bytes(req.prompt.as_bytes())
            .u64(req.temperature.to_bits())
            .u64(u64::from(req.max_tokens));
        match req.seed {
            Some(s) => c.bytes(b"seed").u64(s),
            None => c.bytes(b"noseed"),
        };
        c.u64(req.stop.len() as u64);
        for s in &req.stop {
            c.bytes(s.as_bytes());
        }
        Self {
            kind: CacheKind::Generation,
            backend_id: backend_identity.into(),
            payload_hash: c.digest(),
        }
    }

    pub fn embedding(backend_identity: &str, text: &str) -> Self {
        let mut c = Canonical::new("embedding");
        c.bytes(text.as_bytes());
        Self {
            kind: CacheKind::Embedding,
            backend_id: backend_identity.into(),
            payload_hash: c.digest(),
        }
    }

    /// File-name digest over all key fields.
    pub fn digest(&self) -> String {
        let mut c = Canonical::new("key");
        c.bytes(match self.kind {
            CacheKind::Generation => b"generation",
            CacheKind::Embedding => b"embedding",
        })
        .bytes(self.backend_id.as_bytes())
        .bytes(self.payload_hash.as_bytes());
        c.digest()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CachedValue {
    Text(String),
    Vector(Vec<f64>),
}

impl CachedValue {
    fn checksum(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(self)?)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub schema_version: u32,
    pub key: CacheKey,
    pub value: CachedValue,
    /// seconds since the Unix epoch
    pub created_at: u64,
    pub checksum: String,
}

pub struct CacheStore {
    root: PathBuf,
    present: Mutex<HashSet<String>>,
    in_flight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl CacheStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into().join(format!("v{CACHE_SCHEMA_VERSION}"));
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let mut present = HashSet::new();
        for shard in std::fs::read_dir(&root).map_err(|e| Error::io(&root, e))? {
            let shard = shard.map_err(|e| Error::io(&root, e))?.path();
            if !shard.is_dir() {
                continue;
            }
            for file in std::fs::read_dir(&shard).map_err(|e| Error::io(&shard, e))? {
                let path = file.map_err(|e| Error::io(&shard, e))?.path();
                if path.extension().is_some_and(|e| e == "json") {
                    if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                        present.insert(stem.to_string());
                    }
                }
            }
        }
        Ok(Self {
            root,
            present: Mutex::new(present),
            in_flight: Mutex::new(HashMap::new()),
        })
    }

    pub fn len(&self) -> usize {
        self.present.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entry_path(&self, key: &CacheKey) -> PathBuf {
        let digest = key.digest();
        self.root.join(&digest[..2]).join(format!("{digest}.json"))
    }

    /// Reads and validates an entry; `Ok(None)` on a miss or a corrupt entry.
    pub fn get(&self, key: &CacheKey) -> Result<Option<CachedValue>> {
        if !self.present.lock().unwrap_or_else(|e| e.into_inner()).contains(&key.digest()) {
            return Ok(None);
        }
        let path = self.entry_path(key);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&path, e)),
        };
        let entry: CacheEntry = match serde_json::from_slice(&bytes) {
            Ok(e) => e,
            Err(err) => {
                log::warn!("cache entry {} unreadable ({err}); recomputing", path.display());
                return Ok(None);
            }
        };
        if entry.key != *key || entry.value.checksum()? != entry.checksum {
            log::warn!("cache entry {} failed its integrity check; recomputing", path.display());
            return Ok(None);
        }
        Ok(Some(entry.value))
    }

    /// Publishes an entry atomically. An existing valid entry is kept (first
    /// write wins); a corrupt one is replaced.
    pub fn put(&self, key: &CacheKey, value: &CachedValue) -> Result<()> {
        let path = self.entry_path(key);
        let dir = path.parent().expect("entry paths have a shard directory");
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let entry = CacheEntry {
            schema_version: CACHE_SCHEMA_VERSION,
            key: key.clone(),
            value: value.clone(),
            created_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            checksum: value.checksum()?,
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
        serde_json::to_writer(&mut tmp, &entry)?;
        let replace_corrupt = path.exists() && self.get_unindexed(key)?.is_none();
        let published = if replace_corrupt {
            tmp.persist(&path).map(|_| ()).map_err(|e| e.error)
        } else {
            match tmp.persist_noclobber(&path) {
                Ok(_) => Ok(()),
                Err(e) if e.error.kind() == std::io::ErrorKind::AlreadyExists => Ok(()),
                Err(e) => Err(e.error),
            }
        };
        published.map_err(|e| Error::io(&path, e))?;
        self.present
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(key.digest());
        Ok(())
    }

    fn get_unindexed(&self, key: &CacheKey) -> Result<Option<CachedValue>> {
        self.present
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(key.digest());
        self.get(key)
    }

    /// Returns the cached value, or runs `compute` once (per key, per process)
    /// and stores its result. Concurrent callers for one key wait for the
    /// first. Producer errors are returned and not cached.
    pub fn get_or_compute<F, E>(&self, key: &CacheKey, compute: F) -> Result<CachedValue, E>
    where
        F: FnOnce() -> Result<CachedValue, E>,
        E: From<Error>,
    {
        if let Some(v) = self.get(key)? {
            return Ok(v);
        }
        let digest = key.digest();
        let slot = self
            .in_flight
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .entry(digest.clone())
            .or_default()
            .clone();
        let result = {
            let _guard = slot.lock().unwrap_or_else(|e| e.into_inner());
            match self.get(key)? {
                Some(v) => Ok(v),
                None => {
                    let value = compute()?;
                    self.put(key, &value)?;
                    Ok(value)
                }
            }
        };
        let mut map = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        if Arc::strong_count(&slot) == 2 {
            map.remove(&digest);
        }
        result
    }
}

fn cache_failure(backend: &str, err: Error) -> BackendError {
    BackendError::Unavailable {
        backend: backend.into(),
        reason: format!("cache: {err}"),
    }
}

impl From<Error> for BackendError {
    fn from(err: Error) -> Self {
        match err {
            Error::Backend(b) => b,
            other => cache_failure("cache", other),
        }
    }
}

/// Generation backend that consults the store before calling through.
pub struct CachedGenerator {
    inner: Arc<dyn GenerationBackend>,
    store: Arc<CacheStore>,
}

impl CachedGenerator {
    pub fn new(inner: Arc<dyn GenerationBackend>, store: Arc<CacheStore>) -> Self {
        Self { inner, store }
    }
}

impl GenerationBackend for CachedGenerator {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn cache_identity(&self) -> String {
        self.inner.cache_identity()
    }

    fn default_temperature(&self) -> f64 {
        self.inner.default_temperature()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let key = CacheKey::generation(&self.inner.cache_identity(), request);
        let value = self
            .store
            .get_or_compute(&key, || self.inner.generate(request).map(CachedValue::Text))?;
        match value {
            CachedValue::Text(t) => Ok(t),
            CachedValue::Vector(_) => Err(cache_failure(self.id(), Error::Cache("expected text entry".into()))),
        }
    }
}

pub struct CachedEmbedder {
    inner: Arc<dyn EmbeddingBackend>,
    store: Arc<CacheStore>,
}

impl CachedEmbedder {
    pub fn new(inner: Arc<dyn EmbeddingBackend>, store: Arc<CacheStore>) -> Self {
        Self { inner, store }
    }
}

impl EmbeddingBackend for CachedEmbedder {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn cache_identity(&self) -> String {
        self.inner.cache_identity()
    }

    fn dimension(&self) -> Option<usize> {
        self.inner.dimension()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        let key = CacheKey::embedding(&self.inner.cache_identity(), text);
        let value = self.store.get_or_compute(&key, || {
            self.inner.embed(text).map(|v| CachedValue::Vector(v.into_inner()))
        })?;
        match value {
            CachedValue::Vector(v) => {
                EmbeddingVector::new(v).map_err(|e| cache_failure(self.id(), Error::Core(e)))
            }
            CachedValue::Text(_) => Err(cache_failure(self.id(), Error::Cache("expected vector entry".into()))),
        }
    }
}

/// Removes every entry under `root`. Used by tests and `--fresh` runs.
pub fn clear(root: &Path) -> Result<()> {
    let dir = root.join(format!("v{CACHE_SCHEMA_VERSION}"));
    match std::fs::remove_dir_all(&dir) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(Error::io(dir, e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn req(t: f64) -> GenerationRequest {
        GenerationRequest::new("prompt", t, 16).with_seed(3)
    }

    #[test]
    fn second_call_skips_producer() {
        let dir = tempfile::tempdir().unwrap();
        let store = CacheStore::open(dir.path()).unwrap();
        let key = CacheKey::generation("b", &req(0.6));
        let calls = AtomicUsize::new(0);
        let produce = || -> Result<CachedValue> {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok(CachedValue::Text("hello".into()))
        };
        assert_eq!(store.get_or_compute(&key, produce).unwrap(), CachedValue::Text("hello".into()));
        assert_eq!(store.get_or_compute(&key, produce).unwrap(), CachedValue::Text("hello".into()));
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        // index rebuilt on reopen
        let reopened = CacheStore::open(dir.path()).unwrap();
        assert_eq!(reopened.len(), 1);
        assert_eq!(reopened.get(&key).unwrap(), Some(CachedValue::Text("hello".into())));
    }

    #[test]
    fn keys_distinguish_request_fields() {
        let a = CacheKey::generation("b", &req(0.6));
        assert_ne!(a, CacheKey::generation("b", &req(0.68)));
        assert_ne!(a, CacheKey::generation("b#other-model", &req(0.6)));
        assert_ne!(a, CacheKey::generation("b", &req(0.6).with_seed(4)));
        assert_ne!(a, CacheKey::generation("b", &req(0.6).with_stop(["x"])));
        assert_eq!(a, CacheKey::generation("b", &req(0.6)));
        assert_ne!(CacheKey::embedding("b", "x").digest(), CacheKey::embedding("b", "y").digest());
    }

    #[test]
    fn corrupt_entry_is_recomputed() {
        let dir = tempfile::tempdir().unwrap();
        let store = CacheStore::open(dir.path()).unwrap();
        let key = CacheKey::embedding("e", "text");
        store.put(&key, &CachedValue::Vector(vec![0.25, 0.5])).unwrap();
        let path = store.entry_path(&key);
        let tampered = std::fs::read_to_string(&path).unwrap().replace("0.25", "0.75");
        std::fs::write(&path, tampered).unwrap();
        assert_eq!(store.get(&key).unwrap(), None);
        let v = store
            .get_or_compute(&key, || Ok::<_, Error>(CachedValue::Vector(vec![0.25, 0.5])))
            .unwrap();
        assert_eq!(v, CachedValue::Vector(vec![0.25, 0.5]));
        assert_eq!(store.get(&key).unwrap(), Some(v));
    }

    #[test]
    fn producer_failure_not_cached() {
        let dir = tempfile::tempdir().unwrap();
        let store = CacheStore::open(dir.path()).unwrap();
        let key = CacheKey::embedding("e", "t");
        let err = store.get_or_compute(&key, || Err::<CachedValue, _>(Error::Cache("boom".into())));
        assert!(err.is_err());
        assert_eq!(store.get(&key).unwrap(), None);
    }

    #[test]
    fn vectors_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let store = CacheStore::open(dir.path()).unwrap();
        let v = vec![0.1 + 0.2, 1.0 / 3.0, -2.5e-300, 0.9746318461970762];
        let key = CacheKey::embedding("e", "t");
        store.put(&key, &CachedValue::Vector(v.clone())).unwrap();
        let CachedValue::Vector(got) = store.get(&key).unwrap().unwrap() else { panic!() };
        assert!(got.iter().zip(&v).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn single_flight_under_contention() {
        let dir = tempfile::tempdir().unwrap();
        let store = CacheStore::open(dir.path()).unwrap();
        let key = CacheKey::embedding("e", "contended");
        let calls = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..16 {
                s.spawn(|| {
                    store
                        .get_or_compute(&key, || {
                            calls.fetch_add(1, Ordering::SeqCst);
                            std::thread::sleep(std::time::Duration::from_millis(20));
                            Ok::<_, Error>(CachedValue::Text("v".into()))
                        })
                        .unwrap()
                });
            }
        });
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }
}
