//! Disk-backed completion cache.
//!
//! Layout: one file per cache key digest holding the raw completion text,
//! plus a `<digest>.meta.json` sidecar with the request that produced it.
//! Writes go through a temp file and rename, so a torn write never leaves
//! a half-filled body behind.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::Mutex;

use super::{BackendError, CompletionBackend, DecodeParams};

/// Content-addressed key for one completion request.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey(String);

impl CacheKey {
    /// Digest of (backend id, model, prompt, decode params, attempt
    /// index). Fields are length-prefixed so no two field combinations
    /// share a byte stream.
    pub fn compute(
        backend_id: &str,
        model: &str,
        prompt: &str,
        params: &DecodeParams,
        attempt: u32,
    ) -> Self {
        let mut hasher = Sha256::new();
        for field in [backend_id, model, prompt] {
            hasher.update((field.len() as u64).to_be_bytes());
            hasher.update(field.as_bytes());
        }
        hasher.update(params.temperature.to_bits().to_be_bytes());
        hasher.update(params.max_tokens.to_be_bytes());
        match params.seed {
            Some(seed) => {
                hasher.update([1u8]);
                hasher.update(seed.to_be_bytes());
            }
            None => hasher.update([0u8]),
        }
        hasher.update(attempt.to_be_bytes());
        CacheKey(hex::encode(hasher.finalize()))
    }

    pub fn digest(&self) -> &str {
        &self.0
    }
}

/// Request metadata written alongside each cached body.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheMeta {
    pub backend_id: String,
    pub prompt: String,
    pub params: DecodeParams,
    pub attempt: u32,
    pub created_at: String,
}

/// One-file-per-entry completion cache rooted at a directory.
#[derive(Debug, Clone)]
pub struct DiskCache {
    dir: PathBuf,
}

impl DiskCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| BackendError::Cache(e.to_string()))?;
        Ok(DiskCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn body_path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(key.digest())
    }

    fn meta_path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.meta.json", key.digest()))
    }

    pub fn get(&self, key: &CacheKey) -> Option<String> {
        fs::read_to_string(self.body_path(key)).ok()
    }

    pub fn put(&self, key: &CacheKey, body: &str, meta: &CacheMeta) -> Result<(), BackendError> {
        self.write_atomic(&self.body_path(key), body.as_bytes())?;
        let meta_json =
            serde_json::to_string_pretty(meta).map_err(|e| BackendError::Cache(e.to_string()))?;
        self.write_atomic(&self.meta_path(key), meta_json.as_bytes())
    }

    fn write_atomic(&self, path: &Path, bytes: &[u8]) -> Result<(), BackendError> {
        let file_name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("entry");
        let tmp = self.dir.join(format!(".{file_name}.tmp"));
        let mut f = fs::File::create(&tmp).map_err(|e| BackendError::Cache(e.to_string()))?;
        f.write_all(bytes)
            .and_then(|_| f.flush())
            .map_err(|e| BackendError::Cache(e.to_string()))?;
        fs::rename(&tmp, path).map_err(|e| BackendError::Cache(e.to_string()))
    }
}

/// Caching wrapper around any backend. A hit never touches the inner
/// backend; concurrent misses on the same key coalesce into one upstream
/// request via a per-key guard.
pub struct CachedBackend<B> {
    inner: B,
    cache: DiskCache,
    inflight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl<B: CompletionBackend> CachedBackend<B> {
    pub fn new(inner: B, cache: DiskCache) -> Self {
        CachedBackend {
            inner,
            cache,
            inflight: Mutex::new(HashMap::new()),
        }
    }

    pub fn cache(&self) -> &DiskCache {
        &self.cache
    }

    async fn key_guard(&self, digest: &str) -> Arc<Mutex<()>> {
        let mut map = self.inflight.lock().await;
        map.entry(digest.to_string()).or_default().clone()
    }

    async fn release_guard(&self, digest: &str) {
        self.inflight.lock().await.remove(digest);
    }
}

#[async_trait]
impl<B: CompletionBackend> CompletionBackend for CachedBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    async fn complete(
        &self,
        prompt: &str,
        params: &DecodeParams,
        attempt: u32,
    ) -> Result<String, BackendError> {
        let key = CacheKey::compute(self.inner.id(), &params.model, prompt, params, attempt);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let guard = self.key_guard(key.digest()).await;
        let _held = guard.lock().await;
        // A coalesced waiter may find the entry filled by the first caller.
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let result = self.inner.complete(prompt, params, attempt).await;
        if let Ok(body) = &result {
            let meta = CacheMeta {
                backend_id: self.inner.id().to_string(),
                prompt: prompt.to_string(),
                params: params.clone(),
                attempt,
                created_at: chrono::Utc::now().to_rfc3339(),
            };
            self.cache.put(&key, body, &meta)?;
        }
        self.release_guard(key.digest()).await;
        result
    }
}
