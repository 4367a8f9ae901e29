//! Text to vector providers (a hashing stub and a remote HTTP service) and a
//! content-addressed on-disk cache.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use agentmix_core::data::{default_global, Dataset, Payload, PayloadMode};
use agentmix_core::model::EmbeddedCase;
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::{xxh3_64, xxh3_64_with_seed};

use crate::dataset_io::write_atomic;
use crate::error::{io, Error, Result};

/// Seed of the hash that picks a token's coordinate.
pub const STUB_INDEX_SEED: u64 = 0x243f_6a88_85a3_08d3;
/// Seed of the hash that picks a token's sign (top bit clear means `+1`).
pub const STUB_SIGN_SEED: u64 = 0x1319_8a2e_0370_7344;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub provider_tag: String,
    pub content_hash: u64,
}

pub fn content_hash(text: &str) -> u64 {
    xxh3_64(text.as_bytes())
}

pub trait EmbeddingProvider {
    /// Identifies the provider and its settings; part of the cache key.
    fn tag(&self) -> String;
    fn dim(&self) -> usize;
    /// One vector per text, in input order.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>>;
}

/// Lowercased runs of alphanumeric characters.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Signed feature hashing of the token bag, then L2 normalization. Empty
/// text maps to the zero vector.
pub fn embed_stub(text: &str, dim: usize) -> Result<EmbeddingVector> {
    if dim == 0 {
        return Err(Error::Config("stub embedding dimension must be positive".into()));
    }
    let mut values = vec![0.0; dim];
    for token in tokenize(text) {
        let index = (xxh3_64_with_seed(token.as_bytes(), STUB_INDEX_SEED) % dim as u64) as usize;
        let sign = if xxh3_64_with_seed(token.as_bytes(), STUB_SIGN_SEED) >> 63 == 0 { 1.0 } else { -1.0 };
        values[index] += sign;
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(EmbeddingVector {
        values,
        provider_tag: stub_tag(dim),
        content_hash: content_hash(text),
    })
}

fn stub_tag(dim: usize) -> String {
    format!("stub-xxh3-v1/d{dim}")
}

#[derive(Debug, Clone)]
pub struct StubProvider {
    pub dim: usize,
}

impl EmbeddingProvider for StubProvider {
    fn tag(&self) -> String {
        stub_tag(self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        texts.iter().map(|t| embed_stub(t, self.dim).map(|e| e.values)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Stub,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Name of the environment variable holding a bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// First retry delay; doubles on each further attempt.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_timeout() -> f64 {
    30.0
}
fn default_retries() -> u32 {
    3
}
fn default_backoff() -> u64 {
    200
}
fn default_batch() -> usize {
    32
}

impl ProviderConfig {
    pub fn stub(dim: usize) -> Self {
        ProviderConfig {
            kind: ProviderKind::Stub,
            dim,
            endpoint: None,
            model: None,
            token_env: None,
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            backoff_ms: default_backoff(),
            batch_size: default_batch(),
        }
    }

    pub fn remote(dim: usize, endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        ProviderConfig {
            kind: ProviderKind::Remote,
            endpoint: Some(endpoint.into()),
            model: Some(model.into()),
            ..Self::stub(dim)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("provider dim must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("provider batch_size must be positive".into()));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(Error::Config(format!("provider timeout {} is invalid", self.timeout_secs)));
        }
        let remote_fields = [("endpoint", &self.endpoint), ("model", &self.model)];
        match self.kind {
            ProviderKind::Remote => {
                for (name, value) in remote_fields {
                    if value.is_none() {
                        return Err(Error::Config(format!("remote provider requires {name}")));
                    }
                }
            }
            ProviderKind::Stub => {
                for (name, value) in remote_fields.into_iter().chain([("token_env", &self.token_env)]) {
                    if value.is_some() {
                        return Err(Error::Config(format!("{name} is only valid for a remote provider")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>> {
        self.validate()?;
        Ok(match self.kind {
            ProviderKind::Stub => Box::new(StubProvider { dim: self.dim }),
            ProviderKind::Remote => Box::new(RemoteProvider::new(self.clone())?),
        })
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct WireResponse {
    data: Vec<WireItem>,
}

#[derive(Deserialize)]
struct WireItem {
    index: usize,
    embedding: Vec<f64>,
}

pub struct RemoteProvider {
    config: ProviderConfig,
    agent: ureq::Agent,
}

impl RemoteProvider {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        config.validate()?;
        if config.kind != ProviderKind::Remote {
            return Err(Error::Config("RemoteProvider needs kind = remote".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .build()
            .into();
        Ok(RemoteProvider { config, agent })
    }

    fn token(&self) -> Result<Option<String>> {
        match &self.config.token_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| Error::Config(format!("environment variable {var} is not set"))),
        }
    }

    fn request_once(&self, texts: &[&str], token: Option<&str>) -> std::result::Result<WireResponse, Attempt> {
        let endpoint = self.config.endpoint.as_deref().unwrap_or_default();
        let model = self.config.model.as_deref().unwrap_or_default();
        let mut request = self.agent.post(endpoint);
        if let Some(t) = token {
            request = request.header("Authorization", format!("Bearer {t}"));
        }
        let mut response = match request.send_json(WireRequest { model, input: texts }) {
            Ok(r) => r,
            Err(ureq::Error::StatusCode(code)) if code == 429 || code >= 500 => {
                return Err(Attempt::Retry(format!("http status {code}")))
            }
            Err(ureq::Error::StatusCode(code)) => return Err(Attempt::Fatal(format!("http status {code}"))),
            Err(e) => return Err(Attempt::Retry(e.to_string())),
        };
        response
            .body_mut()
            .read_json::<WireResponse>()
            .map_err(|e| Attempt::Contract(format!("unreadable response body: {e}")))
    }
}

enum Attempt {
    Retry(String),
    Fatal(String),
    Contract(String),
}

impl EmbeddingProvider for RemoteProvider {
    fn tag(&self) -> String {
        format!(
            "remote:{}@{}/d{}",
            self.config.model.as_deref().unwrap_or_default(),
            self.config.endpoint.as_deref().unwrap_or_default(),
            self.config.dim
        )
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let token = self.token()?;
        let mut attempt = 0u32;
        let response = loop {
            match self.request_once(texts, token.as_deref()) {
                Ok(r) => break r,
                Err(Attempt::Contract(m)) => return Err(Error::Contract(m)),
                Err(Attempt::Fatal(m)) => return Err(Error::Provider(m)),
                Err(Attempt::Retry(m)) if attempt >= self.config.max_retries => {
                    return Err(Error::Provider(format!("{m} after {} attempts", attempt + 1)))
                }
                Err(Attempt::Retry(m)) => {
                    let delay = self.config.backoff_ms.saturating_mul(1u64 << attempt.min(20));
                    log::warn!("embedding request failed ({m}); retrying in {delay} ms");
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
            }
        };
        order_response(response, texts.len(), self.config.dim)
    }
}

fn order_response(response: WireResponse, expected: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
    if response.data.len() != expected {
        return Err(Error::Contract(format!(
            "expected {expected} embeddings, received {}",
            response.data.len()
        )));
    }
    let mut slots: Vec<Option<Vec<f64>>> = vec![None; expected];
    for item in response.data {
        if item.embedding.len() != dim {
            return Err(Error::Contract(format!(
                "embedding {} has dimension {}, expected D = {dim}",
                item.index,
                item.embedding.len()
            )));
        }
        if item.embedding.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("embedding {} has non-finite values", item.index)));
        }
        match slots.get_mut(item.index) {
            Some(slot @ None) => *slot = Some(item.embedding),
            _ => return Err(Error::Contract(format!("bad or repeated index {}", item.index))),
        }
    }
    Ok(slots.into_iter().map(|s| s.expect("every index filled")).collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    provider_tag: String,
    hash: String,
    dim: usize,
    values: Vec<f64>,
}

/// One JSON file per `(provider_tag, content_hash)`, written atomically.
#[derive(Debug, Clone)]
pub struct EmbeddingCache {
    dir: PathBuf,
}

impl EmbeddingCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        Ok(EmbeddingCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn record_path(&self, provider_tag: &str, hash: u64) -> PathBuf {
        self.dir
            .join(format!("{:016x}-{hash:016x}.json", xxh3_64(provider_tag.as_bytes())))
    }

    fn read(&self, provider: &dyn EmbeddingProvider, tag: &str, hash: u64) -> Option<Vec<f64>> {
        let path = self.record_path(tag, hash);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return None,
            Err(e) => {
                log::warn!("cache record {} unreadable ({e}); recomputing", path.display());
                return None;
            }
        };
        let valid = serde_json::from_slice::<CacheRecord>(&bytes).ok().filter(|r| {
            r.provider_tag == tag
                && r.hash == format!("{hash:016x}")
                && r.dim == provider.dim()
                && r.values.len() == r.dim
                && r.values.iter().all(|v| v.is_finite())
        });
        if valid.is_none() {
            log::warn!("cache record {} is corrupt; recomputing", path.display());
        }
        valid.map(|r| r.values)
    }

    fn write(&self, tag: &str, hash: u64, values: &[f64]) -> Result<()> {
        let record = CacheRecord {
            provider_tag: tag.to_string(),
            hash: format!("{hash:016x}"),
            dim: values.len(),
            values: values.to_vec(),
        };
        let text = serde_json::to_string(&record).map_err(crate::dataset_io::json_err)?;
        write_atomic(&self.record_path(tag, hash), text.as_bytes())
    }

    pub fn get_or_compute(&self, text: &str, provider: &dyn EmbeddingProvider) -> Result<EmbeddingVector> {
        Ok(embed_texts(&[text], provider, Some(self))?.remove(0))
    }
}

/// Embeds `texts` in order. With a cache, only distinct missing texts reach
/// the provider, in batches of `batch_size`.
pub fn embed_texts_batched(
    texts: &[&str],
    provider: &dyn EmbeddingProvider,
    cache: Option<&EmbeddingCache>,
    batch_size: usize,
) -> Result<Vec<EmbeddingVector>> {
    let tag = provider.tag();
    let hashes: Vec<u64> = texts.iter().map(|t| content_hash(t)).collect();
    let mut values: Vec<Option<Vec<f64>>> = vec![None; texts.len()];
    if let Some(cache) = cache {
        for (slot, &h) in values.iter_mut().zip(&hashes) {
            *slot = cache.read(provider, &tag, h);
        }
    }
    // distinct missing texts, first occurrence order
    let mut missing: Vec<usize> = Vec::new();
    for j in 0..texts.len() {
        if values[j].is_none() && !missing.iter().any(|&m| hashes[m] == hashes[j] && texts[m] == texts[j]) {
            missing.push(j);
        }
    }
    for chunk in missing.chunks(batch_size.max(1)) {
        let batch: Vec<&str> = chunk.iter().map(|&j| texts[j]).collect();
        let computed = provider.embed_batch(&batch)?;
        if computed.len() != batch.len() {
            return Err(Error::Contract(format!(
                "provider returned {} vectors for {} texts",
                computed.len(),
                batch.len()
            )));
        }
        for (&j, v) in chunk.iter().zip(computed) {
            if v.len() != provider.dim() {
                return Err(Error::Contract(format!(
                    "provider returned dimension {}, expected D = {}",
                    v.len(),
                    provider.dim()
                )));
            }
            if let Some(cache) = cache {
                cache.write(&tag, hashes[j], &v)?;
            }
            for k in j..texts.len() {
                if values[k].is_none() && texts[k] == texts[j] {
                    values[k] = Some(v.clone());
                }
            }
        }
    }
    Ok(values
        .into_iter()
        .zip(hashes)
        .map(|(v, content_hash)| EmbeddingVector {
            values: v.expect("all texts embedded"),
            provider_tag: tag.clone(),
            content_hash,
        })
        .collect())
}

pub fn embed_texts(
    texts: &[&str],
    provider: &dyn EmbeddingProvider,
    cache: Option<&EmbeddingCache>,
) -> Result<Vec<EmbeddingVector>> {
    embed_texts_batched(texts, provider, cache, default_batch())
}

/// Model-ready cases. Vector-mode datasets pass through untouched; text mode
/// embeds every partition and global payload.
pub fn embed_dataset(
    dataset: &Dataset,
    provider: Option<&dyn EmbeddingProvider>,
    cache: Option<&EmbeddingCache>,
) -> Result<Vec<EmbeddedCase>> {
    match dataset.mode() {
        Some(PayloadMode::Vector { .. }) | None => Ok(dataset.embedded_cases()?),
        Some(PayloadMode::Text) => {
            let provider = provider
                .ok_or_else(|| Error::Config("text-mode dataset needs an embedding provider".into()))?;
            let per_case = dataset.agents() + 1;
            let mut globals = Vec::with_capacity(dataset.cases.len());
            for case in &dataset.cases {
                globals.push(match &case.global {
                    Some(g) => g.clone(),
                    None => default_global(&case.partitions)?,
                });
            }
            let mut texts: Vec<&str> = Vec::with_capacity(dataset.cases.len() * per_case);
            for (case, global) in dataset.cases.iter().zip(&globals) {
                for p in case.partitions.iter().chain(std::iter::once(global)) {
                    texts.push(match p {
                        Payload::Text(t) => t,
                        Payload::Vector(_) => {
                            return Err(Error::Contract(format!("case {:?} mixes payload modes", case.id)))
                        }
                    });
                }
            }
            let vectors = embed_texts(&texts, provider, cache)?;
            Ok(dataset
                .cases
                .iter()
                .zip(vectors.chunks(per_case))
                .map(|(case, vs)| EmbeddedCase {
                    id: case.id.clone(),
                    partitions: vs[..per_case - 1].iter().map(|v| v.values.clone()).collect(),
                    global: vs[per_case - 1].values.clone(),
                    labels: case.labels.iter().map(|&y| f64::from(y)).collect(),
                })
                .collect())
        }
    }
}
