//! Text embedding providers. The built-in embedder hashes character
//! trigrams into a fixed number of signed buckets and L2-normalizes, which
//! is deterministic across platforms and needs no model weights. A remote
//! provider speaks the OpenAI-compatible embeddings wire shape.

use std::collections::HashMap;
use std::collections::VecDeque;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default dimension of the built-in embedder.
pub const DEFAULT_DIM: usize = 256;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("empty text")]
    EmptyText,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("embedding endpoint transport failure: {0}")]
    Transport(String),
    #[error("embedding endpoint protocol error: {0}")]
    Protocol(String),
}

/// A unit-norm embedding vector. The all-zero input maps to the zero
/// vector, detectable via [`Embedding::is_zero`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub vector: Vec<f64>,
}

impl Embedding {
    /// Normalize to unit L2 norm. Zero input stays zero.
    pub fn from_unnormalized(mut vector: Vec<f64>) -> Self {
        let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut vector {
                *x /= norm;
            }
        }
        Embedding { vector }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn is_zero(&self) -> bool {
        self.vector.iter().all(|x| *x == 0.0)
    }

    pub fn dot(&self, other: &Embedding) -> Result<f64, EmbedError> {
        if self.dim() != other.dim() {
            return Err(EmbedError::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(self
            .vector
            .iter()
            .zip(other.vector.iter())
            .map(|(a, b)| a * b)
            .sum())
    }
}

/// Cosine distance between unit vectors: `1 - dot`, in [0, 2].
pub fn cosine_distance(a: &Embedding, b: &Embedding) -> Result<f64, EmbedError> {
    Ok(1.0 - a.dot(b)?)
}

pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;
    /// Provider identity recorded in run manifests.
    fn identity(&self) -> String;
    fn embed(&self, text: &str) -> Result<Embedding, EmbedError>;
}

/// Embed non-empty text through a provider.
pub fn embed_text(provider: &dyn EmbeddingProvider, text: &str) -> Result<Embedding, EmbedError> {
    if text.trim().is_empty() {
        return Err(EmbedError::EmptyText);
    }
    provider.embed(text)
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a 64-bit over raw bytes.
pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Character n-gram feature hashing embedder (n = 3). Bucket is the hash
/// modulo the dimension, the sign comes from hash bit 63, counts are
/// accumulated then L2-normalized. Inputs shorter than n yield the zero
/// vector.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    ngram: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder {
            dim: DEFAULT_DIM,
            ngram: 3,
        }
    }
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        HashEmbedder { dim, ngram: 3 }
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn identity(&self) -> String {
        format!("builtin-hash-{}gram-d{}", self.ngram, self.dim)
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        let chars: Vec<char> = text.chars().collect();
        let mut counts = vec![0.0f64; self.dim];
        if chars.len() >= self.ngram {
            let mut buf = String::with_capacity(self.ngram * 4);
            for window in chars.windows(self.ngram) {
                buf.clear();
                buf.extend(window.iter());
                let hash = fnv1a_64(buf.as_bytes());
                let bucket = (hash % self.dim as u64) as usize;
                let sign = if hash >> 63 == 1 { -1.0 } else { 1.0 };
                counts[bucket] += sign;
            }
        }
        let embedding = Embedding::from_unnormalized(counts);
        if embedding.is_zero() {
            log::warn!("zero embedding for input of {} chars", chars.len());
        }
        Ok(embedding)
    }
}

/// Remote embedding endpoint speaking `POST {model, input: [texts]}` ->
/// `{data: [{embedding: [...]}]}`.
pub struct RemoteEmbedder {
    pub endpoint_url: String,
    pub model_name: String,
    pub api_key_env: String,
    pub dimension: usize,
    pub timeout_ms: u64,
}

#[derive(Serialize)]
struct EmbeddingRequestBody<'a> {
    model: &'a str,
    input: Vec<&'a str>,
}

#[derive(Deserialize)]
struct EmbeddingResponseBody {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl EmbeddingProvider for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn identity(&self) -> String {
        format!("remote:{}:d{}", self.model_name, self.dimension)
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(std::time::Duration::from_millis(self.timeout_ms)))
            .build()
            .into();
        let body = EmbeddingRequestBody {
            model: &self.model_name,
            input: vec![text],
        };
        let mut request = agent.post(&self.endpoint_url);
        if let Ok(key) = std::env::var(&self.api_key_env) {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(&body)
            .map_err(|e| match e {
                ureq::Error::StatusCode(code) => {
                    EmbedError::Protocol(format!("status {code}"))
                }
                other => EmbedError::Transport(other.to_string()),
            })?;
        let parsed: EmbeddingResponseBody = response
            .body_mut()
            .read_json()
            .map_err(|e| EmbedError::Protocol(e.to_string()))?;
        let datum = parsed
            .data
            .into_iter()
            .next()
            .ok_or_else(|| EmbedError::Protocol("empty data array".to_string()))?;
        if datum.embedding.len() != self.dimension {
            return Err(EmbedError::Protocol(format!(
                "endpoint returned dimension {} but {} configured",
                datum.embedding.len(),
                self.dimension
            )));
        }
        Ok(Embedding::from_unnormalized(datum.embedding))
    }
}

/// In-memory LRU cache wrapper around any provider.
pub struct CachingEmbedder<P: EmbeddingProvider> {
    inner: P,
    capacity: usize,
    state: Mutex<CacheState>,
}

struct CacheState {
    map: HashMap<String, Embedding>,
    order: VecDeque<String>,
}

impl<P: EmbeddingProvider> CachingEmbedder<P> {
    pub fn new(inner: P, capacity: usize) -> Self {
        CachingEmbedder {
            inner,
            capacity: capacity.max(1),
            state: Mutex::new(CacheState {
                map: HashMap::new(),
                order: VecDeque::new(),
            }),
        }
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachingEmbedder<P> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn identity(&self) -> String {
        self.inner.identity()
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        {
            let state = self.state.lock().expect("cache lock");
            if let Some(hit) = state.map.get(text) {
                return Ok(hit.clone());
            }
        }
        let embedding = self.inner.embed(text)?;
        let mut state = self.state.lock().expect("cache lock");
        if !state.map.contains_key(text) {
            while state.order.len() >= self.capacity {
                if let Some(oldest) = state.order.pop_front() {
                    state.map.remove(&oldest);
                }
            }
            state.order.push_back(text.to_string());
            state.map.insert(text.to_string(), embedding.clone());
        }
        Ok(embedding)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_is_deterministic() {
        let provider = HashEmbedder::default();
        let a = embed_text(&provider, "audit: pid=441 exec /usr/bin/ls").unwrap();
        let b = embed_text(&provider, "audit: pid=441 exec /usr/bin/ls").unwrap();
        assert_eq!(a, b);
        assert!((1.0 - a.vector.iter().map(|x| x * x).sum::<f64>().sqrt()).abs() <= 1e-6);
    }

    #[test]
    fn empty_text_is_an_error() {
        let provider = HashEmbedder::default();
        assert!(matches!(
            embed_text(&provider, "   "),
            Err(EmbedError::EmptyText)
        ));
    }

    #[test]
    fn shared_skeleton_is_closer_than_disjoint_format() {
        let provider = HashEmbedder::default();
        let a = embed_text(&provider, "EVENT pid=441 exec=/usr/bin/ls user=root ses=4").unwrap();
        let b = embed_text(&provider, "EVENT pid=902 exec=/usr/bin/cp user=alice ses=7").unwrap();
        let c = embed_text(&provider, "{\"ts\":1523361600,\"fd\":3,\"op\":\"open\"}").unwrap();
        let intra = cosine_distance(&a, &b).unwrap();
        let inter = cosine_distance(&a, &c).unwrap();
        assert!(
            intra < inter,
            "expected intra-format distance {intra} < inter-format {inter}"
        );
    }

    #[test]
    fn cosine_distance_identities() {
        let e1 = Embedding::from_unnormalized(vec![1.0, 0.0]);
        let e2 = Embedding::from_unnormalized(vec![0.0, 1.0]);
        let e3 = Embedding::from_unnormalized(vec![-1.0, 0.0]);
        assert!(cosine_distance(&e1, &e1).unwrap().abs() <= 1e-9);
        assert!((cosine_distance(&e1, &e2).unwrap() - 1.0).abs() <= 1e-9);
        assert!((cosine_distance(&e1, &e3).unwrap() - 2.0).abs() <= 1e-9);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let e1 = Embedding::from_unnormalized(vec![1.0, 0.0]);
        let e2 = Embedding::from_unnormalized(vec![1.0, 0.0, 0.0]);
        assert!(matches!(
            cosine_distance(&e1, &e2),
            Err(EmbedError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn appended_text_never_collides_with_disjoint_alphabet() {
        let provider = HashEmbedder::default();
        let a = embed_text(&provider, "aaabbbccc").unwrap();
        let b = embed_text(&provider, "xxxyyyzzz").unwrap();
        assert!(cosine_distance(&a, &b).unwrap() > 0.0);
    }

    #[test]
    fn lru_caches_and_evicts() {
        let provider = CachingEmbedder::new(HashEmbedder::default(), 2);
        let a1 = provider.embed("first text").unwrap();
        let _ = provider.embed("second text").unwrap();
        let _ = provider.embed("third text").unwrap();
        let a2 = provider.embed("first text").unwrap();
        assert_eq!(a1, a2);
    }
}
