//! Text embeddings, cosine similarity and cross-modal similarity.
//!
//! Providers sit behind [`TextEmbedder`] and [`CrossModal`]. The
//! [`OfflineEmbedder`] is a bag-of-buckets model: tokens are hashed with
//! 64-bit FNV-1a into `dim` buckets, counted, and L2-normalized. It needs no
//! model files and gives identical vectors on every platform.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::Path;

use dashmap::DashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_DIM: usize = 384;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("image {0:?} cannot be resolved")]
    ImageUnresolvable(String),
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |hash, &b| {
        (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Unit-length embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Normalizes `values` to unit length. Returns `None` for the zero vector.
    pub fn normalized(mut values: Vec<f64>) -> Option<Embedding> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return None;
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Some(Embedding(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn negated(&self) -> Embedding {
        Embedding(self.0.iter().map(|v| -v).collect())
    }
}

/// Cosine similarity, clamped to [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Similarity(f64);

impl Similarity {
    pub fn new(value: f64) -> Similarity {
        Similarity(value.clamp(-1.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn cosine(u: &Embedding, v: &Embedding) -> Result<Similarity, EmbedError> {
    if u.dim() != v.dim() {
        return Err(EmbedError::DimensionMismatch(u.dim(), v.dim()));
    }
    let dot: f64 = u.0.iter().zip(&v.0).map(|(a, b)| a * b).sum();
    Ok(Similarity::new(dot))
}

pub trait TextEmbedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed_text(&self, text: &str) -> Result<Embedding, EmbedError>;
}

pub trait CrossModal: Send + Sync {
    /// Similarity between the image behind `image_ref` and `text`.
    fn cross_modal_similarity(&self, image_ref: &str, text: &str)
        -> Result<Similarity, EmbedError>;
}

/// Deterministic hashing provider. Cross-modal queries embed a caption
/// registered for the image and compare it with the text.
#[derive(Debug, Clone)]
pub struct OfflineEmbedder {
    dim: usize,
    captions: HashMap<String, String>,
}

impl Default for OfflineEmbedder {
    fn default() -> Self {
        OfflineEmbedder::new(DEFAULT_DIM)
    }
}

impl OfflineEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        OfflineEmbedder {
            dim,
            captions: HashMap::new(),
        }
    }

    pub fn with_caption(mut self, image_ref: &str, caption: &str) -> Self {
        self.captions.insert(image_ref.to_string(), caption.to_string());
        self
    }

    pub fn add_captions(&mut self, captions: impl IntoIterator<Item = (String, String)>) {
        self.captions.extend(captions);
    }

    /// Loads every `<image_ref>.txt` in `dir` as a caption.
    pub fn load_caption_dir(&mut self, dir: &Path) -> io::Result<usize> {
        let mut loaded = 0;
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                let caption = fs::read_to_string(&path)?;
                self.captions.insert(stem.to_string(), caption.trim().to_string());
                loaded += 1;
            }
        }
        Ok(loaded)
    }

    pub fn caption(&self, image_ref: &str) -> Option<&str> {
        self.captions.get(image_ref).map(String::as_str)
    }

    /// Raw bucket counts before normalization.
    pub fn bucket_counts(&self, text: &str) -> Vec<f64> {
        let mut counts = vec![0.0; self.dim];
        for token in tokenize(text) {
            let bucket = (fnv1a64(token.as_bytes()) % self.dim as u64) as usize;
            counts[bucket] += 1.0;
        }
        counts
    }
}

impl TextEmbedder for OfflineEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<Embedding, EmbedError> {
        Embedding::normalized(self.bucket_counts(text)).ok_or(EmbedError::EmptyText)
    }
}

impl CrossModal for OfflineEmbedder {
    fn cross_modal_similarity(
        &self,
        image_ref: &str,
        text: &str,
    ) -> Result<Similarity, EmbedError> {
        let caption = self
            .caption(image_ref)
            .ok_or_else(|| EmbedError::ImageUnresolvable(image_ref.to_string()))?;
        let image = self.embed_text(caption)?;
        let text = self.embed_text(text)?;
        cosine(&image, &text)
    }
}

/// Memoizes another embedder by exact input text.
pub struct CachedEmbedder<E> {
    inner: E,
    cache: DashMap<String, Embedding>,
}

impl<E: TextEmbedder> CachedEmbedder<E> {
    pub fn new(inner: E) -> Self {
        CachedEmbedder {
            inner,
            cache: DashMap::new(),
        }
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn cached_len(&self) -> usize {
        self.cache.len()
    }
}

impl<E: TextEmbedder> TextEmbedder for CachedEmbedder<E> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed_text(&self, text: &str) -> Result<Embedding, EmbedError> {
        if let Some(hit) = self.cache.get(text) {
            return Ok(hit.clone());
        }
        let embedding = self.inner.embed_text(text)?;
        self.cache.insert(text.to_string(), embedding.clone());
        Ok(embedding)
    }
}

impl<E: CrossModal> CrossModal for CachedEmbedder<E> {
    fn cross_modal_similarity(
        &self,
        image_ref: &str,
        text: &str,
    ) -> Result<Similarity, EmbedError> {
        self.inner.cross_modal_similarity(image_ref, text)
    }
}

impl<T: TextEmbedder + ?Sized> TextEmbedder for std::sync::Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn embed_text(&self, text: &str) -> Result<Embedding, EmbedError> {
        (**self).embed_text(text)
    }
}

impl<T: CrossModal + ?Sized> CrossModal for std::sync::Arc<T> {
    fn cross_modal_similarity(
        &self,
        image_ref: &str,
        text: &str,
    ) -> Result<Similarity, EmbedError> {
        (**self).cross_modal_similarity(image_ref, text)
    }
}
