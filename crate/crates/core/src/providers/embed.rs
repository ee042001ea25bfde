use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::{normalize, Feature};

pub const DEFAULT_EMBEDDING_DIM: usize = 256;
const SLOTS_PER_TOKEN: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum EmbedError {
    #[error("cannot embed empty input")]
    EmptyInput,
    #[error("embedding backend failure: {0}")]
    Backend(String),
}

/// Text and image encoders sharing one feature space.
pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed_text(&self, text: &str) -> Result<Feature, EmbedError>;
    /// Embed an image given a textual descriptor of its content.
    fn embed_image(&self, descriptor: &str) -> Result<Feature, EmbedError>;
}

/// Deterministic bag-of-tokens feature hashing. Each lowercase alphanumeric
/// token adds signed unit weights to a few digest-selected dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HashEmbedder {
    dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_EMBEDDING_DIM)
    }
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    fn hash_into(&self, acc: &mut [f64], token: &str) {
        let digest = Sha256::digest(token.as_bytes());
        for slot in 0..SLOTS_PER_TOKEN {
            let b = &digest[slot * 4..slot * 4 + 4];
            let idx = u16::from_le_bytes([b[0], b[1]]) as usize % self.dim;
            let sign = if b[2] & 1 == 0 { 1.0 } else { -1.0 };
            acc[idx] += sign;
        }
    }

    fn embed(&self, input: &str) -> Result<Feature, EmbedError> {
        if input.trim().is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        let mut acc = vec![0.0; self.dim];
        let lower = input.to_lowercase();
        let mut any = false;
        for token in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            self.hash_into(&mut acc, token);
            any = true;
        }
        if !any || acc.iter().all(|x| *x == 0.0) {
            // punctuation-only input, or tokens that cancelled out
            self.hash_into(&mut acc, &format!("\u{0}{}", lower.trim()));
        }
        if acc.iter().all(|x| *x == 0.0) {
            acc[0] = 1.0;
        }
        Ok(normalize(acc))
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<Feature, EmbedError> {
        self.embed(text)
    }

    fn embed_image(&self, descriptor: &str) -> Result<Feature, EmbedError> {
        self.embed(descriptor)
    }
}
