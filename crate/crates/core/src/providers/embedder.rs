use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::knowledge::canonicalize;
use crate::util::{fnv1a, seeded_rng};

pub const DEFAULT_EMBED_DIM: usize = 32;

pub trait TagSemanticEmbedder {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Seeded random projection of a bag of hashed tokens, L2-normalized.
///
/// Texts sharing tokens land close together; identical texts map to identical
/// vectors in every process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashingEmbedder {
    pub seed: u64,
    pub dim: usize,
}

impl HashingEmbedder {
    pub fn new(seed: u64, dim: usize) -> Self {
        assert!(dim > 0);
        HashingEmbedder { seed, dim }
    }

    fn token_vector(&self, token: &str) -> impl Iterator<Item = f64> {
        let mut rng = seeded_rng(fnv1a(self.seed, token.as_bytes()));
        (0..self.dim).map(move |_| rng.gen_range(-1.0..1.0))
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder::new(0, DEFAULT_EMBED_DIM)
    }
}

impl TagSemanticEmbedder for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let canon = canonicalize(text).unwrap_or_default();
        let mut tokens: Vec<&str> = canon
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.is_empty() {
            tokens.push(canon.as_str());
        }
        let mut v = vec![0.0; self.dim];
        for tok in tokens {
            for (acc, x) in v.iter_mut().zip(self.token_vector(tok)) {
                *acc += x;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}
