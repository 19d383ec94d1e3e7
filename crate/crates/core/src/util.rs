//! Small numeric and serialization helpers shared across modules.

use std::cmp::Ordering;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Probability clamp used by every log-loss in the crate.
pub const PROB_EPS: f64 = 1e-7;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `-log(clamp(sigmoid(s)))` and its derivative w.r.t. `s`.
///
/// The derivative is zero wherever the clamp is active.
#[inline]
pub fn neg_log_sigmoid(s: f64) -> (f64, f64) {
    let p = sigmoid(s);
    if p < PROB_EPS {
        (-PROB_EPS.ln(), 0.0)
    } else if p > 1.0 - PROB_EPS {
        (-(1.0 - PROB_EPS).ln(), 0.0)
    } else {
        (-p.ln(), p - 1.0)
    }
}

/// `-log(1 - clamp(sigmoid(s)))` and its derivative w.r.t. `s`.
#[inline]
pub fn neg_log_one_minus_sigmoid(s: f64) -> (f64, f64) {
    let p = sigmoid(s);
    if p < PROB_EPS {
        (-(1.0 - PROB_EPS).ln(), 0.0)
    } else if p > 1.0 - PROB_EPS {
        (-PROB_EPS.ln(), 0.0)
    } else {
        (-(1.0 - p).ln(), p)
    }
}

/// Descending by score, ascending by id. Total for finite scores.
pub fn score_desc_id_asc<I: Ord>(a: &(I, f64), b: &(I, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(&b.0))
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stable 64-bit FNV-1a; used wherever a process-independent hash is required.
pub fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Serialize with object keys sorted. Output is byte-stable for equal values.
pub fn canonical_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    // serde_json::Map is a BTreeMap without the preserve_order feature.
    let v = serde_json::to_value(value)?;
    serde_json::to_string(&v)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
