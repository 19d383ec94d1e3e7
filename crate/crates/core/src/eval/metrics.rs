use std::collections::{BTreeMap, BTreeSet};

use log::warn;

use crate::knowledge::ItemId;

/// Binary-relevance NDCG over the first `n` entries, ideal DCG over `min(|relevant|, n)` hits.
pub fn ndcg_at(ranked: &[ItemId], relevant: &BTreeSet<ItemId>, n: usize) -> f64 {
    if relevant.is_empty() {
        warn!("ndcg requested with an empty relevant set");
        return 0.0;
    }
    let dcg: f64 = ranked
        .iter()
        .take(n)
        .enumerate()
        .filter(|(_, i)| relevant.contains(i))
        .map(|(r, _)| 1.0 / ((r + 2) as f64).log2())
        .sum();
    let ideal: f64 = (0..relevant.len().min(n)).map(|r| 1.0 / ((r + 2) as f64).log2()).sum();
    dcg / ideal
}

/// Reciprocal rank of the first hit within the first `n` entries, else 0.
pub fn mrr_at(ranked: &[ItemId], relevant: &BTreeSet<ItemId>, n: usize) -> f64 {
    if relevant.is_empty() {
        warn!("mrr requested with an empty relevant set");
        return 0.0;
    }
    ranked
        .iter()
        .take(n)
        .position(|i| relevant.contains(i))
        .map_or(0.0, |r| 1.0 / (r + 1) as f64)
}

/// Distinct items in the first `n` of every list, over the catalog size.
pub fn coverage_at(lists: &[Vec<ItemId>], catalog_size: usize, n: usize) -> f64 {
    if catalog_size == 0 {
        return 0.0;
    }
    let distinct: BTreeSet<ItemId> = lists.iter().flat_map(|l| l.iter().take(n).copied()).collect();
    distinct.len() as f64 / catalog_size as f64
}

/// Gini coefficient of exposure counts over the whole catalog; items never
/// recommended contribute zeros.
pub fn gini_at(lists: &[Vec<ItemId>], catalog_size: usize, n: usize) -> f64 {
    let mut counts: BTreeMap<ItemId, u64> = BTreeMap::new();
    for l in lists {
        for &i in l.iter().take(n) {
            *counts.entry(i).or_insert(0) += 1;
        }
    }
    let size = catalog_size.max(counts.len());
    let mut x: Vec<u64> = counts.into_values().collect();
    x.resize(size, 0);
    gini(&x)
}

/// `Σ (2i − n − 1)·x_(i) / (n·Σx)` over ascending values, 1-based `i`.
pub fn gini(values: &[u64]) -> f64 {
    let n = values.len();
    let total: u64 = values.iter().sum();
    if n == 0 || total == 0 {
        return 0.0;
    }
    let mut x = values.to_vec();
    x.sort_unstable();
    let num: f64 = x
        .iter()
        .enumerate()
        .map(|(i, &v)| (2.0 * (i + 1) as f64 - n as f64 - 1.0) * v as f64)
        .sum();
    num / (n as f64 * total as f64)
}
