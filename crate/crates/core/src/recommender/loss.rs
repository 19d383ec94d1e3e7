//! Scores and loss terms. Every loss helper also returns the derivative with
//! respect to the underlying dot products so callers can chain gradients.

use crate::logic::WeightedTagSet;
use crate::util::{dot, neg_log_one_minus_sigmoid, neg_log_sigmoid, score_desc_id_asc, sigmoid};

/// `σ(φ_u · x_i)`.
pub fn raw_score(phi: &[f64], x: &[f64]) -> f64 {
    sigmoid(dot(phi, x))
}

/// `−w·log P(i⁺|u) − log(1 − P(i⁻|u))` with clamped probabilities.
pub fn loss_ui(phi: &[f64], x_pos: &[f64], x_neg: &[f64], w: f64) -> f64 {
    loss_ui_grad(dot(phi, x_pos), dot(phi, x_neg), w).0
}

/// Loss and derivatives w.r.t. the positive and negative dot products.
pub fn loss_ui_grad(s_pos: f64, s_neg: f64, w: f64) -> (f64, f64, f64) {
    let (lp, gp) = neg_log_sigmoid(s_pos);
    let (ln, gn) = neg_log_one_minus_sigmoid(s_neg);
    (w * lp + ln, w * gp, gn)
}

/// Binary contrastive loss of one anchor against positive and negative tag embeddings.
pub fn contrastive(anchor: &[f64], pos: &[&[f64]], neg: &[&[f64]]) -> f64 {
    let p: f64 = pos.iter().map(|e| neg_log_sigmoid(dot(anchor, e)).0).sum();
    let n: f64 = neg.iter().map(|e| neg_log_one_minus_sigmoid(dot(anchor, e)).0).sum();
    p + n
}

/// `(ℒ_ut, ℒ_it)` for one user and one positive item.
pub fn loss_tags(
    phi: &[f64],
    x_pos: &[f64],
    user_tags: (&[&[f64]], &[&[f64]]),
    item_tags: (&[&[f64]], &[&[f64]]),
) -> (f64, f64) {
    (
        contrastive(phi, user_tags.0, user_tags.1),
        contrastive(x_pos, item_tags.0, item_tags.1),
    )
}

/// `ℒ_ui + λ·(ℒ_ut / |𝓘_u| + ℒ_it)`.
pub fn total_loss(ui: f64, ut: f64, it: f64, lambda: f64, n_targets: usize) -> f64 {
    let ut = if n_targets == 0 { 0.0 } else { ut / n_targets as f64 };
    ui + lambda * (ut + it)
}

/// Top-`k` tags by score (ties to smaller id), weights normalized to sum one.
pub fn select_tag_set(scores: &[(u32, f64)], k: usize) -> WeightedTagSet {
    let mut ranked = scores.to_vec();
    ranked.sort_by(score_desc_id_asc);
    ranked.truncate(k);
    let total: f64 = ranked.iter().map(|p| p.1).sum();
    if total > 0.0 {
        WeightedTagSet::from_pairs(ranked).normalize()
    } else {
        WeightedTagSet::uniform(ranked.into_iter().map(|p| p.0)).normalize()
    }
}
