//! Cheap parametric stand-ins for provider outputs.
//!
//! The tag model is one logistic regression per cover-set tag over an item's
//! semantic embedding. The logic model is a bilinear logistic score over the
//! semantic embeddings of a (source, target) tag pair. Both train by
//! full-batch gradient descent on binary cross-entropy.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::embedder::{HashingEmbedder, TagSemanticEmbedder};
use crate::coverset::CoverSet;
use crate::error::{Error, Result};
use crate::knowledge::ItemRecord;
use crate::util::{dot, neg_log_one_minus_sigmoid, neg_log_sigmoid, score_desc_id_asc, seeded_rng, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub lr: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            lr: 1.0,
            epochs: 100,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trained<M> {
    pub model: M,
    /// Training loss before each epoch, then once more after the last.
    pub loss_trace: Vec<f64>,
}

fn bce(logit: f64, label: f64) -> (f64, f64) {
    if label > 0.5 {
        neg_log_sigmoid(logit)
    } else {
        neg_log_one_minus_sigmoid(logit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistilledTagModel {
    tags: Vec<u32>,
    dim: usize,
    /// Row-major `tags.len() × dim`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl DistilledTagModel {
    pub fn zeros(tags: &[u32], dim: usize) -> Self {
        let tags: Vec<u32> = tags.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        DistilledTagModel {
            weights: vec![0.0; tags.len() * dim],
            bias: vec![0.0; tags.len()],
            tags,
            dim,
        }
    }

    pub fn tags(&self) -> &[u32] {
        &self.tags
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> (&[f64], &[f64]) {
        (&self.weights, &self.bias)
    }

    pub fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.bias)
    }

    fn logit(&self, idx: usize, e: &[f64]) -> f64 {
        dot(&self.weights[idx * self.dim..(idx + 1) * self.dim], e) + self.bias[idx]
    }

    /// `P(tag | embedding)` for one tag, if the tag is modelled.
    pub fn prob(&self, tag: u32, e: &[f64]) -> Option<f64> {
        let idx = self.tags.binary_search(&tag).ok()?;
        Some(sigmoid(self.logit(idx, e)))
    }

    /// Scores for every modelled tag, in tag-id order.
    pub fn predict(&self, e: &[f64]) -> Result<Vec<(u32, f64)>> {
        if e.len() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                found: e.len(),
            });
        }
        Ok(self
            .tags
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, sigmoid(self.logit(i, e))))
            .collect())
    }

    /// Mean BCE over the set and its gradient, shaped like `self`.
    pub fn loss_and_grad(&self, set: &TagTrainingSet) -> (f64, DistilledTagModel) {
        let mut grad = DistilledTagModel {
            tags: self.tags.clone(),
            dim: self.dim,
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.bias.len()],
        };
        if set.pairs.is_empty() {
            return (0.0, grad);
        }
        let n = set.pairs.len() as f64;
        let mut loss = 0.0;
        for &(sample, tag_idx, label) in &set.pairs {
            let e = &set.features[sample];
            let (l, g) = bce(self.logit(tag_idx, e), label);
            loss += l;
            let g = g / n;
            let row = &mut grad.weights[tag_idx * self.dim..(tag_idx + 1) * self.dim];
            for (w, x) in row.iter_mut().zip(e) {
                *w += g * x;
            }
            grad.bias[tag_idx] += g;
        }
        (loss / n, grad)
    }
}

/// (sample, tag index, label) pairs with negatives drawn once, 1:1 per positive.
#[derive(Debug, Clone)]
pub struct TagTrainingSet {
    dim: usize,
    features: Vec<Vec<f64>>,
    pairs: Vec<(usize, usize, f64)>,
}

impl TagTrainingSet {
    pub fn build(samples: &[(Vec<f64>, Vec<u32>)], tags: &[u32], dim: usize, seed: u64) -> Result<Self> {
        let tags: Vec<u32> = tags.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let mut rng = seeded_rng(seed);
        let mut pairs = Vec::new();
        let mut features = Vec::with_capacity(samples.len());
        for (s, (e, positives)) in samples.iter().enumerate() {
            if e.len() != dim {
                return Err(Error::Shape {
                    expected: dim,
                    found: e.len(),
                });
            }
            features.push(e.clone());
            let pos_idx = positives
                .iter()
                .map(|t| tags.binary_search(t).map_err(|_| Error::UnknownTag(*t)))
                .collect::<Result<BTreeSet<usize>>>()?;
            let neg_pool: Vec<usize> = (0..tags.len()).filter(|i| !pos_idx.contains(i)).collect();
            for &p in &pos_idx {
                pairs.push((s, p, 1.0));
                if !neg_pool.is_empty() {
                    let n = neg_pool[rng.gen_range(0..neg_pool.len())];
                    pairs.push((s, n, 0.0));
                }
            }
        }
        Ok(TagTrainingSet { dim, features, pairs })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn train_distilled_tag_model(
    samples: &[(Vec<f64>, Vec<u32>)],
    cover: &CoverSet,
    dim: usize,
    cfg: &DistillConfig,
) -> Result<Trained<DistilledTagModel>> {
    let mut model = DistilledTagModel::zeros(cover.selected(), dim);
    let set = TagTrainingSet::build(samples, &model.tags, dim, cfg.seed)?;
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..=cfg.epochs {
        let (loss, grad) = model.loss_and_grad(&set);
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch, loss });
        }
        trace.push(loss);
        if epoch == cfg.epochs {
            break;
        }
        let decay = 1.0 - cfg.lr * cfg.weight_decay;
        for (w, g) in model.weights.iter_mut().zip(&grad.weights) {
            *w = *w * decay - cfg.lr * g;
        }
        for (b, g) in model.bias.iter_mut().zip(&grad.bias) {
            *b -= cfg.lr * g;
        }
    }
    Ok(Trained {
        model,
        loss_trace: trace,
    })
}

/// Top-`k` tags for an item, score desc then id asc.
pub fn predict_tags(model: &DistilledTagModel, item: &ItemRecord, k: usize) -> Result<Vec<(u32, f64)>> {
    let e = item
        .semantic_embedding
        .as_ref()
        .ok_or(Error::MissingFeature(item.item_id))?;
    let mut scored = model.predict(e)?;
    scored.sort_by(score_desc_id_asc);
    scored.truncate(k);
    Ok(scored)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistilledLogicModel {
    dim: usize,
    /// Row-major `dim × dim`.
    w: Vec<f64>,
    bias: f64,
}

impl DistilledLogicModel {
    pub fn zeros(dim: usize) -> Self {
        DistilledLogicModel {
            dim,
            w: vec![0.0; dim * dim],
            bias: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> (&[f64], f64) {
        (&self.w, self.bias)
    }

    pub fn params_mut(&mut self) -> (&mut [f64], &mut f64) {
        (&mut self.w, &mut self.bias)
    }

    fn logit(&self, src: &[f64], tgt: &[f64]) -> f64 {
        let mut s = self.bias;
        for (a, &x) in src.iter().enumerate() {
            if x != 0.0 {
                s += x * dot(&self.w[a * self.dim..(a + 1) * self.dim], tgt);
            }
        }
        s
    }

    pub fn score(&self, src: &[f64], tgt: &[f64]) -> f64 {
        sigmoid(self.logit(src, tgt))
    }

    pub fn loss_and_grad(&self, set: &LogicTrainingSet) -> (f64, DistilledLogicModel) {
        let mut grad = DistilledLogicModel::zeros(self.dim);
        if set.labels.is_empty() {
            return (0.0, grad);
        }
        let n = set.labels.len() as f64;
        let mut loss = 0.0;
        for ((src, tgt), &label) in set.src.iter().zip(&set.tgt).zip(&set.labels) {
            let (l, g) = bce(self.logit(src, tgt), label);
            loss += l;
            let g = g / n;
            for (a, &x) in src.iter().enumerate() {
                let row = &mut grad.w[a * self.dim..(a + 1) * self.dim];
                for (w, &y) in row.iter_mut().zip(tgt) {
                    *w += g * x * y;
                }
            }
            grad.bias += g;
        }
        (loss / n, grad)
    }
}

/// Embedded (source, target, label) triples.
#[derive(Debug, Clone)]
pub struct LogicTrainingSet {
    src: Vec<Vec<f64>>,
    tgt: Vec<Vec<f64>>,
    labels: Vec<f64>,
}

impl LogicTrainingSet {
    pub fn build(pairs: &[(String, String, bool)], embedder: &impl TagSemanticEmbedder) -> Self {
        let mut cache: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut embed = |t: &str| -> Vec<f64> {
            cache.entry(t.to_string()).or_insert_with(|| embedder.embed(t)).clone()
        };
        let mut set = LogicTrainingSet {
            src: Vec::with_capacity(pairs.len()),
            tgt: Vec::with_capacity(pairs.len()),
            labels: Vec::with_capacity(pairs.len()),
        };
        for (s, t, y) in pairs {
            set.src.push(embed(s));
            set.tgt.push(embed(t));
            set.labels.push(if *y { 1.0 } else { 0.0 });
        }
        set
    }

    pub fn from_vectors(src: Vec<Vec<f64>>, tgt: Vec<Vec<f64>>, labels: Vec<f64>) -> Self {
        assert!(src.len() == tgt.len() && tgt.len() == labels.len());
        LogicTrainingSet { src, tgt, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn train_distilled_logic_model(
    pairs: &[(String, String, bool)],
    embedder: &impl TagSemanticEmbedder,
    cfg: &DistillConfig,
) -> Result<Trained<DistilledLogicModel>> {
    let set = LogicTrainingSet::build(pairs, embedder);
    let mut model = DistilledLogicModel::zeros(embedder.dim());
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..=cfg.epochs {
        let (loss, grad) = model.loss_and_grad(&set);
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch, loss });
        }
        trace.push(loss);
        if epoch == cfg.epochs {
            break;
        }
        let decay = 1.0 - cfg.lr * cfg.weight_decay;
        for (w, g) in model.w.iter_mut().zip(&grad.w) {
            *w = *w * decay - cfg.lr * g;
        }
        model.bias -= cfg.lr * grad.bias;
    }
    Ok(Trained {
        model,
        loss_trace: trace,
    })
}

/// Dense (source × target) score table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairScores {
    table: BTreeMap<(u32, u32), f64>,
}

impl PairScores {
    pub fn get(&self, source: u32, target: u32) -> f64 {
        self.table.get(&(source, target)).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

pub fn score_cover_pairs(
    model: &DistilledLogicModel,
    sources: &[(u32, String)],
    targets: &[(u32, String)],
    embedder: &impl TagSemanticEmbedder,
) -> PairScores {
    let tgt: Vec<(u32, Vec<f64>)> = targets.iter().map(|(id, t)| (*id, embedder.embed(t))).collect();
    let mut table = BTreeMap::new();
    for (sid, s) in sources {
        let es = embedder.embed(s);
        for (tid, et) in &tgt {
            table.insert((*sid, *tid), model.score(&es, et));
        }
    }
    PairScores { table }
}

/// Per-kind tag models stored in a snapshot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistilledTagModels {
    pub user: Option<DistilledTagModel>,
    pub item: Option<DistilledTagModel>,
}

/// Per-direction logic models plus the embedder they were trained against.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistilledLogicModels {
    pub embedder: HashingEmbedder,
    pub u2i: Option<DistilledLogicModel>,
    pub i2u: Option<DistilledLogicModel>,
}
