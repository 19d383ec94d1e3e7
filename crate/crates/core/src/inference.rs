//! Score fusion with tag matching and logic exploration, top-N ranking and
//! explanation traces.

use std::collections::BTreeSet;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge::{ItemId, KnowledgeSnapshot, UserId};
use crate::logic::{explore, ExplorationConfig, LogicGraph, WeightedTagSet};
use crate::recommender::{encode_user, raw_score, select_tag_set, ModelParameters, TagContext};
use crate::util::{dot, score_desc_id_asc, sigmoid};

/// Default β values swept by experiments.
pub const BETA_GRID: [f64; 4] = [0.0, 0.1, 0.5, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Raw model score only (`β₀ = β₁ = 0`).
    Raw,
    /// Original user tags only (`β₀ > 0, β₁ = 0`).
    Util,
    /// Explored tags enabled (`β₁ > 0`).
    Expl,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub beta0: f64,
    pub beta1: f64,
    pub mode: Mode,
    pub top_n: usize,
    /// Size of the user's original tag set.
    pub k: usize,
    pub exploration: ExplorationConfig,
}

impl InferenceConfig {
    pub fn raw(top_n: usize) -> Self {
        InferenceConfig {
            beta0: 0.0,
            beta1: 0.0,
            mode: Mode::Raw,
            top_n,
            k: 5,
            exploration: ExplorationConfig::default(),
        }
    }

    pub fn util(beta0: f64, top_n: usize) -> Self {
        InferenceConfig {
            beta0,
            mode: Mode::Util,
            ..Self::raw(top_n)
        }
    }

    pub fn expl(beta0: f64, beta1: f64, top_n: usize) -> Self {
        InferenceConfig {
            beta0,
            beta1,
            mode: Mode::Expl,
            ..Self::raw(top_n)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.beta0 >= 0.0 && self.beta1 >= 0.0) || !self.beta0.is_finite() || !self.beta1.is_finite() {
            return fail("betas must be finite and non-negative");
        }
        if self.top_n == 0 || self.k == 0 {
            return fail("top_n and k must be positive");
        }
        match self.mode {
            Mode::Raw if self.beta0 != 0.0 || self.beta1 != 0.0 => fail("raw mode requires beta0 = beta1 = 0"),
            Mode::Util if !(self.beta0 > 0.0) || self.beta1 != 0.0 => fail("util mode requires beta0 > 0 and beta1 = 0"),
            Mode::Expl if !(self.beta1 > 0.0) => fail("expl mode requires beta1 > 0"),
            _ => self.exploration.validate(),
        }
    }
}

/// Per-user state computed once per ranking request.
#[derive(Debug, Clone, PartialEq)]
pub struct UserContext {
    pub user: UserId,
    pub history: BTreeSet<ItemId>,
    pub phi: Vec<f64>,
    /// Original tags `𝒯_u(0)`.
    pub t0: WeightedTagSet,
    /// Explored tags `𝒯_u(1)`; empty unless `β₁ > 0`.
    pub t1: WeightedTagSet,
}

impl UserContext {
    /// `𝒯_u(1) ∖ 𝒯_u(0)`, the tags the exploration term sums over.
    pub fn novel_tags(&self) -> Vec<u32> {
        self.t1.iter().map(|p| p.0).filter(|&t| !self.t0.contains(t)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub item: ItemId,
    pub score: f64,
    pub raw: f64,
    pub tag0: f64,
    pub tag1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub entries: Vec<ScoredItem>,
}

impl RankedList {
    pub fn items(&self) -> Vec<ItemId> {
        self.entries.iter().map(|e| e.item).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TagContribution {
    pub tag: u32,
    /// `β · P(t|u) · P(t|i)`.
    pub contribution: f64,
}

/// A maximal-weight path `t → c → t'` behind one explored tag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogicPath {
    pub source: u32,
    pub via: u32,
    pub target: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub item: ItemId,
    pub original: Vec<TagContribution>,
    pub explored: Vec<TagContribution>,
    pub paths: Vec<LogicPath>,
}

impl Explanation {
    pub fn total(&self) -> f64 {
        self.original.iter().chain(&self.explored).map(|c| c.contribution).sum()
    }
}

/// Read-only scorer over trained parameters and a snapshot's logic graphs.
#[derive(Debug, Clone, Copy)]
pub struct Scorer<'a> {
    pub params: &'a ModelParameters,
    pub ctx: &'a TagContext,
    first: &'a LogicGraph,
    second: &'a LogicGraph,
}

impl<'a> Scorer<'a> {
    pub fn new(params: &'a ModelParameters, ctx: &'a TagContext, snapshot: &'a KnowledgeSnapshot) -> Self {
        let (first, second) = snapshot.exploration_graphs(ctx.kind);
        Self::with_graphs(params, ctx, first, second)
    }

    /// `first` leads from the context's tag kind to the opposite kind, `second` leads back.
    pub fn with_graphs(
        params: &'a ModelParameters,
        ctx: &'a TagContext,
        first: &'a LogicGraph,
        second: &'a LogicGraph,
    ) -> Self {
        Scorer {
            params,
            ctx,
            first,
            second,
        }
    }

    /// `P(t|u) = σ(φ_u · e_t)`; zero for tags outside the model.
    pub fn user_tag_prob(&self, phi: &[f64], tag: u32) -> f64 {
        self.params
            .tag_row(tag)
            .map_or(0.0, |r| sigmoid(dot(phi, self.params.tag_emb.row(r))))
    }

    /// `P(t|i)` from the item embedding, or from the frozen tagger when the context carries one.
    pub fn item_tag_prob(&self, item: ItemId, tag: u32) -> f64 {
        let Some(r) = self.params.tag_row(tag) else {
            return 0.0;
        };
        match &self.ctx.theta {
            Some(theta) => theta.row(item as usize)[r],
            None => sigmoid(dot(self.params.item_emb.row(item as usize), self.params.tag_emb.row(r))),
        }
    }

    pub fn user_context(&self, user: UserId, history: &[ItemId], cfg: &InferenceConfig) -> Result<UserContext> {
        let phi = encode_user(self.params, self.ctx, history, user)?;
        let scores: Vec<(u32, f64)> = self
            .params
            .tag_ids
            .iter()
            .map(|&t| (t, self.user_tag_prob(&phi, t)))
            .collect();
        let t0 = if cfg.beta0 > 0.0 || cfg.beta1 > 0.0 {
            select_tag_set(&scores, cfg.k)
        } else {
            WeightedTagSet::new()
        };
        let t1 = if cfg.beta1 > 0.0 && !t0.is_empty() {
            explore(&t0, self.first, self.second, &cfg.exploration)?.1
        } else {
            WeightedTagSet::new()
        };
        Ok(UserContext {
            user,
            history: history.iter().copied().collect(),
            phi,
            t0,
            t1,
        })
    }

    /// `Σ_{t ∈ tags} P(t|u) · P(t|i)`.
    pub fn tag_match_score(&self, uc: &UserContext, item: ItemId, tags: impl IntoIterator<Item = u32>) -> f64 {
        tags.into_iter()
            .map(|t| self.user_tag_prob(&uc.phi, t) * self.item_tag_prob(item, t))
            .sum()
    }

    /// `ŷ = ŷ_raw + β₀·ŷ_tag0 + β₁·ŷ_tag1`.
    pub fn score(&self, uc: &UserContext, item: ItemId, cfg: &InferenceConfig) -> ScoredItem {
        let raw = raw_score(&uc.phi, self.params.item_emb.row(item as usize));
        let tag0 = if cfg.beta0 > 0.0 {
            self.tag_match_score(uc, item, uc.t0.iter().map(|p| p.0))
        } else {
            0.0
        };
        let tag1 = if cfg.beta1 > 0.0 {
            self.tag_match_score(uc, item, uc.novel_tags())
        } else {
            0.0
        };
        ScoredItem {
            item,
            score: raw + cfg.beta0 * tag0 + cfg.beta1 * tag1,
            raw,
            tag0,
            tag1,
        }
    }

    /// Top-N candidates by `ŷ` desc, id asc. History items and duplicates are dropped.
    pub fn rank(&self, uc: &UserContext, candidates: &[ItemId], cfg: &InferenceConfig) -> RankedList {
        let mut pool: BTreeSet<ItemId> = BTreeSet::new();
        let mut filtered = 0usize;
        for &c in candidates {
            if uc.history.contains(&c) {
                filtered += 1;
            } else if (c as usize) < self.params.n_items() {
                pool.insert(c);
            } else {
                warn!("candidate {c} has no embedding; skipped");
            }
        }
        if filtered > 0 {
            warn!("user {}: {filtered} candidates were in the history and were filtered", uc.user);
        }
        let mut scored: Vec<ScoredItem> = pool.into_iter().map(|i| self.score(uc, i, cfg)).collect();
        scored.sort_by(|a, b| score_desc_id_asc(&(a.item, a.score), &(b.item, b.score)));
        scored.truncate(cfg.top_n);
        RankedList { entries: scored }
    }

    pub fn explain(&self, uc: &UserContext, item: ItemId, cfg: &InferenceConfig) -> Explanation {
        let contrib = |beta: f64, tags: Vec<u32>| -> Vec<TagContribution> {
            if beta == 0.0 {
                return Vec::new();
            }
            let mut v: Vec<TagContribution> = tags
                .into_iter()
                .map(|t| TagContribution {
                    tag: t,
                    contribution: beta * self.user_tag_prob(&uc.phi, t) * self.item_tag_prob(item, t),
                })
                .collect();
            v.sort_by(|a, b| score_desc_id_asc(&(a.tag, a.contribution), &(b.tag, b.contribution)));
            v
        };
        let original = contrib(cfg.beta0, uc.t0.iter().map(|p| p.0).collect());
        let explored = contrib(cfg.beta1, uc.novel_tags());
        let paths = explored.iter().filter_map(|c| self.best_path(&uc.t0, c.tag)).collect();
        Explanation {
            item,
            original,
            explored,
            paths,
        }
    }

    /// Heaviest `t → c → target` with `t ∈ t0`, weighted by `t0(t)` and both edges.
    fn best_path(&self, t0: &WeightedTagSet, target: u32) -> Option<LogicPath> {
        let mut best: Option<LogicPath> = None;
        for (t, wt) in t0.iter() {
            for &(c, w1) in self.first.out_edges(t) {
                for &(t2, w2) in self.second.out_edges(c) {
                    if t2 != target {
                        continue;
                    }
                    let weight = wt * w1 * w2;
                    if best.map_or(true, |b| weight > b.weight) {
                        best = Some(LogicPath {
                            source: t,
                            via: c,
                            target,
                            weight,
                        });
                    }
                }
            }
        }
        best
    }
}
