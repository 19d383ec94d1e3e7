//! Knowledge-building stages shared by the CLI and the experiment runner.

use std::collections::{BTreeMap, BTreeSet};

use log::{info, warn};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::coverset::{update_cover_set, ItemTagMapping, UpdateReport};
use crate::error::{Error, Result};
use crate::knowledge::{Dataset, ItemRecord, KnowledgeSnapshot, TagKind};
use crate::logic::{build_graph, Direction, LogicGraph};
use crate::providers::{
    extract_batch, reason_logic, score_cover_pairs, train_distilled_logic_model, train_distilled_tag_model,
    DistillConfig, DistilledLogicModels, LogicReasoner, TagExtractor, TagSemanticEmbedder,
};
use crate::util::seeded_rng;

/// Score given to the tag at rank `r` of a provider response.
pub fn rank_score(r: usize) -> f64 {
    1.0 / (r + 1) as f64
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub items: usize,
    pub tagged: usize,
    /// Items whose provider call failed; they keep their previous tags.
    pub failed: Vec<u32>,
    pub new_user_tags: usize,
    pub new_item_tags: usize,
}

/// Ask `provider` for every item's tags, growing the snapshot vocabularies.
pub fn extract_item_tags<P: TagExtractor + Sync>(
    provider: &P,
    ds: &Dataset,
    snapshot: &KnowledgeSnapshot,
    width: usize,
) -> Result<(Dataset, KnowledgeSnapshot, ExtractionReport)> {
    let items: Vec<ItemRecord> = ds.items().values().cloned().collect();
    let responses = extract_batch(provider, &items, width);
    let mut b = snapshot.to_builder();
    let (u0, i0) = (b.user_vocab.len(), b.item_vocab.len());
    let mut report = ExtractionReport {
        items: items.len(),
        ..Default::default()
    };
    let mut out = BTreeMap::new();
    for (mut rec, resp) in items.into_iter().zip(responses) {
        match resp {
            Ok(resp) => {
                let users = b.user_vocab.update(&resp.user_tags)?;
                let topics = b.item_vocab.update(&resp.item_tags)?;
                let scored = |tags: Vec<crate::knowledge::Tag>| -> Vec<(u32, f64)> {
                    tags.into_iter().enumerate().map(|(r, t)| (t.id, rank_score(r))).collect()
                };
                rec.set_tags(TagKind::UserRole, scored(users))?;
                rec.set_tags(TagKind::ItemTopic, scored(topics))?;
                report.tagged += 1;
            }
            Err(e) => {
                warn!("tag extraction failed for item {}: {e}", rec.item_id);
                report.failed.push(rec.item_id);
            }
        }
        out.insert(rec.item_id, rec);
    }
    report.new_user_tags = b.user_vocab.len() - u0;
    report.new_item_tags = b.item_vocab.len() - i0;
    Ok((ds.with_items(out), b.build()?, report))
}

/// One daily cover-set update for `kind`. Logic graphs whose endpoints fall
/// outside the new cover sets are dropped and must be rebuilt.
pub fn apply_cover_update(
    snapshot: &KnowledgeSnapshot,
    kind: TagKind,
    mapping: BTreeMap<u32, BTreeSet<u32>>,
    day: i64,
) -> Result<(KnowledgeSnapshot, UpdateReport)> {
    let m = ItemTagMapping::new(mapping)?;
    let (cover, history, report) = update_cover_set(snapshot.cover_set(kind), &m, snapshot.history(kind), day)?;
    let mut b = snapshot.to_builder();
    match kind {
        TagKind::UserRole => {
            b.cover_set_user = cover;
            b.history_user = history;
        }
        TagKind::ItemTopic => {
            b.cover_set_item = cover;
            b.history_item = history;
        }
    }
    b.day = b.day.max(day);
    let users = b.cover_set_user.selected_set();
    let items = b.cover_set_item.selected_set();
    let keep = |g: &Option<LogicGraph>, s: &BTreeSet<u32>, t: &BTreeSet<u32>| {
        g.as_ref().is_some_and(|g| g.endpoints_within(s, t))
    };
    if !keep(&b.g_u2i, &users, &items) || !keep(&b.g_i2u, &items, &users) {
        if b.g_u2i.as_ref().is_some_and(|g| g.edge_count() > 0) {
            warn!("cover sets changed; logic graphs dropped until the next logic-build");
        }
        b.g_u2i = None;
        b.g_i2u = None;
    }
    Ok((b.build()?, report))
}

/// Train θ for one tag kind on a seeded `fraction` of the items that carry an
/// embedding. Labels outside the cover set are ignored.
pub fn distill_tag_kind(
    ds: &Dataset,
    snapshot: &KnowledgeSnapshot,
    kind: TagKind,
    fraction: f64,
    cfg: &DistillConfig,
) -> Result<(KnowledgeSnapshot, Vec<f64>)> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("subset fraction {fraction} outside (0, 1]")));
    }
    let mut pool: Vec<&ItemRecord> = ds.items().values().filter(|r| r.semantic_embedding.is_some()).collect();
    if pool.is_empty() {
        return Err(Error::Config("no item carries a semantic embedding".into()));
    }
    let dim = pool[0].semantic_embedding.as_ref().map_or(0, Vec::len);
    let take = ((pool.len() as f64 * fraction).ceil() as usize).clamp(1, pool.len());
    pool.shuffle(&mut seeded_rng(cfg.seed));
    pool.truncate(take);
    pool.sort_by_key(|r| r.item_id);
    let cover = snapshot.cover_set(kind);
    let samples: Vec<(Vec<f64>, Vec<u32>)> = pool
        .iter()
        .map(|r| {
            let e = r.semantic_embedding.clone().unwrap_or_default();
            (e, r.tags(kind).iter().map(|t| t.0).filter(|&t| cover.contains(t)).collect())
        })
        .collect();
    let trained = train_distilled_tag_model(&samples, cover, dim, cfg)?;
    info!(
        "distilled {kind} tag model on {take} items: loss {:.4} -> {:.4}",
        trained.loss_trace.first().copied().unwrap_or(f64::NAN),
        trained.loss_trace.last().copied().unwrap_or(f64::NAN)
    );
    let mut b = snapshot.to_builder();
    match kind {
        TagKind::UserRole => b.distilled_tag_model.user = Some(trained.model),
        TagKind::ItemTopic => b.distilled_tag_model.item = Some(trained.model),
    }
    Ok((b.build()?, trained.loss_trace))
}

/// Positive pairs from the reasoner for every cover tag of `kind`, plus one
/// uniform negative per positive from the opposite cover set.
pub fn collect_logic_pairs(
    reasoner: &impl LogicReasoner,
    snapshot: &KnowledgeSnapshot,
    kind: TagKind,
    seed: u64,
) -> Result<Vec<(String, String, bool)>> {
    let sv = snapshot.vocab(kind);
    let tv = snapshot.vocab(kind.opposite());
    let targets: Vec<&str> = snapshot
        .cover_set(kind.opposite())
        .selected()
        .iter()
        .filter_map(|&t| tv.text(t))
        .collect();
    let mut rng = seeded_rng(seed);
    let mut pairs = Vec::new();
    for &s in snapshot.cover_set(kind).selected() {
        let Some(src) = sv.text(s) else { continue };
        let resp = match reason_logic(reasoner, src, kind) {
            Ok(r) => r,
            Err(e) if !e.is_retryable() => {
                warn!("no logic for `{src}`: {e}");
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let pos: BTreeSet<&str> = resp.targets.iter().map(String::as_str).collect();
        let negatives: Vec<&str> = targets.iter().copied().filter(|t| !pos.contains(t)).collect();
        for t in &resp.targets {
            pairs.push((src.to_string(), t.clone(), true));
            if let Some(n) = negatives.choose(&mut rng) {
                pairs.push((src.to_string(), n.to_string(), false));
            }
        }
    }
    Ok(pairs)
}

/// Train φ for both directions and store it with the embedder used.
pub fn distill_logic(
    snapshot: &KnowledgeSnapshot,
    u2i_pairs: &[(String, String, bool)],
    i2u_pairs: &[(String, String, bool)],
    cfg: &DistillConfig,
) -> Result<KnowledgeSnapshot> {
    let embedder = snapshot.distilled_logic_model().embedder.clone();
    let u2i = train_distilled_logic_model(u2i_pairs, &embedder, cfg)?;
    let i2u = train_distilled_logic_model(i2u_pairs, &embedder, cfg)?;
    let mut b = snapshot.to_builder();
    b.distilled_logic_model = DistilledLogicModels {
        embedder,
        u2i: Some(u2i.model),
        i2u: Some(i2u.model),
    };
    b.build()
}

/// Rebuild both logic graphs over the current cover sets from φ scores.
pub fn build_logic_graphs(snapshot: &KnowledgeSnapshot, branch_b: usize) -> Result<KnowledgeSnapshot> {
    let models = snapshot.distilled_logic_model();
    let (Some(u2i), Some(i2u)) = (models.u2i.as_ref(), models.i2u.as_ref()) else {
        return Err(Error::Config("snapshot has no distilled logic model; run distill --what logic".into()));
    };
    let named = |kind: TagKind| -> Vec<(u32, String)> {
        let v = snapshot.vocab(kind);
        snapshot
            .cover_set(kind)
            .selected()
            .iter()
            .filter_map(|&t| v.text(t).map(|s| (t, s.to_string())))
            .collect()
    };
    let users = named(TagKind::UserRole);
    let items = named(TagKind::ItemTopic);
    let emb = &models.embedder;
    debug_assert!(emb.dim() > 0);
    let fwd = score_cover_pairs(u2i, &users, &items, emb);
    let back = score_cover_pairs(i2u, &items, &users, emb);
    let mut b = snapshot.to_builder();
    b.g_u2i = Some(build_graph(
        Direction::U2I,
        snapshot.cover_set(TagKind::UserRole).selected(),
        snapshot.cover_set(TagKind::ItemTopic).selected(),
        branch_b,
        |s, t| fwd.get(s, t),
    )?);
    b.g_i2u = Some(build_graph(
        Direction::I2U,
        snapshot.cover_set(TagKind::ItemTopic).selected(),
        snapshot.cover_set(TagKind::UserRole).selected(),
        branch_b,
        |s, t| back.get(s, t),
    )?);
    b.build()
}
