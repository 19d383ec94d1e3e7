use serde::{Deserialize, Serialize};

use super::config::{TagProbSource, TrainingConfig};
use super::encoder::ItemTagRows;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::knowledge::{Dataset, KnowledgeSnapshot, TagKind};
use crate::logic::{explore, merge_tag_sets, WeightedTagSet};

/// Per-item tag knowledge the recommender reads, resolved against one
/// snapshot and one tag kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagContext {
    pub kind: TagKind,
    /// Model tag vocabulary (the cover set), ascending.
    pub tag_ids: Vec<u32>,
    /// Top-`k` tag rows per item, indexed by item id.
    pub item_rows: ItemTagRows,
    /// Positive tag ids per item for the item-side tag loss.
    pub item_pos: Vec<Vec<u32>>,
    /// Frozen `P(t|i)` from the distilled tagger (`items × tags`), when enabled.
    pub theta: Option<Tensor>,
}

impl TagContext {
    /// A context without any tags, for the ID-only path.
    pub fn empty(kind: TagKind, n_items: usize) -> Self {
        TagContext {
            kind,
            tag_ids: Vec::new(),
            item_rows: vec![Vec::new(); n_items],
            item_pos: vec![Vec::new(); n_items],
            theta: None,
        }
    }

    pub fn build(ds: &Dataset, snapshot: &KnowledgeSnapshot, cfg: &TrainingConfig) -> Result<Self> {
        let kind = cfg.variant.tag_kind();
        let mut tag_ids = snapshot.cover_set(kind).selected().to_vec();
        tag_ids.sort_unstable();
        let n_items = ds.item_capacity();
        let row = |t: u32| tag_ids.binary_search(&t).ok();
        let (first, second) = snapshot.exploration_graphs(kind);

        let mut item_rows = vec![Vec::new(); n_items];
        let mut item_pos = vec![Vec::new(); n_items];
        for (&id, rec) in ds.items() {
            let top: Vec<(u32, f64)> = rec
                .tags(kind)
                .iter()
                .copied()
                .filter(|&(t, _)| row(t).is_some())
                .take(cfg.k)
                .collect();
            item_rows[id as usize] = top.iter().filter_map(|&(t, _)| row(t)).collect();
            let mut pos: Vec<u32> = top.iter().map(|p| p.0).collect();
            if cfg.explore_tags && !top.is_empty() {
                let t0 = WeightedTagSet::uniform(pos.iter().copied().filter(|&t| first.has_source(t))).normalize();
                if !t0.is_empty() {
                    let (_, t1) = explore(&t0, first, second, &cfg.exploration)?;
                    let merged = merge_tag_sets(&WeightedTagSet::uniform(pos.iter().copied()).normalize(), &t1);
                    pos = merged.support().into_iter().filter(|&t| row(t).is_some()).collect();
                }
            }
            pos.sort_unstable();
            item_pos[id as usize] = pos;
        }

        let theta = match cfg.tag_prob {
            TagProbSource::Embedding => None,
            TagProbSource::Distilled => {
                let models = snapshot.distilled_tag_model();
                let model = match kind {
                    TagKind::UserRole => models.user.as_ref(),
                    TagKind::ItemTopic => models.item.as_ref(),
                }
                .ok_or_else(|| Error::Config(format!("snapshot has no distilled {kind} tag model")))?;
                let mut probs = Tensor::zeros(n_items, tag_ids.len());
                for (&id, rec) in ds.items() {
                    let e = rec.semantic_embedding.as_deref().ok_or(Error::MissingFeature(id))?;
                    if e.len() != model.dim() {
                        return Err(Error::Shape {
                            expected: model.dim(),
                            found: e.len(),
                        });
                    }
                    for (j, &t) in tag_ids.iter().enumerate() {
                        probs.row_mut(id as usize)[j] = model.prob(t, e).unwrap_or(0.0);
                    }
                }
                Some(probs)
            }
        };

        Ok(TagContext {
            kind,
            tag_ids,
            item_rows,
            item_pos,
            theta,
        })
    }

    pub fn n_items(&self) -> usize {
        self.item_rows.len()
    }
}
