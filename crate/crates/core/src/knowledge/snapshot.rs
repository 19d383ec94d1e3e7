use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coverset::{CoverSet, TagItemHistory};
use crate::error::{Error, Result};
use crate::knowledge::{TagKind, TagVocabulary};
use crate::logic::{Direction, LogicGraph};
use crate::providers::{DistilledLogicModels, DistilledTagModels};
use crate::util::canonical_json;

pub const SCHEMA_VERSION: u64 = 1;

/// The daily knowledge bundle consumed by training and serving.
///
/// Built once through [`SnapshotBuilder`] and never mutated afterwards; share
/// it behind `Arc` across readers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeSnapshot {
    schema_version: u64,
    day: i64,
    user_vocab: TagVocabulary,
    item_vocab: TagVocabulary,
    cover_set_user: CoverSet,
    cover_set_item: CoverSet,
    history_user: TagItemHistory,
    history_item: TagItemHistory,
    g_u2i: LogicGraph,
    g_i2u: LogicGraph,
    distilled_tag_model: DistilledTagModels,
    distilled_logic_model: DistilledLogicModels,
}

#[derive(Debug, Clone)]
pub struct SnapshotBuilder {
    pub day: i64,
    pub user_vocab: TagVocabulary,
    pub item_vocab: TagVocabulary,
    pub cover_set_user: CoverSet,
    pub cover_set_item: CoverSet,
    pub history_user: TagItemHistory,
    pub history_item: TagItemHistory,
    pub g_u2i: Option<LogicGraph>,
    pub g_i2u: Option<LogicGraph>,
    pub distilled_tag_model: DistilledTagModels,
    pub distilled_logic_model: DistilledLogicModels,
}

impl Default for SnapshotBuilder {
    fn default() -> Self {
        SnapshotBuilder {
            day: 0,
            user_vocab: TagVocabulary::new(TagKind::UserRole),
            item_vocab: TagVocabulary::new(TagKind::ItemTopic),
            cover_set_user: CoverSet::default(),
            cover_set_item: CoverSet::default(),
            history_user: TagItemHistory::default(),
            history_item: TagItemHistory::default(),
            g_u2i: None,
            g_i2u: None,
            distilled_tag_model: DistilledTagModels::default(),
            distilled_logic_model: DistilledLogicModels::default(),
        }
    }
}

impl SnapshotBuilder {
    /// Validates graph endpoints against the cover sets.
    pub fn build(self) -> Result<KnowledgeSnapshot> {
        let users = self.cover_set_user.selected();
        let items = self.cover_set_item.selected();
        let g_u2i = self
            .g_u2i
            .unwrap_or_else(|| LogicGraph::empty(Direction::U2I, users, items, crate::logic::DEFAULT_BRANCH));
        let g_i2u = self
            .g_i2u
            .unwrap_or_else(|| LogicGraph::empty(Direction::I2U, items, users, crate::logic::DEFAULT_BRANCH));
        let snap = KnowledgeSnapshot {
            schema_version: SCHEMA_VERSION,
            day: self.day,
            user_vocab: self.user_vocab,
            item_vocab: self.item_vocab,
            cover_set_user: self.cover_set_user,
            cover_set_item: self.cover_set_item,
            history_user: self.history_user,
            history_item: self.history_item,
            g_u2i,
            g_i2u,
            distilled_tag_model: self.distilled_tag_model,
            distilled_logic_model: self.distilled_logic_model,
        };
        snap.validate().map_err(Error::CorruptSnapshot)?;
        Ok(snap)
    }
}

impl KnowledgeSnapshot {
    pub fn empty() -> Self {
        SnapshotBuilder::default().build().expect("empty snapshot is valid")
    }

    pub fn to_builder(&self) -> SnapshotBuilder {
        SnapshotBuilder {
            day: self.day,
            user_vocab: self.user_vocab.clone(),
            item_vocab: self.item_vocab.clone(),
            cover_set_user: self.cover_set_user.clone(),
            cover_set_item: self.cover_set_item.clone(),
            history_user: self.history_user.clone(),
            history_item: self.history_item.clone(),
            g_u2i: Some(self.g_u2i.clone()),
            g_i2u: Some(self.g_i2u.clone()),
            distilled_tag_model: self.distilled_tag_model.clone(),
            distilled_logic_model: self.distilled_logic_model.clone(),
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let users = self.cover_set_user.selected_set();
        let items = self.cover_set_item.selected_set();
        if self.g_u2i.direction() != Direction::U2I || self.g_i2u.direction() != Direction::I2U {
            return Err("logic graph directions are swapped".into());
        }
        if !self.g_u2i.endpoints_within(&users, &items) {
            return Err("U2I graph references tags outside the cover sets".into());
        }
        if !self.g_i2u.endpoints_within(&items, &users) {
            return Err("I2U graph references tags outside the cover sets".into());
        }
        for (vocab, cover, kind) in [
            (&self.user_vocab, &self.cover_set_user, TagKind::UserRole),
            (&self.item_vocab, &self.cover_set_item, TagKind::ItemTopic),
        ] {
            if vocab.kind() != kind {
                return Err(format!("{kind} vocabulary has the wrong kind"));
            }
            if let Some(t) = cover.selected().iter().find(|&&t| vocab.get(t).is_none()) {
                return Err(format!("{kind} cover set references unknown tag {t}"));
            }
        }
        Ok(())
    }

    pub fn schema_version(&self) -> u64 {
        self.schema_version
    }

    pub fn day(&self) -> i64 {
        self.day
    }

    pub fn vocab(&self, kind: TagKind) -> &TagVocabulary {
        match kind {
            TagKind::UserRole => &self.user_vocab,
            TagKind::ItemTopic => &self.item_vocab,
        }
    }

    pub fn cover_set(&self, kind: TagKind) -> &CoverSet {
        match kind {
            TagKind::UserRole => &self.cover_set_user,
            TagKind::ItemTopic => &self.cover_set_item,
        }
    }

    pub fn history(&self, kind: TagKind) -> &TagItemHistory {
        match kind {
            TagKind::UserRole => &self.history_user,
            TagKind::ItemTopic => &self.history_item,
        }
    }

    pub fn g_u2i(&self) -> &LogicGraph {
        &self.g_u2i
    }

    pub fn g_i2u(&self) -> &LogicGraph {
        &self.g_i2u
    }

    /// (first hop, second hop) for exploring from tags of `kind`.
    pub fn exploration_graphs(&self, kind: TagKind) -> (&LogicGraph, &LogicGraph) {
        match kind {
            TagKind::UserRole => (&self.g_u2i, &self.g_i2u),
            TagKind::ItemTopic => (&self.g_i2u, &self.g_u2i),
        }
    }

    pub fn distilled_tag_model(&self) -> &DistilledTagModels {
        &self.distilled_tag_model
    }

    pub fn distilled_logic_model(&self) -> &DistilledLogicModels {
        &self.distilled_logic_model
    }

    pub fn to_canonical_json(&self) -> Result<String> {
        Ok(canonical_json(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::CorruptSnapshot(e.to_string()))?;
        let version = value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::CorruptSnapshot("missing schema_version".into()))?;
        if version != SCHEMA_VERSION {
            return Err(Error::Version {
                found: version,
                expected: SCHEMA_VERSION,
            });
        }
        let snap: KnowledgeSnapshot =
            serde_json::from_value(value).map_err(|e| Error::CorruptSnapshot(e.to_string()))?;
        snap.validate().map_err(Error::CorruptSnapshot)?;
        Ok(snap)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_canonical_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
