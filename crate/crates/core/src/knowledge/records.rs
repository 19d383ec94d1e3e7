use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge::TagKind;

pub type ItemId = u32;
pub type UserId = u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: ItemId,
    #[serde(default)]
    pub text_fields: Vec<String>,
    #[serde(default)]
    pub semantic_embedding: Option<Vec<f64>>,
    /// (tag id, score), sorted by descending score.
    #[serde(default)]
    pub user_tags: Vec<(u32, f64)>,
    #[serde(default)]
    pub item_tags: Vec<(u32, f64)>,
}

impl ItemRecord {
    pub fn new(item_id: ItemId) -> Self {
        ItemRecord {
            item_id,
            text_fields: Vec::new(),
            semantic_embedding: None,
            user_tags: Vec::new(),
            item_tags: Vec::new(),
        }
    }

    /// Replace one tag list, sorting by score descending (ties: smaller id).
/// A repeated tag keeps its highest score.
    pub fn set_tags(&mut self, kind: TagKind, mut tags: Vec<(u32, f64)>) -> Result<()> {
        if let Some(pos) = tags
            .iter()
            .position(|&(_, s)| !(0.0..=1.0).contains(&s))
        {
            return Err(Error::RejectedInput {
                index: pos,
                reason: format!("tag score {} outside [0, 1]", tags[pos].1),
            });
        }
        tags.sort_by(crate::util::score_desc_id_asc);
        let mut seen = std::collections::BTreeSet::new();
        tags.retain(|t| seen.insert(t.0));
        match kind {
            TagKind::UserRole => self.user_tags = tags,
            TagKind::ItemTopic => self.item_tags = tags,
        }
        Ok(())
    }

    pub fn tags(&self, kind: TagKind) -> &[(u32, f64)] {
        match kind {
            TagKind::UserRole => &self.user_tags,
            TagKind::ItemTopic => &self.item_tags,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub user_id: UserId,
    pub item_id: ItemId,
    pub timestamp: i64,
    pub label: bool,
    pub weight: f64,
}

impl InteractionEvent {
    pub fn positive(user_id: UserId, item_id: ItemId, timestamp: i64) -> Self {
        InteractionEvent {
            user_id,
            item_id,
            timestamp,
            label: true,
            weight: 1.0,
        }
    }

    fn order_key(&self) -> (UserId, i64, ItemId) {
        (self.user_id, self.timestamp, self.item_id)
    }
}

/// Items plus interaction events, kept sorted by (user, timestamp, item).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    items: BTreeMap<ItemId, ItemRecord>,
    events: Vec<InteractionEvent>,
}

impl Dataset {
    pub fn new(
        items: impl IntoIterator<Item = ItemRecord>,
        events: impl IntoIterator<Item = InteractionEvent>,
    ) -> Result<Self> {
        let items: BTreeMap<_, _> = items.into_iter().map(|r| (r.item_id, r)).collect();
        let mut events: Vec<_> = events.into_iter().collect();
        for (index, e) in events.iter().enumerate() {
            if e.weight < 0.0 || !e.weight.is_finite() || (e.label && e.weight <= 0.0) {
                return Err(Error::RejectedInput {
                    index,
                    reason: format!("invalid weight {} for label {}", e.weight, e.label),
                });
            }
            if !items.contains_key(&e.item_id) {
                return Err(Error::RejectedInput {
                    index,
                    reason: format!("unknown item {}", e.item_id),
                });
            }
        }
        events.sort_by_key(InteractionEvent::order_key);
        Ok(Dataset { items, events })
    }

    pub(crate) fn from_sorted_parts(
        items: BTreeMap<ItemId, ItemRecord>,
        events: Vec<InteractionEvent>,
    ) -> Self {
        debug_assert!(events
            .windows(2)
            .all(|w| w[0].order_key() <= w[1].order_key()));
        Dataset { items, events }
    }

    pub fn items(&self) -> &BTreeMap<ItemId, ItemRecord> {
        &self.items
    }

    pub fn item(&self, id: ItemId) -> Option<&ItemRecord> {
        self.items.get(&id)
    }

    pub fn events(&self) -> &[InteractionEvent] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty() && self.items.is_empty()
    }

    pub fn users(&self) -> BTreeSet<UserId> {
        self.events.iter().map(|e| e.user_id).collect()
    }

    /// One past the largest item id; the size of dense item tables.
    pub fn item_capacity(&self) -> usize {
        self.items.keys().next_back().map_or(0, |&i| i as usize + 1)
    }

    /// Chronological events per user.
    pub fn histories(&self) -> BTreeMap<UserId, &[InteractionEvent]> {
        let mut out = BTreeMap::new();
        let mut start = 0;
        while start < self.events.len() {
            let user = self.events[start].user_id;
            let end = start
                + self.events[start..]
                    .iter()
                    .take_while(|e| e.user_id == user)
                    .count();
            out.insert(user, &self.events[start..end]);
            start = end;
        }
        out
    }

    pub fn min_max_timestamp(&self) -> Option<(i64, i64)> {
        let min = self.events.iter().map(|e| e.timestamp).min()?;
        let max = self.events.iter().map(|e| e.timestamp).max()?;
        Some((min, max))
    }

    pub fn with_events(&self, events: Vec<InteractionEvent>) -> Dataset {
        Dataset::from_sorted_parts(self.items.clone(), events)
    }

    pub fn with_items(&self, items: BTreeMap<ItemId, ItemRecord>) -> Dataset {
        Dataset::from_sorted_parts(items, self.events.clone())
    }

    /// Item → tag-id set for one kind; items without tags are omitted.
    pub fn item_tag_mapping(&self, kind: TagKind) -> BTreeMap<ItemId, BTreeSet<u32>> {
        self.items
            .values()
            .filter(|r| !r.tags(kind).is_empty())
            .map(|r| (r.item_id, r.tags(kind).iter().map(|t| t.0).collect()))
            .collect()
    }
}
