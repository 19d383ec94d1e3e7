use std::collections::HashMap;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagKind {
    UserRole,
    ItemTopic,
}

impl TagKind {
    pub fn opposite(self) -> TagKind {
        match self {
            TagKind::UserRole => TagKind::ItemTopic,
            TagKind::ItemTopic => TagKind::UserRole,
        }
    }
}

impl std::fmt::Display for TagKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TagKind::UserRole => f.write_str("user"),
            TagKind::ItemTopic => f.write_str("item"),
        }
    }
}

impl std::str::FromStr for TagKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "user" | "user_role" => Ok(TagKind::UserRole),
            "item" | "item_topic" => Ok(TagKind::ItemTopic),
            other => Err(Error::Config(format!("unknown tag kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tag {
    pub id: u32,
    pub kind: TagKind,
    /// Canonical text; also the dedup key.
    pub text: String,
    pub first_seen_day: i64,
}

/// Trim and case-fold. Returns `None` when nothing is left.
pub fn canonicalize(text: &str) -> Option<String> {
    let t = text.trim();
    if t.is_empty() {
        None
    } else {
        Some(t.to_lowercase())
    }
}

/// Append-only tag set of one kind. Ids are dense in insertion order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TagVocabulary {
    kind: TagKind,
    day: i64,
    tags: Vec<Tag>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

#[derive(Deserialize)]
struct VocabRepr {
    kind: TagKind,
    day: i64,
    tags: Vec<Tag>,
}

impl<'de> Deserialize<'de> for TagVocabulary {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = VocabRepr::deserialize(deserializer)?;
        let mut index = HashMap::with_capacity(repr.tags.len());
        for (pos, tag) in repr.tags.iter().enumerate() {
            if tag.id as usize != pos || tag.kind != repr.kind {
                return Err(D::Error::custom(format!("vocabulary entry {pos} is out of place")));
            }
            if index.insert(tag.text.clone(), tag.id).is_some() {
                return Err(D::Error::custom(format!("duplicate tag text `{}`", tag.text)));
            }
        }
        Ok(TagVocabulary {
            kind: repr.kind,
            day: repr.day,
            tags: repr.tags,
            index,
        })
    }
}

impl TagVocabulary {
    pub fn new(kind: TagKind) -> Self {
        TagVocabulary {
            kind,
            day: 0,
            tags: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn kind(&self) -> TagKind {
        self.kind
    }

    pub fn day(&self) -> i64 {
        self.day
    }

    pub fn set_day(&mut self, day: i64) {
        self.day = day;
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn get(&self, id: u32) -> Option<&Tag> {
        self.tags.get(id as usize)
    }

    pub fn text(&self, id: u32) -> Option<&str> {
        self.get(id).map(|t| t.text.as_str())
    }

    pub fn lookup(&self, text: &str) -> Option<&Tag> {
        let key = canonicalize(text)?;
        self.index.get(&key).map(|&id| &self.tags[id as usize])
    }

    /// Union the given strings into the vocabulary.
    ///
    /// Returns one tag per input, in input order. Unseen strings get fresh ids
    /// in the order they first appear. Nothing is inserted if any string is
    /// empty after canonicalization.
    pub fn update(&mut self, new_tags: &[impl AsRef<str>]) -> Result<Vec<Tag>> {
        let keys = new_tags
            .iter()
            .enumerate()
            .map(|(index, s)| {
                canonicalize(s.as_ref()).ok_or_else(|| Error::RejectedInput {
                    index,
                    reason: "tag text is empty after canonicalization".into(),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let mut out = Vec::with_capacity(keys.len());
        for key in keys {
            let id = match self.index.get(&key) {
                Some(&id) => id,
                None => {
                    let id = self.tags.len() as u32;
                    self.tags.push(Tag {
                        id,
                        kind: self.kind,
                        text: key.clone(),
                        first_seen_day: self.day,
                    });
                    self.index.insert(key, id);
                    id
                }
            };
            out.push(self.tags[id as usize].clone());
        }
        Ok(out)
    }
}
