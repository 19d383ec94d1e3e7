//! Shared domain types: tags and vocabularies, items and interactions, and the
//! immutable knowledge snapshot.

mod records;
mod snapshot;
mod vocab;

pub use records::{Dataset, InteractionEvent, ItemId, ItemRecord, UserId};
pub use snapshot::{KnowledgeSnapshot, SnapshotBuilder, SCHEMA_VERSION};
pub use vocab::{canonicalize, Tag, TagKind, TagVocabulary};
