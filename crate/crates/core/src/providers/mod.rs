//! Tag-extraction and logic-reasoning providers, and the distilled models
//! trained on what they return.
//!
//! A provider answers two kinds of question: which user roles and item topics
//! describe an item, and which tags of the opposite kind a given tag logically
//! leads to. [`MockProvider`] answers deterministically from a seed,
//! [`ReplayProvider`] answers from recorded JSON lines and [`RemoteProvider`]
//! forwards to an HTTP endpoint.

mod distill;
mod embedder;
mod mock;
mod remote;
mod replay;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge::{canonicalize, ItemRecord, TagKind};

pub use distill::{
    predict_tags, score_cover_pairs, train_distilled_logic_model, train_distilled_tag_model,
    DistillConfig, DistilledLogicModel, DistilledLogicModels, DistilledTagModel,
    DistilledTagModels, LogicTrainingSet, PairScores, TagTrainingSet, Trained,
};
pub use embedder::{HashingEmbedder, TagSemanticEmbedder, DEFAULT_EMBED_DIM};
pub use mock::MockProvider;
pub use remote::{RemoteProvider, ENV_PROVIDER_TOKEN, ENV_PROVIDER_URL};
pub use replay::{ReplayProvider, ReplayRecord};

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("transport error (retryable: {retryable}): {message}")]
    Transport { retryable: bool, message: String },

    #[error("provider broke its contract: {0}")]
    Contract(String),

    #[error("no recorded response for {0}")]
    ReplayMiss(String),

    #[error("provider configuration: {0}")]
    Config(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::Transport { retryable: true, .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagExtractionRequest {
    pub item_id: u32,
    pub text_fields: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic_embedding: Option<Vec<f64>>,
}

impl From<&ItemRecord> for TagExtractionRequest {
    fn from(item: &ItemRecord) -> Self {
        TagExtractionRequest {
            item_id: item.item_id,
            text_fields: item.text_fields.clone(),
            semantic_embedding: item.semantic_embedding.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagExtractionResponse {
    pub user_tags: Vec<String>,
    pub item_tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicReasoningRequest {
    pub tag: String,
    pub kind: TagKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicReasoningResponse {
    pub target_kind: TagKind,
    pub targets: Vec<String>,
}

pub trait TagExtractor {
    fn extract(&self, request: &TagExtractionRequest) -> Result<TagExtractionResponse, ProviderError>;
}

pub trait LogicReasoner {
    fn reason(&self, request: &LogicReasoningRequest) -> Result<LogicReasoningResponse, ProviderError>;
}

/// Canonicalize, drop empties and deduplicate, keeping first occurrences.
fn dedup_canonical(tags: &[String]) -> Vec<String> {
    let mut seen = HashSet::new();
    tags.iter()
        .filter_map(|t| canonicalize(t))
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

/// Ask `provider` for an item's tags and enforce the response contract.
pub fn extract_tags(
    provider: &impl TagExtractor,
    item: &ItemRecord,
) -> Result<TagExtractionResponse, ProviderError> {
    let raw = provider.extract(&TagExtractionRequest::from(item))?;
    let resp = TagExtractionResponse {
        user_tags: dedup_canonical(&raw.user_tags),
        item_tags: dedup_canonical(&raw.item_tags),
    };
    if resp.user_tags.is_empty() || resp.item_tags.is_empty() {
        return Err(ProviderError::Contract(format!(
            "empty tag list for item {}",
            item.item_id
        )));
    }
    Ok(resp)
}

/// Ask `provider` for the logic targets of one tag and enforce the response contract.
pub fn reason_logic(
    provider: &impl LogicReasoner,
    tag: &str,
    kind: TagKind,
) -> Result<LogicReasoningResponse, ProviderError> {
    let raw = provider.reason(&LogicReasoningRequest {
        tag: tag.to_string(),
        kind,
    })?;
    if raw.target_kind != kind.opposite() {
        return Err(ProviderError::Contract(format!(
            "targets for a {kind} tag must be {} tags",
            kind.opposite()
        )));
    }
    let targets = dedup_canonical(&raw.targets);
    if targets.is_empty() {
        return Err(ProviderError::Contract(format!("no logic targets for `{tag}`")));
    }
    Ok(LogicReasoningResponse {
        target_kind: raw.target_kind,
        targets,
    })
}

/// Run `extract_tags` over `items` with at most `width` calls in flight.
/// Results keep the input order.
pub fn extract_batch<P: TagExtractor + Sync>(
    provider: &P,
    items: &[ItemRecord],
    width: usize,
) -> Vec<Result<TagExtractionResponse, ProviderError>> {
    let width = width.clamp(1, items.len().max(1));
    let mut slots: Vec<Option<Result<TagExtractionResponse, ProviderError>>> =
        (0..items.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..width)
            .map(|lane| {
                scope.spawn(move || {
                    items
                        .iter()
                        .enumerate()
                        .skip(lane)
                        .step_by(width)
                        .map(|(idx, item)| (idx, extract_tags(provider, item)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (idx, r) in h.join().expect("provider worker panicked") {
                slots[idx] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every slot filled")).collect()
}
