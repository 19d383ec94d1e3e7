use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;

use super::{
    LogicReasoner, LogicReasoningRequest, LogicReasoningResponse, ProviderError, TagExtractionRequest,
    TagExtractionResponse, TagExtractor,
};
use crate::knowledge::{canonicalize, TagKind};
use crate::util::{fnv1a, seeded_rng};

const MIN_TAGS: usize = 8;
const MAX_TAGS: usize = 10;

/// Deterministic stand-in for a generative tagger.
///
/// Extraction first returns lexicon tags mentioned verbatim in the item text,
/// then pads with seeded picks so each list holds 8 to 10 tags. Logic
/// reasoning returns the configured table entries for a tag, padded the same
/// way from the opposite lexicon.
#[derive(Debug, Clone)]
pub struct MockProvider {
    seed: u64,
    user_lexicon: Vec<String>,
    topic_lexicon: Vec<String>,
    logic: BTreeMap<(TagKind, String), Vec<String>>,
}

impl MockProvider {
    pub fn new(
        seed: u64,
        user_lexicon: Vec<String>,
        topic_lexicon: Vec<String>,
    ) -> Result<Self, ProviderError> {
        let canon = |xs: Vec<String>| -> Vec<String> {
            let mut out: Vec<String> = xs.iter().filter_map(|s| canonicalize(s)).collect();
            out.sort();
            out.dedup();
            out
        };
        let user_lexicon = canon(user_lexicon);
        let topic_lexicon = canon(topic_lexicon);
        if user_lexicon.len() < MAX_TAGS || topic_lexicon.len() < MAX_TAGS {
            return Err(ProviderError::Config(format!(
                "mock lexicons need at least {MAX_TAGS} distinct tags each"
            )));
        }
        Ok(MockProvider {
            seed,
            user_lexicon,
            topic_lexicon,
            logic: BTreeMap::new(),
        })
    }

    /// Lexicons `role 000..` and `topic 000..`, 64 entries each.
    pub fn with_default_lexicons(seed: u64) -> Self {
        let roles = (0..64).map(|i| format!("role {i:03}")).collect();
        let topics = (0..64).map(|i| format!("topic {i:03}")).collect();
        MockProvider::new(seed, roles, topics).expect("default lexicons are large enough")
    }

    /// Register known logic targets for a source tag.
    pub fn with_logic(mut self, kind: TagKind, source: &str, targets: &[String]) -> Self {
        if let Some(key) = canonicalize(source) {
            self.logic.insert(
                (kind, key),
                targets.iter().filter_map(|t| canonicalize(t)).collect(),
            );
        }
        self
    }

    pub fn lexicon(&self, kind: TagKind) -> &[String] {
        match kind {
            TagKind::UserRole => &self.user_lexicon,
            TagKind::ItemTopic => &self.topic_lexicon,
        }
    }

    /// Pads `found` with seeded lexicon picks up to a seeded size in [8, 10].
    fn fill(&self, key: &[u8], lexicon: &[String], mut found: Vec<String>) -> Vec<String> {
        let mut rng = seeded_rng(fnv1a(self.seed, key));
        let target = rng.gen_range(MIN_TAGS..=MAX_TAGS);
        found.truncate(target);
        let picks = sample(&mut rng, lexicon.len(), lexicon.len());
        for idx in picks.iter() {
            if found.len() >= target {
                break;
            }
            let tag = &lexicon[idx];
            if !found.contains(tag) {
                found.push(tag.clone());
            }
        }
        found
    }
}

fn mentioned(text: &str, lexicon: &[String]) -> Vec<String> {
    lexicon
        .iter()
        .filter(|tag| text.contains(tag.as_str()))
        .cloned()
        .collect()
}

impl TagExtractor for MockProvider {
    fn extract(&self, request: &TagExtractionRequest) -> Result<TagExtractionResponse, ProviderError> {
        let text = canonicalize(&request.text_fields.join(" \u{1f} ")).unwrap_or_default();
        let user = self.fill(
            format!("user\u{0}{text}").as_bytes(),
            &self.user_lexicon,
            mentioned(&text, &self.user_lexicon),
        );
        let item = self.fill(
            format!("item\u{0}{text}").as_bytes(),
            &self.topic_lexicon,
            mentioned(&text, &self.topic_lexicon),
        );
        Ok(TagExtractionResponse {
            user_tags: user,
            item_tags: item,
        })
    }
}

impl LogicReasoner for MockProvider {
    fn reason(&self, request: &LogicReasoningRequest) -> Result<LogicReasoningResponse, ProviderError> {
        let key = canonicalize(&request.tag)
            .ok_or_else(|| ProviderError::Contract("empty source tag".into()))?;
        let known = self
            .logic
            .get(&(request.kind, key.clone()))
            .cloned()
            .unwrap_or_default();
        let target_kind = request.kind.opposite();
        let targets = self.fill(
            format!("logic\u{0}{}\u{0}{key}", request.kind).as_bytes(),
            self.lexicon(target_kind),
            known,
        );
        Ok(LogicReasoningResponse {
            target_kind,
            targets,
        })
    }
}
