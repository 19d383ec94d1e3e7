use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    LogicReasoner, LogicReasoningRequest, LogicReasoningResponse, ProviderError, TagExtractionRequest,
    TagExtractionResponse, TagExtractor,
};
use crate::knowledge::{canonicalize, TagKind};

/// One line of a replay file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReplayRecord {
    Extract {
        request: TagExtractionRequest,
        response: TagExtractionResponse,
    },
    Logic {
        request: LogicReasoningRequest,
        response: LogicReasoningResponse,
    },
}

/// Answers from previously recorded request/response pairs.
///
/// Extraction requests are matched on item id and text fields; logic requests
/// on (kind, canonical tag text).
#[derive(Debug, Clone, Default)]
pub struct ReplayProvider {
    extract: HashMap<(u32, Vec<String>), TagExtractionResponse>,
    logic: HashMap<(TagKind, String), LogicReasoningResponse>,
}

impl ReplayProvider {
    pub fn from_records(records: impl IntoIterator<Item = ReplayRecord>) -> Self {
        let mut p = ReplayProvider::default();
        for r in records {
            match r {
                ReplayRecord::Extract { request, response } => {
                    p.extract
                        .insert((request.item_id, request.text_fields), response);
                }
                ReplayRecord::Logic { request, response } => {
                    let key = canonicalize(&request.tag).unwrap_or_default();
                    p.logic.insert((request.kind, key), response);
                }
            }
        }
        p
    }

    pub fn from_reader(reader: impl BufRead) -> Result<Self, ProviderError> {
        let mut records = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| ProviderError::Config(format!("replay line {}: {e}", idx + 1)))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ReplayRecord = serde_json::from_str(&line)
                .map_err(|e| ProviderError::Config(format!("replay line {}: {e}", idx + 1)))?;
            records.push(rec);
        }
        Ok(Self::from_records(records))
    }

    pub fn open(path: &Path) -> Result<Self, ProviderError> {
        let f = std::fs::File::open(path)
            .map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))?;
        Self::from_reader(std::io::BufReader::new(f))
    }

    pub fn len(&self) -> usize {
        self.extract.len() + self.logic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl TagExtractor for ReplayProvider {
    fn extract(&self, request: &TagExtractionRequest) -> Result<TagExtractionResponse, ProviderError> {
        self.extract
            .get(&(request.item_id, request.text_fields.clone()))
            .cloned()
            .ok_or_else(|| ProviderError::ReplayMiss(format!("item {}", request.item_id)))
    }
}

impl LogicReasoner for ReplayProvider {
    fn reason(&self, request: &LogicReasoningRequest) -> Result<LogicReasoningResponse, ProviderError> {
        let key = canonicalize(&request.tag).unwrap_or_default();
        self.logic
            .get(&(request.kind, key))
            .cloned()
            .ok_or_else(|| ProviderError::ReplayMiss(format!("{} tag `{}`", request.kind, request.tag)))
    }
}
