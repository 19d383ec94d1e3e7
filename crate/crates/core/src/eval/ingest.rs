use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge::{Dataset, InteractionEvent, ItemId, ItemRecord, TagKind, TagVocabulary, UserId};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub items: usize,
    pub events: usize,
    pub duplicate_events: usize,
    pub malformed_item_lines: Vec<usize>,
    pub malformed_interaction_lines: Vec<usize>,
}

/// One tag as it appears in an items file.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawTag {
    Text(String),
    Pair(String, f64),
    Scored { text: String, score: f64 },
}

impl RawTag {
    fn parts(&self) -> (&str, f64) {
        match self {
            RawTag::Text(t) => (t, 1.0),
            RawTag::Pair(t, s) | RawTag::Scored { text: t, score: s } => (t, *s),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
struct RawItem {
    item_id: ItemId,
    #[serde(default)]
    text_fields: Vec<String>,
    #[serde(default)]
    semantic_embedding: Option<Vec<f64>>,
    #[serde(default)]
    user_tags: Vec<RawTag>,
    #[serde(default)]
    item_tags: Vec<RawTag>,
}

/// Output of [`ingest_readers`]: the dataset and the vocabularies its tag ids refer to.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    pub user_vocab: TagVocabulary,
    pub item_vocab: TagVocabulary,
    pub report: IngestReport,
}

pub fn ingest(interactions: &Path, items: &Path) -> Result<Ingested> {
    ingest_with_vocab(
        interactions,
        items,
        TagVocabulary::new(TagKind::UserRole),
        TagVocabulary::new(TagKind::ItemTopic),
    )
}

/// Like [`ingest`], extending existing vocabularies.
pub fn ingest_with_vocab(
    interactions: &Path,
    items: &Path,
    user_vocab: TagVocabulary,
    item_vocab: TagVocabulary,
) -> Result<Ingested> {
    let open = |p: &Path| {
        std::fs::File::open(p)
            .map(std::io::BufReader::new)
            .map_err(|e| Error::io(p, e))
    };
    ingest_readers(
        open(interactions)?,
        &interactions.display().to_string(),
        open(items)?,
        &items.display().to_string(),
        user_vocab,
        item_vocab,
    )
}

/// Parse an items JSON-lines stream and a tab-separated interactions stream.
///
/// Lines that do not parse are counted and skipped. References that parse
/// but cannot be resolved (unknown items, empty tag texts, bad scores or
/// embedding sizes) abort with the file name and line number.
pub fn ingest_readers(
    interactions: impl BufRead,
    interactions_name: &str,
    items: impl BufRead,
    items_name: &str,
    mut user_vocab: TagVocabulary,
    mut item_vocab: TagVocabulary,
) -> Result<Ingested> {
    let mut report = IngestReport::default();
    let ingest_err = |file: &str, line: usize, reason: String| Error::Ingest {
        file: file.to_string(),
        line,
        reason,
    };

    let mut records: BTreeMap<ItemId, ItemRecord> = BTreeMap::new();
    let mut dim: Option<usize> = None;
    for (n, line) in items.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::io(items_name, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawItem = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                warn!("{items_name}:{line_no}: skipping malformed item: {e}");
                report.malformed_item_lines.push(line_no);
                continue;
            }
        };
        if records.contains_key(&raw.item_id) {
            return Err(ingest_err(items_name, line_no, format!("duplicate item id {}", raw.item_id)));
        }
        if let Some(e) = &raw.semantic_embedding {
            match dim {
                None => dim = Some(e.len()),
                Some(d) if d != e.len() => {
                    return Err(ingest_err(
                        items_name,
                        line_no,
                        format!("embedding has {} dimensions, expected {d}", e.len()),
                    ))
                }
                _ => {}
            }
        }
        let mut rec = ItemRecord::new(raw.item_id);
        rec.text_fields = raw.text_fields;
        rec.semantic_embedding = raw.semantic_embedding;
        for (kind, tags, vocab) in [
            (TagKind::UserRole, &raw.user_tags, &mut user_vocab),
            (TagKind::ItemTopic, &raw.item_tags, &mut item_vocab),
        ] {
            let texts: Vec<&str> = tags.iter().map(|t| t.parts().0).collect();
            let resolved = vocab
                .update(&texts)
                .map_err(|e| ingest_err(items_name, line_no, format!("{kind} tags: {e}")))?;
            let scored: Vec<(u32, f64)> = resolved.iter().zip(tags).map(|(t, raw)| (t.id, raw.parts().1)).collect();
            rec.set_tags(kind, scored)
                .map_err(|e| ingest_err(items_name, line_no, format!("{kind} tags: {e}")))?;
        }
        records.insert(rec.item_id, rec);
    }
    report.items = records.len();

    let mut seen: BTreeSet<(UserId, ItemId, i64)> = BTreeSet::new();
    let mut events = Vec::new();
    for (n, line) in interactions.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::io(interactions_name, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some(e) = parse_interaction(trimmed) else {
            warn!("{interactions_name}:{line_no}: skipping malformed interaction");
            report.malformed_interaction_lines.push(line_no);
            continue;
        };
        if !records.contains_key(&e.item_id) {
            return Err(ingest_err(interactions_name, line_no, format!("unknown item {}", e.item_id)));
        }
        if e.weight < 0.0 || (e.label && e.weight <= 0.0) {
            return Err(ingest_err(
                interactions_name,
                line_no,
                format!("weight {} is invalid for label {}", e.weight, u8::from(e.label)),
            ));
        }
        if !seen.insert((e.user_id, e.item_id, e.timestamp)) {
            report.duplicate_events += 1;
            continue;
        }
        events.push(e);
    }
    report.events = events.len();
    if report.duplicate_events > 0 {
        warn!("{interactions_name}: dropped {} duplicate events", report.duplicate_events);
    }
    let dataset = Dataset::new(records.into_values(), events)?;
    Ok(Ingested {
        dataset,
        user_vocab,
        item_vocab,
        report,
    })
}

/// `user item timestamp [label [weight]]`, tab separated.
fn parse_interaction(line: &str) -> Option<InteractionEvent> {
    let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
    if !(3..=5).contains(&cols.len()) {
        return None;
    }
    let label = match cols.get(3) {
        None => true,
        Some(&"1") => true,
        Some(&"0") => false,
        Some(_) => return None,
    };
    let weight = match cols.get(4) {
        None => 1.0,
        Some(w) => w.parse::<f64>().ok().filter(|w| w.is_finite())?,
    };
    Some(InteractionEvent {
        user_id: cols[0].parse().ok()?,
        item_id: cols[1].parse().ok()?,
        timestamp: cols[2].parse().ok()?,
        label,
        weight,
    })
}

/// Write events in the tab-separated format read by [`ingest`].
pub fn write_interactions(ds: &Dataset, mut out: impl std::io::Write) -> std::io::Result<()> {
    for e in ds.events() {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            e.user_id,
            e.item_id,
            e.timestamp,
            u8::from(e.label),
            e.weight
        )?;
    }
    Ok(())
}

/// Write items as JSON lines with tag texts, the format read by [`ingest`].
pub fn write_items(
    ds: &Dataset,
    user_vocab: &TagVocabulary,
    item_vocab: &TagVocabulary,
    mut out: impl std::io::Write,
) -> Result<()> {
    for rec in ds.items().values() {
        let texts = |tags: &[(u32, f64)], vocab: &TagVocabulary| -> Vec<serde_json::Value> {
            tags.iter()
                .filter_map(|&(t, s)| vocab.text(t).map(|x| serde_json::json!([x, s])))
                .collect()
        };
        let v = serde_json::json!({
            "item_id": rec.item_id,
            "text_fields": rec.text_fields,
            "semantic_embedding": rec.semantic_embedding,
            "user_tags": texts(&rec.user_tags, user_vocab),
            "item_tags": texts(&rec.item_tags, item_vocab),
        });
        writeln!(out, "{}", crate::util::canonical_json(&v)?).map_err(|e| Error::io("<items>", e))?;
    }
    Ok(())
}

/// Drop users with fewer than `min_interactions` events, then items left
/// without events, until nothing changes.
pub fn n_core_filter(ds: &Dataset, min_interactions: usize) -> Dataset {
    let mut events: Vec<InteractionEvent> = ds.events().to_vec();
    let mut items = ds.items().clone();
    loop {
        let mut per_user: BTreeMap<UserId, usize> = BTreeMap::new();
        for e in &events {
            *per_user.entry(e.user_id).or_insert(0) += 1;
        }
        let before = (events.len(), items.len());
        events.retain(|e| per_user[&e.user_id] >= min_interactions);
        let used: BTreeSet<ItemId> = events.iter().map(|e| e.item_id).collect();
        items.retain(|id, _| used.contains(id));
        if (events.len(), items.len()) == before {
            break;
        }
    }
    Dataset::new(items.into_values(), events).expect("filtered data stays valid")
}

/// `train` holds events before `boundary`; `test` holds later events of users present in `train`.
pub fn temporal_split(ds: &Dataset, boundary: i64) -> Result<(Dataset, Dataset)> {
    let train: Vec<InteractionEvent> = ds.events().iter().filter(|e| e.timestamp < boundary).copied().collect();
    let train_users: BTreeSet<UserId> = train.iter().map(|e| e.user_id).collect();
    let test: Vec<InteractionEvent> = ds
        .events()
        .iter()
        .filter(|e| e.timestamp >= boundary && train_users.contains(&e.user_id))
        .copied()
        .collect();
    if train.is_empty() {
        return Err(Error::Split(format!("no events before {boundary}")));
    }
    if test.is_empty() {
        return Err(Error::Split(format!("no test events at or after {boundary} for training users")));
    }
    Ok((ds.with_events(train), ds.with_events(test)))
}

/// Timestamp below which roughly `fraction` of the events fall.
pub fn quantile_boundary(ds: &Dataset, fraction: f64) -> Option<i64> {
    let mut ts: Vec<i64> = ds.events().iter().map(|e| e.timestamp).collect();
    if ts.is_empty() {
        return None;
    }
    ts.sort_unstable();
    let idx = ((ts.len() as f64 * fraction.clamp(0.0, 1.0)) as usize).min(ts.len() - 1);
    Some(ts[idx])
}
