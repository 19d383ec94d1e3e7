//! Daily cover-set maintenance.
//!
//! Each update keeps the previously selected tags that still cover something
//! today, greedily adds the tag covering the most uncovered items until the
//! coverage target `tau` is met, records today's recall counts in a D-day ring,
//! and finally drops selected tags that nothing recalled within the window.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge::ItemId;

pub const DEFAULT_TAU: f64 = 0.99;
pub const DEFAULT_WINDOW_DAYS: usize = 30;

/// The day's inferred item → tag assignments.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemTagMapping(BTreeMap<ItemId, BTreeSet<u32>>);

impl ItemTagMapping {
    pub fn new(map: BTreeMap<ItemId, BTreeSet<u32>>) -> Result<Self> {
        let m = ItemTagMapping(map);
        m.validate()?;
        Ok(m)
    }

    /// Build from any iterator without validation; `update_cover_set` checks it.
    pub fn from_unchecked(iter: impl IntoIterator<Item = (ItemId, BTreeSet<u32>)>) -> Self {
        ItemTagMapping(iter.into_iter().collect())
    }

    fn validate(&self) -> Result<()> {
        match self.0.iter().position(|(_, tags)| tags.is_empty()) {
            Some(index) => Err(Error::RejectedInput {
                index,
                reason: format!(
                    "item {} has an empty tag set",
                    self.0.keys().nth(index).copied().unwrap_or_default()
                ),
            }),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ItemId, &BTreeSet<u32>)> {
        self.0.iter()
    }

    pub fn as_map(&self) -> &BTreeMap<ItemId, BTreeSet<u32>> {
        &self.0
    }

    /// Tag → number of items carrying it.
    pub fn tag_counts(&self) -> BTreeMap<u32, u32> {
        let mut counts = BTreeMap::new();
        for tags in self.0.values() {
            for &t in tags {
                *counts.entry(t).or_insert(0) += 1;
            }
        }
        counts
    }
}

/// Fraction of items with at least one tag in `selected`. Vacuously 1.0 when empty.
pub fn coverage_rate(m: &ItemTagMapping, selected: &BTreeSet<u32>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let covered = m
        .iter()
        .filter(|(_, tags)| !tags.is_disjoint(selected))
        .count();
    covered as f64 / m.len() as f64
}

/// Ring of per-day tag → recall-count buckets, oldest first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagItemHistory {
    window: usize,
    buckets: VecDeque<BTreeMap<u32, u32>>,
}

impl TagItemHistory {
    pub fn new(window: usize) -> Self {
        assert!(window >= 1, "history window must be at least one day");
        TagItemHistory {
            window,
            buckets: std::iter::repeat_with(BTreeMap::new).take(window).collect(),
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn buckets(&self) -> impl Iterator<Item = &BTreeMap<u32, u32>> {
        self.buckets.iter()
    }

    fn push_day(&mut self, bucket: BTreeMap<u32, u32>) {
        self.buckets.push_back(bucket);
        while self.buckets.len() > self.window {
            self.buckets.pop_front();
        }
    }

    pub fn total_recalls(&self, tag: u32) -> u64 {
        self.buckets
            .iter()
            .map(|b| u64::from(b.get(&tag).copied().unwrap_or(0)))
            .sum()
    }
}

impl Default for TagItemHistory {
    fn default() -> Self {
        TagItemHistory::new(DEFAULT_WINDOW_DAYS)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    pub day: i64,
    pub added: Vec<u32>,
    pub removed: Vec<u32>,
    pub size: usize,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverSet {
    selected: Vec<u32>,
    tau: f64,
    last_recall_day: BTreeMap<u32, i64>,
    last_day: Option<i64>,
    last_report: Option<UpdateReport>,
}

impl CoverSet {
    pub fn new(tau: f64) -> Self {
        assert!((0.0..=1.0).contains(&tau), "tau must lie in [0, 1]");
        CoverSet {
            selected: Vec::new(),
            tau,
            last_recall_day: BTreeMap::new(),
            last_day: None,
            last_report: None,
        }
    }

    /// A cover set holding exactly `tags`, e.g. for hand-built fixtures.
    pub fn with_tags(tau: f64, tags: impl IntoIterator<Item = u32>) -> Self {
        let mut c = CoverSet::new(tau);
        for t in tags {
            if !c.selected.contains(&t) {
                c.selected.push(t);
            }
        }
        c
    }

    /// Selected tags in greedy insertion order.
    pub fn selected(&self) -> &[u32] {
        &self.selected
    }

    pub fn selected_set(&self) -> BTreeSet<u32> {
        self.selected.iter().copied().collect()
    }

    pub fn contains(&self, tag: u32) -> bool {
        self.selected.contains(&tag)
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn last_recall_day(&self) -> &BTreeMap<u32, i64> {
        &self.last_recall_day
    }

    pub fn last_day(&self) -> Option<i64> {
        self.last_day
    }

    pub fn last_report(&self) -> Option<&UpdateReport> {
        self.last_report.as_ref()
    }
}

impl Default for CoverSet {
    fn default() -> Self {
        CoverSet::new(DEFAULT_TAU)
    }
}

/// Greedily extend `start` until `tau` coverage or no tag adds anything.
///
/// Returns the added tags in selection order.
fn greedy_extend(m: &ItemTagMapping, start: &BTreeSet<u32>, tau: f64) -> Vec<u32> {
    let items: Vec<&BTreeSet<u32>> = m.as_map().values().collect();
    let n = items.len();
    let mut covered: Vec<bool> = items.iter().map(|tags| !tags.is_disjoint(start)).collect();
    let mut n_covered = covered.iter().filter(|&&c| c).count();

    let mut postings: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (idx, tags) in items.iter().enumerate() {
        for &t in tags.iter() {
            if !start.contains(&t) {
                postings.entry(t).or_default().push(idx);
            }
        }
    }

    let mut added = Vec::new();
    while n > 0 && (n_covered as f64) / (n as f64) < tau {
        // BTreeMap iteration is ascending, so strict `>` keeps the smallest id on ties.
        let mut best: Option<(u32, usize)> = None;
        for (&t, posting) in &postings {
            let gain = posting.iter().filter(|&&i| !covered[i]).count();
            if gain > 0 && best.map_or(true, |(_, g)| gain > g) {
                best = Some((t, gain));
            }
        }
        let Some((tag, _)) = best else { break };
        for &i in &postings[&tag] {
            if !covered[i] {
                covered[i] = true;
                n_covered += 1;
            }
        }
        postings.remove(&tag);
        added.push(tag);
    }
    added
}

/// One daily update. Inputs are left untouched; the new state is returned.
pub fn update_cover_set(
    cover: &CoverSet,
    m: &ItemTagMapping,
    history: &TagItemHistory,
    day: i64,
) -> Result<(CoverSet, TagItemHistory, UpdateReport)> {
    m.validate()?;
    if let Some(last) = cover.last_day {
        if day <= last {
            return Err(Error::RejectedInput {
                index: 0,
                reason: format!("day {day} does not advance past the last update day {last}"),
            });
        }
    }

    let counts = m.tag_counts();
    let working: BTreeSet<u32> = cover
        .selected
        .iter()
        .copied()
        .filter(|t| counts.contains_key(t))
        .collect();
    let added = greedy_extend(m, &working, cover.tau);

    let mut selected = cover.selected.clone();
    selected.extend(added.iter().copied());

    let today: BTreeMap<u32, u32> = selected
        .iter()
        .filter_map(|t| counts.get(t).map(|&c| (*t, c)))
        .collect();
    let mut new_history = history.clone();
    new_history.push_day(today.clone());

    let mut removed = Vec::new();
    selected.retain(|&t| {
        let keep = new_history.total_recalls(t) > 0;
        if !keep {
            removed.push(t);
        }
        keep
    });

    let mut last_recall_day = cover.last_recall_day.clone();
    for &t in today.keys() {
        last_recall_day.insert(t, day);
    }
    for t in &removed {
        last_recall_day.remove(t);
    }

    let selected_set: BTreeSet<u32> = selected.iter().copied().collect();
    let report = UpdateReport {
        day,
        added,
        removed,
        size: selected.len(),
        coverage: coverage_rate(m, &selected_set),
    };
    let next = CoverSet {
        selected,
        tau: cover.tau,
        last_recall_day,
        last_day: Some(day),
        last_report: Some(report.clone()),
    };
    Ok((next, new_history, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverSetStats {
    pub size: usize,
    pub daily_added: usize,
    pub daily_removed: usize,
    pub coverage: f64,
    /// Tags with at least one recall inside the window.
    pub tags_in_window: usize,
}

pub fn coverset_stats(cover: &CoverSet, history: &TagItemHistory) -> CoverSetStats {
    let in_window: BTreeSet<u32> = history.buckets().flat_map(|b| b.keys().copied()).collect();
    let report = cover.last_report();
    CoverSetStats {
        size: cover.len(),
        daily_added: report.map_or(0, |r| r.added.len()),
        daily_removed: report.map_or(0, |r| r.removed.len()),
        coverage: report.map_or(1.0, |r| r.coverage),
        tags_in_window: in_window.len(),
    }
}
