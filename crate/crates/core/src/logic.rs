//! Directed bipartite logic graphs between the user-role and item-topic cover
//! sets, and the two-hop tag exploration that runs over them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::score_desc_id_asc;

pub const DEFAULT_BRANCH: usize = 20;
pub const DIAGNOSTIC_BRANCH: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// User role → item topic.
    U2I,
    /// Item topic → user role.
    I2U,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogicGraph {
    direction: Direction,
    branch_b: usize,
    /// Source cover set, ascending.
    sources: Vec<u32>,
    /// Target cover set, ascending.
    targets: Vec<u32>,
    /// Per source: (target, weight) sorted by weight desc, id asc.
    edges: BTreeMap<u32, Vec<(u32, f64)>>,
}

impl LogicGraph {
    pub fn empty(direction: Direction, sources: &[u32], targets: &[u32], branch_b: usize) -> Self {
        LogicGraph {
            direction,
            branch_b,
            sources: sorted_unique(sources),
            targets: sorted_unique(targets),
            edges: BTreeMap::new(),
        }
    }

    /// Hand-built graph. Each source keeps its `branch_b` heaviest edges.
    pub fn from_edges(
        direction: Direction,
        sources: &[u32],
        targets: &[u32],
        branch_b: usize,
        edges: impl IntoIterator<Item = (u32, u32, f64)>,
    ) -> Result<Self> {
        let mut g = LogicGraph::empty(direction, sources, targets, branch_b);
        let mut lists: BTreeMap<u32, Vec<(u32, f64)>> = BTreeMap::new();
        for (s, t, w) in edges {
            if !w.is_finite() || w <= 0.0 || w > 1.0 {
                return Err(Error::InvalidScore {
                    source_tag: s,
                    target_tag: t,
                    value: w,
                });
            }
            if g.sources.binary_search(&s).is_err() {
                return Err(Error::UnknownTag(s));
            }
            if g.targets.binary_search(&t).is_err() {
                return Err(Error::UnknownTag(t));
            }
            let list = lists.entry(s).or_default();
            match list.iter_mut().find(|(x, _)| *x == t) {
                Some(e) => e.1 = w,
                None => list.push((t, w)),
            }
        }
        for (s, mut list) in lists {
            list.sort_by(score_desc_id_asc);
            list.truncate(branch_b);
            if !list.is_empty() {
                g.edges.insert(s, list);
            }
        }
        Ok(g)
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn branch_b(&self) -> usize {
        self.branch_b
    }

    pub fn sources(&self) -> &[u32] {
        &self.sources
    }

    pub fn targets(&self) -> &[u32] {
        &self.targets
    }

    pub fn has_source(&self, tag: u32) -> bool {
        self.sources.binary_search(&tag).is_ok()
    }

    pub fn out_edges(&self, source: u32) -> &[(u32, f64)] {
        self.edges.get(&source).map_or(&[], Vec::as_slice)
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.edges
            .iter()
            .flat_map(|(&s, list)| list.iter().map(move |&(t, w)| (s, t, w)))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.values().map(Vec::len).sum()
    }

    /// Same edges, but every endpoint must lie in the given cover sets.
    pub fn endpoints_within(&self, sources: &BTreeSet<u32>, targets: &BTreeSet<u32>) -> bool {
        self.edges()
            .all(|(s, t, _)| sources.contains(&s) && targets.contains(&t))
    }
}

fn sorted_unique(xs: &[u32]) -> Vec<u32> {
    let set: BTreeSet<u32> = xs.iter().copied().collect();
    set.into_iter().collect()
}

/// All positive-score targets for `source`, best first.
pub fn ranked_targets(
    source: u32,
    targets: &[u32],
    score: &impl Fn(u32, u32) -> f64,
) -> Result<Vec<(u32, f64)>> {
    let mut ranked = Vec::with_capacity(targets.len());
    for &t in targets {
        let s = score(source, t);
        if !s.is_finite() || !(0.0..=1.0).contains(&s) {
            return Err(Error::InvalidScore {
                source_tag: source,
                target_tag: t,
                value: s,
            });
        }
        if s > 0.0 {
            ranked.push((t, s));
        }
    }
    ranked.sort_by(score_desc_id_asc);
    Ok(ranked)
}

/// Keep the top-`branch_b` scored targets of every source as edges.
pub fn build_graph(
    direction: Direction,
    sources: &[u32],
    targets: &[u32],
    branch_b: usize,
    score: impl Fn(u32, u32) -> f64,
) -> Result<LogicGraph> {
    let mut g = LogicGraph::empty(direction, sources, targets, branch_b);
    for &s in &g.sources {
        let mut ranked = ranked_targets(s, &g.targets, &score)?;
        ranked.truncate(branch_b);
        if !ranked.is_empty() {
            g.edges.insert(s, ranked);
        }
    }
    Ok(g)
}

/// Non-negative tag weights. Zero weights are never stored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightedTagSet {
    weights: BTreeMap<u32, f64>,
    normalized: bool,
}

impl WeightedTagSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let mut s = WeightedTagSet::new();
        for (t, w) in pairs {
            s.add(t, w);
        }
        s
    }

    /// Every tag at weight 1.
    pub fn uniform(tags: impl IntoIterator<Item = u32>) -> Self {
        Self::from_pairs(tags.into_iter().map(|t| (t, 1.0)))
    }

    pub fn add(&mut self, tag: u32, weight: f64) {
        debug_assert!(weight >= 0.0 && weight.is_finite());
        if weight > 0.0 {
            *self.weights.entry(tag).or_insert(0.0) += weight;
            self.normalized = false;
        }
    }

    pub fn get(&self, tag: u32) -> f64 {
        self.weights.get(&tag).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, tag: u32) -> bool {
        self.weights.contains_key(&tag)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }

    pub fn support(&self) -> BTreeSet<u32> {
        self.weights.keys().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.weights.iter().map(|(&t, &w)| (t, w))
    }

    /// Entries by weight desc, id asc.
    pub fn ranked(&self) -> Vec<(u32, f64)> {
        let mut v: Vec<_> = self.iter().collect();
        v.sort_by(score_desc_id_asc);
        v
    }

    pub fn normalize(mut self) -> Self {
        let total = self.total();
        if total > 0.0 {
            for w in self.weights.values_mut() {
                *w /= total;
            }
        }
        self.normalized = !self.weights.is_empty();
        self
    }

    pub fn truncate(self, k: usize) -> Self {
        if self.weights.len() <= k {
            return self;
        }
        let mut ranked = self.ranked();
        ranked.truncate(k);
        WeightedTagSet {
            weights: ranked.into_iter().collect(),
            normalized: false,
        }
    }

    fn retain_above(mut self, delta: f64) -> Self {
        self.weights.retain(|_, w| *w > delta);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplorationMode {
    Hard,
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationConfig {
    pub mode: ExplorationMode,
    pub delta: f64,
    pub top_k: usize,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        ExplorationConfig {
            mode: ExplorationMode::Soft,
            delta: 0.0,
            top_k: 10,
        }
    }
}

impl ExplorationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::Config("exploration top_k must be at least 1".into()));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::Config("exploration delta must be non-negative".into()));
        }
        Ok(())
    }
}

/// One hop over `graph` without truncation or normalization.
///
/// Hard mode treats every edge as weight 1, so unit source weights yield path
/// counts; Soft mode sums `edge weight × source weight` and keeps targets
/// above `delta`.
pub fn expand(
    from: &WeightedTagSet,
    graph: &LogicGraph,
    mode: ExplorationMode,
    delta: f64,
) -> WeightedTagSet {
    let mut out = WeightedTagSet::new();
    for (s, ws) in from.iter() {
        for &(t, we) in graph.out_edges(s) {
            match mode {
                ExplorationMode::Hard => out.add(t, ws),
                ExplorationMode::Soft => out.add(t, we * ws),
            }
        }
    }
    match mode {
        ExplorationMode::Hard => out,
        ExplorationMode::Soft => out.retain_above(delta),
    }
}

/// Two-hop exploration `t0 → c1 → t1`.
///
/// `first` maps the kind of `t0` to the opposite kind and `second` maps back.
/// `c1` is returned as aggregated; `t1` is truncated to `top_k` and normalized.
pub fn explore(
    t0: &WeightedTagSet,
    first: &LogicGraph,
    second: &LogicGraph,
    cfg: &ExplorationConfig,
) -> Result<(WeightedTagSet, WeightedTagSet)> {
    cfg.validate()?;
    if let Some(t) = t0.iter().map(|(t, _)| t).find(|&t| !first.has_source(t)) {
        return Err(Error::UnknownTag(t));
    }
    let c1 = match cfg.mode {
        ExplorationMode::Hard => expand(&WeightedTagSet::uniform(t0.support()), first, cfg.mode, cfg.delta),
        ExplorationMode::Soft => expand(t0, first, cfg.mode, cfg.delta),
    };
    let t1 = expand(&c1, second, cfg.mode, cfg.delta)
        .truncate(cfg.top_k)
        .normalize();
    Ok((c1, t1))
}

/// Union with summed weights, renormalized to total one.
pub fn merge_tag_sets(a: &WeightedTagSet, b: &WeightedTagSet) -> WeightedTagSet {
    let mut out = a.clone();
    for (t, w) in b.iter() {
        out.add(t, w);
    }
    out.normalize()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeStats {
    /// degree → number of source nodes with that out-degree (degree ≥ 1).
    pub out_degree: BTreeMap<usize, usize>,
    /// degree → number of target nodes with that in-degree (degree ≥ 1).
    pub in_degree: BTreeMap<usize, usize>,
}

pub fn graph_degree_stats(g: &LogicGraph) -> DegreeStats {
    let mut stats = DegreeStats::default();
    let mut in_counts: BTreeMap<u32, usize> = BTreeMap::new();
    for (_, list) in g.edges.iter() {
        if !list.is_empty() {
            *stats.out_degree.entry(list.len()).or_insert(0) += 1;
        }
        for &(t, _) in list {
            *in_counts.entry(t).or_insert(0) += 1;
        }
    }
    for (_, d) in in_counts {
        *stats.in_degree.entry(d).or_insert(0) += 1;
    }
    stats
}
