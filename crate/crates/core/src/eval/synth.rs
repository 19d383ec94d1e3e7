//! Latent-role synthetic data with a known role → topic logic table.

use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coverset::{update_cover_set, CoverSet, ItemTagMapping, TagItemHistory, DEFAULT_TAU, DEFAULT_WINDOW_DAYS};
use crate::error::{Error, Result};
use crate::knowledge::{
    Dataset, InteractionEvent, ItemId, ItemRecord, KnowledgeSnapshot, SnapshotBuilder, TagKind, TagVocabulary, UserId,
};
use crate::logic::{Direction, LogicGraph, DEFAULT_BRANCH};
use crate::util::seeded_rng;

const DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub users: usize,
    pub items: usize,
    pub roles: usize,
    pub topics: usize,
    /// Power-law exponent of role, topic and item popularity.
    pub skew: f64,
    pub max_roles_per_user: usize,
    pub max_roles_per_item: usize,
    pub topics_per_role: usize,
    pub min_events: usize,
    pub max_events: usize,
    /// Probability that an interaction is drawn from role-matching items.
    pub affinity: f64,
    /// Items are released evenly over this many days.
    pub days: usize,
    pub embedding_dim: usize,
    pub embedding_noise: f64,
    /// Probability of one spurious role tag per item.
    pub tag_noise: f64,
    /// Item appeal decays as `exp(-age / freshness_days)`; 0 disables decay.
    pub freshness_days: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 2000,
            items: 500,
            roles: 50,
            topics: 100,
            skew: 1.0,
            max_roles_per_user: 3,
            max_roles_per_item: 2,
            topics_per_role: 3,
            min_events: 5,
            max_events: 15,
            affinity: 0.9,
            days: 10,
            embedding_dim: 64,
            embedding_noise: 0.3,
            tag_noise: 0.1,
            freshness_days: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.users == 0 || self.items == 0 {
            return fail("synthetic data needs at least one user and one item");
        }
        if self.roles == 0 || self.topics == 0 {
            return fail("synthetic data needs at least one role and one topic");
        }
        if self.max_roles_per_user == 0 || self.max_roles_per_item == 0 || self.topics_per_role == 0 {
            return fail("per-entity tag counts must be positive");
        }
        if self.min_events < 2 || self.min_events > self.max_events {
            return fail("need 2 <= min_events <= max_events");
        }
        if !(0.0..=1.0).contains(&self.affinity) || !(0.0..=1.0).contains(&self.tag_noise) {
            return fail("affinity and tag_noise must lie in [0, 1]");
        }
        if self.days == 0 || self.embedding_dim == 0 || !(self.skew >= 0.0) || !(self.freshness_days >= 0.0) {
            return fail("days and embedding_dim must be positive, skew and freshness non-negative");
        }
        Ok(())
    }
}

/// The generator's hidden state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub user_roles: BTreeMap<UserId, Vec<u32>>,
    /// Target roles per item, indexed by item id.
    pub item_roles: Vec<Vec<u32>>,
    /// Role → topic logic table.
    pub role_topics: Vec<Vec<u32>>,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub snapshot: KnowledgeSnapshot,
    pub truth: SynthTruth,
}

fn power_law(n: usize, skew: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((0..n).map(|r| 1.0 / ((r + 1) as f64).powf(skew))).expect("positive weights")
}

fn distinct(dist: &WeightedIndex<f64>, n: usize, limit: usize, rng: &mut impl Rng) -> Vec<u32> {
    let mut out = BTreeSet::new();
    let want = n.min(limit);
    while out.len() < want {
        out.insert(dist.sample(rng) as u32);
    }
    out.into_iter().collect()
}

/// Relabel ids so that frequency is non-increasing in id (ties keep the old order).
fn relabel_by_frequency(lists: &mut [Vec<u32>], n: usize) -> Vec<u32> {
    let mut counts = vec![0usize; n];
    for l in lists.iter() {
        for &t in l {
            counts[t as usize] += 1;
        }
    }
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_by_key(|&t| std::cmp::Reverse(counts[t as usize]));
    let mut map = vec![0u32; n];
    for (new, &old) in order.iter().enumerate() {
        map[old as usize] = new as u32;
    }
    for l in lists.iter_mut() {
        for t in l.iter_mut() {
            *t = map[*t as usize];
        }
        l.sort_unstable();
    }
    map
}

fn gaussian_vec(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    // Box-Muller pairs.
    let mut v = Vec::with_capacity(dim);
    while v.len() < dim {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        v.push(r * (std::f64::consts::TAU * u2).cos());
        if v.len() < dim {
            v.push(r * (std::f64::consts::TAU * u2).sin());
        }
    }
    v
}

pub fn synth_generate(cfg: &SynthConfig, seed: u64) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut rng = seeded_rng(seed);
    let role_dist = power_law(cfg.roles, cfg.skew);
    let topic_dist = power_law(cfg.topics, cfg.skew);

    // Item target roles, relabelled so role frequency follows id order.
    let mut item_roles: Vec<Vec<u32>> = (0..cfg.items)
        .map(|_| {
            let n = rng.gen_range(1..=cfg.max_roles_per_item);
            distinct(&role_dist, n, cfg.roles, &mut rng)
        })
        .collect();
    relabel_by_frequency(&mut item_roles, cfg.roles);

    let mut role_topics: Vec<Vec<u32>> = (0..cfg.roles)
        .map(|_| distinct(&topic_dist, cfg.topics_per_role, cfg.topics, &mut rng))
        .collect();
    let mut item_topics: Vec<Vec<u32>> = item_roles
        .iter()
        .map(|roles| {
            let mut set = BTreeSet::new();
            for &r in roles {
                let linked = &role_topics[r as usize];
                let take = rng.gen_range(1..=linked.len().min(2));
                set.extend(linked.choose_multiple(&mut rng, take).copied());
            }
            set.insert(topic_dist.sample(&mut rng) as u32);
            set.into_iter().collect()
        })
        .collect();
    let topic_map = relabel_by_frequency(&mut item_topics, cfg.topics);
    for l in &mut role_topics {
        for t in l.iter_mut() {
            *t = topic_map[*t as usize];
        }
        l.sort_unstable();
    }

    // Semantic embeddings from latent tag vectors.
    let scale = 1.0 / (cfg.embedding_dim as f64).sqrt();
    let role_vecs: Vec<Vec<f64>> = (0..cfg.roles).map(|_| gaussian_vec(cfg.embedding_dim, &mut rng)).collect();
    let topic_vecs: Vec<Vec<f64>> = (0..cfg.topics).map(|_| gaussian_vec(cfg.embedding_dim, &mut rng)).collect();

    let mut user_vocab = TagVocabulary::new(TagKind::UserRole);
    user_vocab.update(&(0..cfg.roles).map(|r| format!("role {r:03}")).collect::<Vec<_>>())?;
    let mut item_vocab = TagVocabulary::new(TagKind::ItemTopic);
    item_vocab.update(&(0..cfg.topics).map(|t| format!("topic {t:03}")).collect::<Vec<_>>())?;

    let mut records = Vec::with_capacity(cfg.items);
    for i in 0..cfg.items {
        let mut rec = ItemRecord::new(i as ItemId);
        rec.text_fields = vec![format!("item {i}")];
        let mut e = gaussian_vec(cfg.embedding_dim, &mut rng);
        e.iter_mut().for_each(|x| *x *= cfg.embedding_noise);
        for &r in &item_roles[i] {
            e.iter_mut().zip(&role_vecs[r as usize]).for_each(|(a, b)| *a += b);
        }
        for &t in &item_topics[i] {
            e.iter_mut().zip(&topic_vecs[t as usize]).for_each(|(a, b)| *a += 0.5 * b);
        }
        e.iter_mut().for_each(|x| *x *= scale);
        rec.semantic_embedding = Some(e);

        let mut roles: Vec<(u32, f64)> = item_roles[i]
            .iter()
            .enumerate()
            .map(|(j, &r)| (r, 1.0 - 0.1 * j as f64))
            .collect();
        if rng.gen_bool(cfg.tag_noise) {
            let r = role_dist.sample(&mut rng) as u32;
            if !item_roles[i].contains(&r) {
                roles.push((r, 0.3));
            }
        }
        rec.set_tags(TagKind::UserRole, roles)?;
        let topics: Vec<(u32, f64)> = item_topics[i]
            .iter()
            .enumerate()
            .map(|(j, &t)| (t, 1.0 - 0.1 * j as f64))
            .collect();
        rec.set_tags(TagKind::ItemTopic, topics)?;
        records.push(rec);
    }

    // Items are released in id order; popularity is independent of tags.
    let release: Vec<i64> = (0..cfg.items)
        .map(|i| (i * cfg.days / cfg.items) as i64 * DAY)
        .collect();
    let mut pop_rank: Vec<usize> = (0..cfg.items).collect();
    pop_rank.shuffle(&mut rng);
    let item_pop: Vec<f64> = pop_rank.iter().map(|&r| 1.0 / ((r + 1) as f64).powf(0.5 * cfg.skew)).collect();
    let mut role_items: Vec<Vec<ItemId>> = vec![Vec::new(); cfg.roles];
    for (i, roles) in item_roles.iter().enumerate() {
        for &r in roles {
            role_items[r as usize].push(i as ItemId);
        }
    }

    let horizon = cfg.days as i64 * DAY;
    let mut events = Vec::new();
    let mut user_roles = BTreeMap::new();
    for u in 0..cfg.users as UserId {
        let n_roles = rng.gen_range(1..=cfg.max_roles_per_user);
        let roles = distinct(&role_dist, n_roles, cfg.roles, &mut rng);
        let matching: BTreeSet<ItemId> = roles.iter().flat_map(|&r| role_items[r as usize].iter().copied()).collect();
        let matching: Vec<ItemId> = matching.into_iter().collect();
        let n_events = rng.gen_range(cfg.min_events..=cfg.max_events);
        let mut times: Vec<i64> = (0..n_events).map(|_| rng.gen_range(0..horizon)).collect();
        times.sort_unstable();
        let mut seen = BTreeSet::new();
        for ts in times {
            let released = release.partition_point(|&r| r <= ts);
            let pool: Vec<ItemId> = if rng.gen_bool(cfg.affinity) {
                matching.iter().copied().filter(|&i| (i as usize) < released && !seen.contains(&i)).collect()
            } else {
                Vec::new()
            };
            let pool = if pool.is_empty() {
                (0..released as ItemId).filter(|i| !seen.contains(i)).collect()
            } else {
                pool
            };
            if pool.is_empty() {
                continue;
            }
            let appeal = |i: ItemId| {
                let age = (ts - release[i as usize]) as f64 / DAY as f64;
                let decay = if cfg.freshness_days > 0.0 { (-age / cfg.freshness_days).exp() } else { 1.0 };
                item_pop[i as usize] * decay.max(1e-12)
            };
            let dist = WeightedIndex::new(pool.iter().map(|&i| appeal(i))).expect("positive weights");
            let item = pool[dist.sample(&mut rng)];
            seen.insert(item);
            events.push(InteractionEvent::positive(u, item, ts));
        }
        user_roles.insert(u, roles);
    }
    let dataset = Dataset::new(records, events)?;

    let snapshot = knowledge_from_truth(&dataset, user_vocab, item_vocab, &role_topics)?;
    Ok(SynthOutput {
        dataset,
        snapshot,
        truth: SynthTruth {
            user_roles,
            item_roles,
            role_topics,
        },
    })
}

/// Cover sets from one day of item tags, and both logic graphs from the role → topic table.
fn knowledge_from_truth(
    ds: &Dataset,
    user_vocab: TagVocabulary,
    item_vocab: TagVocabulary,
    role_topics: &[Vec<u32>],
) -> Result<KnowledgeSnapshot> {
    let cover = |kind: TagKind| -> Result<(CoverSet, TagItemHistory)> {
        let m = ItemTagMapping::new(ds.item_tag_mapping(kind))?;
        let (c, h, _) = update_cover_set(
            &CoverSet::new(DEFAULT_TAU),
            &m,
            &TagItemHistory::new(DEFAULT_WINDOW_DAYS),
            0,
        )?;
        Ok((c, h))
    };
    let (cover_user, history_user) = cover(TagKind::UserRole)?;
    let (cover_item, history_item) = cover(TagKind::ItemTopic)?;
    let users = cover_user.selected().to_vec();
    let items = cover_item.selected().to_vec();
    let (us, is): (BTreeSet<u32>, BTreeSet<u32>) = (users.iter().copied().collect(), items.iter().copied().collect());

    let mut u2i = Vec::new();
    let mut i2u = Vec::new();
    for (r, topics) in role_topics.iter().enumerate() {
        let r = r as u32;
        if !us.contains(&r) {
            continue;
        }
        for (j, &t) in topics.iter().enumerate() {
            if is.contains(&t) {
                let w = 1.0 / (j + 1) as f64;
                u2i.push((r, t, w));
                i2u.push((t, r, w));
            }
        }
    }
    let g_u2i = LogicGraph::from_edges(Direction::U2I, &users, &items, DEFAULT_BRANCH, u2i)?;
    let g_i2u = LogicGraph::from_edges(Direction::I2U, &items, &users, DEFAULT_BRANCH, i2u)?;
    SnapshotBuilder {
        day: 0,
        user_vocab,
        item_vocab,
        cover_set_user: cover_user,
        cover_set_item: cover_item,
        history_user,
        history_item,
        g_u2i: Some(g_u2i),
        g_i2u: Some(g_i2u),
        ..Default::default()
    }
    .build()
}

/// Point-biserial correlation between user/item role overlap and the interaction indicator over all pairs.
pub fn overlap_point_biserial(out: &SynthOutput) -> f64 {
    let n_items = out.truth.item_roles.len();
    let mut interacted: BTreeSet<(UserId, ItemId)> = BTreeSet::new();
    for e in out.dataset.events() {
        interacted.insert((e.user_id, e.item_id));
    }
    let (mut n, mut sx, mut sxx, mut sy, mut sxy) = (0f64, 0f64, 0f64, 0f64, 0f64);
    for (&u, roles) in &out.truth.user_roles {
        for i in 0..n_items {
            let x = out.truth.item_roles[i].iter().filter(|r| roles.contains(r)).count() as f64;
            let y = if interacted.contains(&(u, i as ItemId)) { 1.0 } else { 0.0 };
            n += 1.0;
            sx += x;
            sxx += x * x;
            sy += y;
            sxy += x * y;
        }
    }
    let cov = sxy / n - (sx / n) * (sy / n);
    let vx = sxx / n - (sx / n).powi(2);
    let vy = sy / n - (sy / n).powi(2);
    if vx <= 0.0 || vy <= 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}
