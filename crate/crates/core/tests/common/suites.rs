//! Randomized invariant suites, one registry entry per property.
//!
//! Every suite runs at least [`CASES`] generated cases on a deterministic RNG.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::Rng;
use tagcf::coverset::{update_cover_set, CoverSet, TagItemHistory};
use tagcf::eval::{
    coverage_at, gini_at, ingest_readers, mrr_at, n_core_filter, ndcg_at, run_experiment, temporal_split,
    write_interactions, write_items, ArmConfig, ExperimentConfig,
};
use tagcf::inference::{InferenceConfig, Mode, Scorer};
use tagcf::knowledge::{canonicalize, Dataset, InteractionEvent, ItemRecord, TagKind, TagVocabulary};
use tagcf::logic::{
    build_graph, explore, graph_degree_stats, merge_tag_sets, Direction, ExplorationConfig, ExplorationMode,
    LogicGraph, WeightedTagSet,
};
use tagcf::providers::{
    predict_tags, train_distilled_logic_model, train_distilled_tag_model, DistillConfig, DistilledTagModel,
    HashingEmbedder, LogicReasoner, LogicReasoningRequest, MockProvider, TagExtractionRequest, TagExtractor,
    TagSemanticEmbedder,
};
use tagcf::recommender::{
    encode_item_tags, loss_and_grad, raw_score, select_tag_set, train, user_histories, LossMix, ModelFile,
    ModelParameters, SeqEncoderKind, TagContext, Tensor,
};
use tagcf::util::sigmoid;

use super::fixtures::{self, random_edges, random_items, random_snapshot, random_vec, rng, shuffled, small_world};
use super::oracles::{self, CoverSim};
use super::{gradient_fixture_seeded, max_gradient_error};

pub const CASES: u32 = 100;

pub struct Suite {
    pub section: &'static str,
    pub name: &'static str,
    pub run: fn(u32) -> Result<(), String>,
}

fn prop<S>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S: Strategy,
    S::Value: Debug,
{
    let cfg = Config {
        cases,
        failure_persistence: None,
        max_shrink_iters: 256,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(cfg, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn seeds(cases: u32, test: impl Fn(u64) -> Result<(), TestCaseError>) -> Result<(), String> {
    prop(cases, any::<u64>(), test)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn maps_close(a: &BTreeMap<u32, f64>, b: &BTreeMap<u32, f64>, tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|((ta, wa), (tb, wb))| ta == tb && close(*wa, *wb, tol))
}

fn as_map(s: &WeightedTagSet) -> BTreeMap<u32, f64> {
    s.iter().collect()
}

fn fail(msg: impl Into<String>) -> TestCaseError {
    TestCaseError::fail(msg.into())
}

pub fn all() -> Vec<Suite> {
    macro_rules! suite {
        ($section:literal, $f:ident) => {
            Suite {
                section: $section,
                name: stringify!($f),
                run: $f,
            }
        };
    }
    vec![
        suite!("knowledge", vocab_ids_are_dense),
        suite!("knowledge", vocab_update_is_idempotent_and_order_insensitive),
        suite!("knowledge", snapshot_round_trip_is_identity),
        suite!("knowledge", snapshot_rejects_graph_endpoints_outside_cover),
        suite!("knowledge", item_tag_lists_sorted_and_bounded),
        suite!("knowledge", dataset_histories_ordered_and_weights_valid),
        suite!("coverset", cover_update_matches_greedy_oracle),
        suite!("coverset", greedy_additions_strictly_increase_coverage),
        suite!("coverset", cover_update_is_deterministic),
        suite!("coverset", removal_only_after_full_stale_window),
        suite!("coverset", history_keeps_exactly_window_buckets),
        suite!("logic", explore_matches_path_enumeration),
        suite!("logic", hard_explore_is_monotone_in_support),
        suite!("logic", soft_explore_is_scale_covariant),
        suite!("logic", exploration_respects_truncation_bound),
        suite!("logic", sparse_explore_equals_dense_product),
        suite!("logic", build_graph_keeps_top_b_targets),
        suite!("logic", weighted_sets_normalize_and_merge),
        suite!("logic", degree_histograms_satisfy_handshake),
        suite!("providers", mock_provider_is_pure),
        suite!("providers", distilled_tag_gradient_matches_differences),
        suite!("providers", distilled_logic_gradient_matches_differences),
        suite!("providers", distillation_loss_never_increases),
        suite!("providers", predict_tags_is_a_total_order),
        suite!("providers", embedder_is_deterministic),
        suite!("recommender", model_gradients_match_differences),
        suite!("recommender", scores_bounded_and_losses_finite),
        suite!("recommender", tag_set_selection_ignores_monotone_transforms),
        suite!("recommender", item_tag_encoding_in_convex_hull),
        suite!("recommender", training_is_deterministic),
        suite!("inference", score_is_affine_in_betas),
        suite!("inference", zero_betas_rank_by_raw_score),
        suite!("inference", explored_term_skips_original_tags),
        suite!("inference", ranking_is_a_total_order),
        suite!("inference", util_mode_ignores_logic_graphs),
        suite!("inference", mode_constraints_are_enforced),
        suite!("eval", metrics_match_oracles),
        suite!("eval", metrics_lie_in_unit_interval),
        suite!("eval", n_core_filter_is_a_fixpoint),
        suite!("eval", temporal_split_separates_time),
        suite!("eval", experiment_csv_is_reproducible),
        suite!("eval", data_files_round_trip),
    ]
}

/// Run one suite by name with the default case count, panicking on failure.
pub fn check(name: &str) {
    let suite = all().into_iter().find(|s| s.name == name).unwrap_or_else(|| panic!("no suite {name}"));
    if let Err(e) = (suite.run)(CASES) {
        panic!("{}::{}: {e}", suite.section, suite.name);
    }
}

// ---------------------------------------------------------------- knowledge

fn vocab_ids_are_dense(cases: u32) -> Result<(), String> {
    prop(cases, prop::collection::vec("[ a-cA-C]{0,4}", 0..30), |texts| {
        let valid: Vec<&String> = texts.iter().filter(|t| canonicalize(t).is_some()).collect();
        let mut v = TagVocabulary::new(TagKind::ItemTopic);
        v.update(&valid).map_err(|e| fail(e.to_string()))?;
        let distinct: BTreeSet<String> = valid.iter().filter_map(|t| canonicalize(t)).collect();
        prop_assert_eq!(v.len(), distinct.len());
        for (i, tag) in v.tags().iter().enumerate() {
            prop_assert_eq!(tag.id, i as u32);
            prop_assert!(!tag.text.is_empty());
            prop_assert_eq!(v.lookup(&tag.text).map(|t| t.id), Some(tag.id));
        }
        if valid.len() < texts.len() {
            let before = v.clone();
            prop_assert!(v.update(&texts).is_err());
            prop_assert_eq!(before, v);
        }
        Ok(())
    })
}

fn vocab_update_is_idempotent_and_order_insensitive(cases: u32) -> Result<(), String> {
    let strategy = prop::collection::vec("[a-dA-D]{1,3}", 0..25)
        .prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle()));
    prop(cases, strategy, |(a, b)| {
        let mut va = TagVocabulary::new(TagKind::UserRole);
        let mut vb = TagVocabulary::new(TagKind::UserRole);
        let ta = va.update(&a).unwrap();
        vb.update(&b).unwrap();
        let texts = |v: &TagVocabulary| v.tags().iter().map(|t| t.text.clone()).collect::<BTreeSet<_>>();
        prop_assert_eq!(texts(&va), texts(&vb));
        let again = va.clone();
        let ta2 = va.update(&a).unwrap();
        prop_assert_eq!(&again, &va);
        prop_assert_eq!(ta, ta2);
        Ok(())
    })
}

fn snapshot_round_trip_is_identity(cases: u32) -> Result<(), String> {
    seeds(cases, |seed| {
        let snap = random_snapshot(seed);
        let json = snap.to_canonical_json().unwrap();
        let back = tagcf::knowledge::KnowledgeSnapshot::from_json(&json).map_err(|e| fail(e.to_string()))?;
        prop_assert_eq!(&back, &snap);
        prop_assert_eq!(back.to_canonical_json().unwrap(), json);
        Ok(())
    })
}

fn snapshot_rejects_graph_endpoints_outside_cover(cases: u32) -> Result<(), String> {
    seeds(cases, |seed| {
        let snap = random_snapshot(seed);
        let (users, items) = fixtures::cover_tags(&snap);
        let user_set: BTreeSet<u32> = users.iter().copied().collect();
        let item_set: BTreeSet<u32> = items.iter().copied().collect();
        prop_assert!(snap.g_u2i().endpoints_within(&user_set, &item_set));
        prop_assert!(snap.g_i2u().endpoints_within(&item_set, &user_set));

        let stray = users.iter().max().map_or(0, |m| m + 1);
        let mut sources = users.clone();
        sources.push(stray);
        let target = match items.first() {
            Some(&t) => t,
            None => return Ok(()),
        };
        let g = LogicGraph::from_edges(Direction::U2I, &sources, &items, 5, [(stray, target, 0.5)]).unwrap();
        let mut b = snap.to_builder();
        b.g_u2i = Some(g);
        prop_assert!(b.build().is_err());
        Ok(())
    })
}

fn item_tag_lists_sorted_and_bounded(cases: u32) -> Result<(), String> {
    let strategy = (prop::collection::vec((0u32..20, 0.0f64..=1.0), 0..15), prop::bool::ANY);
    prop(cases, strategy, |(tags, user)| {
        let kind = if user { TagKind::UserRole } else { TagKind::ItemTopic };
        let mut rec = ItemRecord::new(1);
        rec.set_tags(kind, tags.clone()).unwrap();
        let got = rec.tags(kind);
        prop_assert!(got.windows(2).all(|w| w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0)));
        let ids: BTreeSet<u32> = got.iter().map(|t| t.0).collect();
        prop_assert_eq!(ids.len(), got.len());
        prop_assert!(got.iter().all(|t| (0.0..=1.0).contains(&t.1)));
        let mut bad = tags;
        bad.push((3, 1.5));
        prop_assert!(rec.set_tags(kind, bad).is_err());
        Ok(())
    })
}

fn dataset_histories_ordered_and_weights_valid(cases: u32) -> Result<(), String> {
    seeds(cases, |seed| {
        let mut r = rng(seed);
        let items: Vec<ItemRecord> = (0..6).map(ItemRecord::new).collect();
        let events: Vec<InteractionEvent> = (0..r.gen_range(0..40))
            .map(|_| {
                let label = r.gen_bool(0.8);
                InteractionEvent {
                    user_id: r.gen_range(0..5),
                    item_id: r.gen_range(0..6),
                    timestamp: r.gen_range(0..20),
                    label,
                    weight: if label { r.gen_range(0.1..3.0) } else { r.gen_range(0.0..3.0) },
                }
            })
            .collect();
        let ds = Dataset::new(items.clone(), shuffled(&events, &mut r)).unwrap();
        for h in ds.histories().values() {
            prop_assert!(h.windows(2).all(|w| (w[0].timestamp, w[0].item_id) <= (w[1].timestamp, w[1].item_id)));
        }
        prop_assert!(ds.events().iter().all(|e| !e.label || e.weight > 0.0));
        let mut bad = events;
        bad.push(InteractionEvent {
            weight: 0.0,
            ..InteractionEvent::positive(0, 0, 0)
        });
        prop_assert!(Dataset::new(items, bad).is_err());
        Ok(())
    })
}

// ---------------------------------------------------------------- coverset

/// A random multi-day instance: (tau, window, days of item tag sets).
fn cover_instance(seed: u64) -> (f64, usize, Vec<Vec<BTreeSet<u32>>>) {
    let mut r = rng(seed);
    let tau = if r.gen_bool(0.5) { 0.8 } else { 0.99 };
    let window = r.gen_range(1..5);
    let n_tags = r.gen_range(1..=15);
    let days = (0..r.gen_range(1..7))
        .map(|_| {
            let n = r.gen_range(0..=30);
            random_items(&mut r, n, n_tags)
        })
        .collect();
    (tau, window, days)
}

/// Covered-item count, computed directly.
fn covered(items: &[BTreeSet<u32>], tags: &BTreeSet<u32>) -> usize {
    items.iter().filter(|t| !t.is_disjoint(tags)).count()
}

pub fn cover_update_matches_greedy_oracle(cases: u32) -> Result<(), String> {
    seeds(cases, |seed| {
        let (tau, window, days) = cover_instance(seed);
        let mut cover = CoverSet::new(tau);
        let mut hist = TagItemHistory::new(window);
        let mut sim = CoverSim::new(tau, window);
        for (day, items) in days.iter().enumerate() {
            let m = fixtures::mapping(items);
            let (c, h, report) = update_cover_set(&cover, &m, &hist, day as i64).unwrap();
            let want = sim.step(items);
            prop_assert_eq!(&report.added, &want.added, "day {}", day);
            prop_assert_eq!(&report.removed, &want.removed, "day {}", day);
            prop_assert_eq!(c.selected(), &sim.selected[..]);
            prop_assert_eq!(report.coverage, want.coverage);
            prop_assert_eq!(h.buckets().cloned().collect::<Vec<_>>(), sim.buckets.iter().cloned().collect::<Vec<_>>());
            let all: BTreeSet<u32> = items.iter().flatten().copied().collect();
            let achievable = items.is_empty() || covered(items, &all) as f64 / items.len() as f64 >= tau;
            let post = c.selected_set();
            if achievable && !items.is_empty() {
                prop_assert!(covered(items, &post) as f64 / items.len() as f64 >= tau);
            }
            cover = c;
            hist = h;
        }
        Ok(())
    })
}

fn greedy_additions_strictly_increase_coverage(cases: u32) -> Result<(), String> {
    seeds(cases, |seed| {
        let (tau, window, days) = cover_instance(seed);
        let mut cover = CoverSet::new(tau);
        let mut hist = TagItemHistory::new(window);
        for (day, items) in days.iter().enumerate() {
            let present: BTreeSet<u32> = items.iter().flatten().copied().collect();
            let mut chosen: BTreeSet<u32> = cover.selected().iter().copied().filter(|t| present.contains(t)).collect();
            let (c, h, report) = update_cover_set(&cover, &fixtures::mapping(items), &hist, day as i64).unwrap();
            for t in &report.added {
                let before = covered(items, &chosen);
                prop_assert!(chosen.insert(*t), "tag {} added twice", t);
                prop_assert!(covered(items, &chosen) > before, "tag {} added nothing", t);
            }
            let ids: BTreeSet<u32> = c.selected().iter().copied().collect();
            prop_assert_eq!(ids.len(), c.len());
            prop_assert_eq!(c.tau(), tau);
            cover = c;
            hist = h;
        }
        Ok(())
    })
}

fn cover_update_is_deterministic(cases: u32) -> Result<(), String> {
    seeds(cases, |seed| {
        let (tau, window, days) = cover_instance(seed);
        let mut cover = CoverSet::new(tau);
        let mut hist = TagItemHistory::new(window);
        for (day, items) in days.iter().enumerate() {
            let m = fixtures::mapping(items);
            let a = update_cover_set(&cover, &m, &hist, day as i64).unwrap();
            let b = update_cover_set(&cover, &m, &hist, day as i64).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(serde_json::to_string(&a.0).unwrap(), serde_json::to_string(&b.0).unwrap());
            cover = a.0;
            hist = a.1;
        }
        Ok(())
    })
}

fn removal_only_after_full_stale_window(cases: u32) -> Result<(), String> {
    seeds(cases, |seed| {
        let mut r = rng(seed);
        let window = r.gen_range(1..5);
        let n_tags = r.gen_range(2..10);
        let mut cover = CoverSet::new(0.99);
        let mut hist = TagItemHistory::new(window);
        // Update index of each selected tag's latest recall.
        let mut last_recall: BTreeMap<u32, usize> = BTreeMap::new();
        for step in 0..12usize {
            // Sparse days leave selected tags unrecalled for a while.
            let n = if r.gen_bool(0.4) { 0 } else { r.gen_range(1..6) };
            let items = random_items(&mut r, n, n_tags);
            let (c, h, report) = update_cover_set(&cover, &fixtures::mapping(&items), &hist, step as i64).unwrap();
            let present: BTreeSet<u32> = items.iter().flatten().copied().collect();
            for t in c.selected().iter().chain(&report.removed) {
                if present.contains(t) {
                    last_recall.insert(*t, step);
                }
            }
            for t in &report.removed {
                let since = step - last_recall[t];
                prop_assert!(since >= window, "tag {} removed {} updates after its last recall", t, since);
                last_recall.remove(t);
            }
            for t in c.selected() {
                prop_assert!(step - last_recall[t] < window, "stale tag {} kept", t);
            }
            cover = c;
            hist = h;
        }
        Ok(())
    })
}

fn history_keeps_exactly_window_buckets(cases: u32) -> Result<(), String> {
    seeds(cases, |seed| {
        let (tau, window, days) = cover_instance(seed);
        let mut cover = CoverSet::new(tau);
        let mut hist = TagItemHistory::new(window);
        prop_assert_eq!(hist.buckets().count(), window);
        for (day, items) in days.iter().enumerate() {
            let (c, h, _) = update_cover_set(&cover, &fixtures::mapping(items), &hist, day as i64).unwrap();
            prop_assert_eq!(h.buckets().count(), window);
            // The newest bucket holds today's recalls, the oldest was evicted.
            let olds: Vec<_> = hist.buckets().skip(1).cloned().collect();
            let news: Vec<_> = h.buckets().take(window - 1).cloned().collect();
            prop_assert_eq!(olds, news);
            cover = c;
            hist = h;
        }
        Ok(())
    })
}

// ---------------------------------------------------------------- logic

/// Random two-graph world over `n` sources and `m` middle tags, with a non-empty `t0`.
struct GraphPair {
    sources: Vec<u32>,
    middle: Vec<u32>,
    b: usize,
    first_scores: BTreeMap<(u32, u32), f64>,
    second_scores: BTreeMap<(u32, u32), f64>,
    first: LogicGraph,
    second: LogicGraph,
    t0: WeightedTagSet,
}

fn graph_pair(seed: u64) -> GraphPair {
    let mut r = rng(seed);
    let n = r.gen_range(1..=25u32);
    let m = r.gen_range(1..=25u32);
    let sources: Vec<u32> = (0..n).collect();
    let middle: Vec<u32> = (100..100 + m).collect();
    let b = r.gen_range(1..=5);
    let density = r.gen_range(0.05..0.6);
    let first_scores: BTreeMap<(u32, u32), f64> = random_edges(&mut r, &sources, &middle, density)
        .into_iter()
        .map(|(s, t, w)| ((s, t), w))
        .collect();
    let second_scores: BTreeMap<(u32, u32), f64> = random_edges(&mut r, &middle, &sources, density)
        .into_iter()
        .map(|(s, t, w)| ((s, t), w))
        .collect();
    let first = LogicGraph::from_edges(
        Direction::U2I,
        &sources,
        &middle,
        b,
        first_scores.iter().map(|(&(s, t), &w)| (s, t, w)),
    )
    .unwrap();
    let second = LogicGraph::from_edges(
        Direction::I2U,
        &middle,
        &sources,
        b,
        second_scores.iter().map(|(&(s, t), &w)| (s, t, w)),
    )
    .unwrap();
    let k0 = r.gen_range(1..=n.min(6));
    let picks: BTreeSet<u32> = (0..k0).map(|_| r.gen_range(0..n)).collect();
    let t0 = WeightedTagSet::from_pairs(picks.into_iter().map(|t| (t, r.gen_range(0.05..1.0)))).normalize();
    GraphPair {
        sources,
        middle,
        b,
        first_scores,
        second_scores,
        first,
        second,
        t0,
    }
}

fn flat(per: &BTreeMap<u32, Vec<(u32, f64)>>) -> oracles::Edges {
    per.iter().flat_map(|(&s, v)| v.iter().map(move |&(t, w)| (s, t, w))).collect()
}

pub fn explore_matches_path_enumeration(cases: u32) -> Result<(), String> {
    seeds(cases, |seed| {
        let g = graph_pair(seed);
        let first = oracles::top_b(&g.first_scores, g.b);
        let second = oracles::top_b(&g.second_scores, g.b);
        for s in &g.sources {
            prop_assert_eq!(g.first.out_edges(*s), first.get(s).map_or(&[][..], |v| &v[..]));
        }
        let top_k = 1 + (seed % 12) as usize;
        for (mode, hard) in [(ExplorationMode::Soft, false), (ExplorationMode::Hard, true)] {
            let cfg = ExplorationConfig { mode, delta: 0.0, top_k };
            let (c1, t1) = explore(&g.t0, &g.first, &g.second, &cfg).unwrap();
            let (want_c1, want_t1) = oracles::explore_paths(&as_map(&g.t0), &flat(&first), &flat(&second), hard);
            prop_assert!(maps_close(&as_map(&c1), &want_c1, 1e-9), "{:?} c1 {:?} vs {:?}", mode, c1, want_c1);
            let want = oracles::truncate_normalize(&want_t1, top_k);
            prop_assert!(maps_close(&as_map(&t1), &want, 1e-9), "{:?} t1 {:?} vs {:?}", mode, t1, want);
        }
        Ok(())
    })
}

fn hard_explore_is_monotone_in_support(cases: u32) -> Result<(), String> {
    seeds(cases, |seed| {
        let g = graph_pair(seed);
        let mut r = rng(seed ^ 0x5eed);
        let mut bigger = g.t0.clone();
        for _ in 0..r.gen_range(0..4) {
            bigger.add(*g.sources.get(r.gen_range(0..g.sources.len())).unwrap(), 0.5);
        }
        let cfg = ExplorationConfig {
            mode: ExplorationMode::Hard,
            delta: 0.0,
            top_k: 1000,
        };
        let (c_small, t_small) = explore(&g.t0, &g.first, &g.second, &cfg).unwrap();
        let (c_big, t_big) = explore(&bigger, &g.first, &g.second, &cfg).unwrap();
        prop_assert!(c_small.support().is_subset(&c_big.support()));
        prop_assert!(t_small.support().is_subset(&t_big.support()));
        Ok(())
    })
}

fn soft_explore_is_scale_covariant(cases: u32) -> Result<(), String> {
    prop(cases, (any::<u64>(), 0.01f64..100.0), |(seed, s)| {
        let g = graph_pair(seed);
        let scaled = WeightedTagSet::from_pairs(g.t0.iter().map(|(t, w)| (t, w * s)));
        let cfg = ExplorationConfig {
            mode: ExplorationMode::Soft,
            delta: 0.0,
            top_k: 1 + (seed % 7) as usize,
        };
        let (c, t) = explore(&g.t0, &g.first, &g.second, &cfg).unwrap();
        let (cs, ts) = explore(&scaled, &g.first, &g.second, &cfg).unwrap();
        let expect: BTreeMap<u32, f64> = c.iter().map(|(k, w)| (k, w * s)).collect();
        prop_assert!(maps_close(&as_map(&cs), &expect, 1e-9));
        prop_assert!(maps_close(&as_map(&ts), &as_map(&t), 1e-9));
        Ok(())
    })
}

fn exploration_respects_truncation_bound(cases: u32) -> Result<(), String> {
    prop(cases, (any::<u64>(), 1usize..6, prop::bool::ANY), |(seed, top_k, hard)| {
        let g = graph_pair(seed);
        let mode = if hard { ExplorationMode::Hard } else { ExplorationMode::Soft };
        let (_, t1) = explore(&g.t0, &g.first, &g.second, &ExplorationConfig { mode, delta: 0.0, top_k }).unwrap();
        prop_assert!(t1.len() <= top_k);
        if !t1.is_empty() {
            prop_assert!(t1.is_normalized());
            prop_assert!((t1.total() - 1.0).abs() <= 1e-9);
        }
        Ok(())
    })
}

fn sparse_explore_equals_dense_product(cases: u32) -> Result<(), String> {
    seeds(cases, |seed| {
        let g = graph_pair(seed);
        // One shared index space: sources first, then middle tags.
        let nodes: Vec<u32> = g.sources.iter().chain(&g.middle).copied().collect();
        let index: BTreeMap<u32, usize> = nodes.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        let dense = |graph: &LogicGraph| {
            let mut a = vec![vec![0.0; nodes.len()]; nodes.len()];
            for (s, t, w) in graph.edges() {
                a[index[&s]][index[&t]] = w;
            }
            a
        };
        let mut x = vec![0.0; nodes.len()];
        for (t, w) in g.t0.iter() {
            x[index[&t]] = w;
        }
        let (mid, out) = oracles::dense_two_hop(&x, &dense(&g.first), &dense(&g.second));
        let cfg = ExplorationConfig {
            mode: ExplorationMode::Soft,
            delta: 0.0,
            top_k: nodes.len(),
        };
        let (c1, t1) = explore(&g.t0, &g.first, &g.second, &cfg).unwrap();
        let to_map = |v: &[f64]| -> BTreeMap<u32, f64> {
            v.iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(i, &w)| (nodes[i], w)).collect()
        };
        prop_assert!(maps_close(&as_map(&c1), &to_map(&mid), 1e-9));
        let total: f64 = out.iter().sum();
        let want: BTreeMap<u32, f64> = to_map(&out).into_iter().map(|(t, w)| (t, w / total)).collect();
        prop_assert!(maps_close(&as_map(&t1), &want, 1e-9));
        Ok(())
    })
}

fn build_graph_keeps_top_b_targets(cases: u32) -> Result<(), String> {
    seeds(cases, |seed| {
        let mut r = rng(seed);
        let sources: Vec<u32> = (0..r.gen_range(1..20)).collect();
        let targets: Vec<u32> = (0..r.gen_range(1..20)).collect();
        let b = r.gen_range(1..7);
        let mut scores = BTreeMap::new();
        for &s in &sources {
            for &t in &targets {
                // Coarse values make ties common.
                let v = if r.gen_bool(0.3) { 0.0 } else { f64::from(r.gen_range(1..=10u32)) / 10.0 };
                scores.insert((s, t), v);
            }
        }
        let g = build_graph(Direction::U2I, &sources, &targets, b, |s, t| scores[&(s, t)]).unwrap();
        let want = oracles::top_b(&scores, b);
        for &s in &sources {
            let got = g.out_edges(s);
            prop_assert_eq!(got, want.get(&s).map_or(&[][..], |v| &v[..]));
            prop_assert!(got.len() <= b);
            prop_assert!(got.windows(2).all(|w| w[0].1 >= w[1].1));
            prop_assert!(got.iter().all(|e| e.1 > 0.0 && e.1 <= 1.0));
        }
        let bad = build_graph(Direction::U2I, &sources, &targets, b, |_, _| f64::NAN);
        prop_assert!(bad.is_err());
        Ok(())
    })
}

fn weighted_sets_normalize_and_merge(cases: u32) -> Result<(), String> {
    let pairs = || prop::collection::vec((0u32..15, prop_oneof![Just(0.0), 0.001f64..10.0]), 0..12);
    prop(cases, (pairs(), pairs()), |(a, b)| {
        let x = WeightedTagSet::from_pairs(a);
        let y = WeightedTagSet::from_pairs(b);
        prop_assert!(x.iter().all(|(_, w)| w > 0.0));
        let nx = x.clone().normalize();
        if !nx.is_empty() {
            prop_assert!((nx.total() - 1.0).abs() <= 1e-9);
        }
        prop_assert_eq!(as_map(&merge_tag_sets(&x, &WeightedTagSet::new())), as_map(&nx));
        let m = merge_tag_sets(&x, &y);
        prop_assert_eq!(m.support(), x.support().union(&y.support()).copied().collect::<BTreeSet<_>>());
        if !m.is_empty() {
            prop_assert!((m.total() - 1.0).abs() <= 1e-9);
            let total = x.total() + y.total();
            for (t, w) in m.iter() {
                prop_assert!(close(w, (x.get(t) + y.get(t)) / total, 1e-12));
            }
        }
        Ok(())
    })
}

fn degree_histograms_satisfy_handshake(cases: u32) -> Result<(), String> {
    seeds(cases, |seed| {
        let g = graph_pair(seed);
        for graph in [&g.first, &g.second] {
            let d = graph_degree_stats(graph);
            let out: usize = d.out_degree.iter().map(|(k, n)| k * n).sum();
            let inn: usize = d.in_degree.iter().map(|(k, n)| k * n).sum();
            prop_assert_eq!(out, graph.edge_count());
            prop_assert_eq!(inn, graph.edge_count());
            for s in graph.sources() {
                let list = graph.out_edges(*s);
                prop_assert!(list.len() <= graph.branch_b());
                prop_assert!(list.windows(2).all(|w| w[0].1 >= w[1].1));
            }
        }
        Ok(())
    })
}

// ---------------------------------------------------------------- providers

fn mock_provider_is_pure(cases: u32) -> Result<(), String> {
    prop(cases, (any::<u64>(), "[a-z ]{1,30}", 0u32..1000), |(seed, text, item)| {
        let a = MockProvider::with_default_lexicons(seed);
        let b = MockProvider::with_default_lexicons(seed);
        let req = TagExtractionRequest {
            item_id: item,
            text_fields: vec![text.clone()],
            semantic_embedding: None,
        };
        let ra = a.extract(&req).unwrap();
        prop_assert_eq!(&ra, &b.extract(&req).unwrap());
        prop_assert!(!ra.user_tags.is_empty() && !ra.item_tags.is_empty());
        for kind in [TagKind::UserRole, TagKind::ItemTopic] {
            let tag = a.lexicon(kind)[item as usize % a.lexicon(kind).len()].clone();
            let q = LogicReasoningRequest { tag, kind };
            let la = a.reason(&q).unwrap();
            prop_assert_eq!(&la, &b.reason(&q).unwrap());
            prop_assert_eq!(la.target_kind, kind.opposite());
            prop_assert!(la.targets.iter().all(|t| canonicalize(t).is_some()));
        }
        Ok(())
    })
}

fn distilled_tag_gradient_matches_differences(cases: u32) -> Result<(), String> {
    prop(cases, (any::<u64>(), 1usize..=8), |(seed, dim)| {
        let err = fixtures::distilled_tag_gradient_error(seed, dim);
        prop_assert!(err < 1e-4, "relative error {:e}", err);
        Ok(())
    })
}

fn distilled_logic_gradient_matches_differences(cases: u32) -> Result<(), String> {
    prop(cases, (any::<u64>(), 1usize..=8), |(seed, dim)| {
        let err = fixtures::distilled_logic_gradient_error(seed, dim);
        prop_assert!(err < 1e-4, "relative error {:e}", err);
        Ok(())
    })
}

fn distillation_loss_never_increases(cases: u32) -> Result<(), String> {
    seeds(cases, |seed| {
        let mut r = rng(seed);
        let dim = r.gen_range(1..=8);
        let n_tags = r.gen_range(1..6u32);
        let samples: Vec<(Vec<f64>, Vec<u32>)> = (0..r.gen_range(1..15))
            .map(|_| (random_vec(&mut r, dim, 1.0), vec![r.gen_range(0..n_tags)]))
            .collect();
        let cover = CoverSet::with_tags(0.99, 0..n_tags);
        let cfg = DistillConfig {
            epochs: 40,
            seed,
            ..Default::default()
        };
        let trained = train_distilled_tag_model(&samples, &cover, dim, &cfg).unwrap();
        prop_assert!(trained.loss_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{:?}", trained.loss_trace);

        let words = ["violin", "teacher", "music", "theory", "ski", "chef", "garden", "code"];
        let pairs: Vec<(String, String, bool)> = (0..r.gen_range(1..12))
            .map(|_| {
                let w = |r: &mut rand_chacha::ChaCha8Rng| words[r.gen_range(0..words.len())].to_string();
                (w(&mut r), w(&mut r), r.gen_bool(0.5))
            })
            .collect();
        let emb = HashingEmbedder::new(seed, r.gen_range(2..=8));
        let trained = train_distilled_logic_model(&pairs, &emb, &cfg).unwrap();
        prop_assert!(trained.loss_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{:?}", trained.loss_trace);
        Ok(())
    })
}

fn predict_tags_is_a_total_order(cases: u32) -> Result<(), String> {
    seeds(cases, |seed| {
        let mut r = rng(seed);
        let dim = r.gen_range(1..6);
        let tags: Vec<u32> = (0..r.gen_range(1..10)).map(|_| r.gen_range(0..30)).collect();
        let mut model = DistilledTagModel::zeros(&tags, dim);
        {
            // Coarse weights produce exact ties.
            let (w, b) = model.params_mut();
            w.iter_mut().chain(b.iter_mut()).for_each(|x| *x = f64::from(r.gen_range(-2..=2i32)));
        }
        let mut item = ItemRecord::new(0);
        item.semantic_embedding = Some((0..dim).map(|_| f64::from(r.gen_range(-1..=1i32))).collect());
        let k = r.gen_range(1..12);
        let a = predict_tags(&model, &item, k).unwrap();
        prop_assert_eq!(&a, &predict_tags(&model, &item, k).unwrap());
        prop_assert!(a.windows(2).all(|w| w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0)));
        prop_assert!(a.iter().all(|p| p.1 > 0.0 && p.1 < 1.0));
        Ok(())
    })
}

fn embedder_is_deterministic(cases: u32) -> Result<(), String> {
    prop(cases, (any::<u64>(), 1usize..40, "[a-zA-Z ]{0,20}"), |(seed, dim, text)| {
        let e = HashingEmbedder::new(seed, dim);
        let v = e.embed(&text);
        prop_assert_eq!(v.len(), dim);
        prop_assert_eq!(&v, &HashingEmbedder::new(seed, dim).embed(&text));
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-9);
        Ok(())
    })
}

// ---------------------------------------------------------------- recommender

const ENCODERS: [(SeqEncoderKind, usize, usize); 4] = [
    (SeqEncoderKind::CausalAttention, 1, 1),
    (SeqEncoderKind::CausalAttention, 2, 2),
    (SeqEncoderKind::MeanPool, 1, 1),
    (SeqEncoderKind::LastItem, 1, 1),
];

fn model_gradients_match_differences(cases: u32) -> Result<(), String> {
    seeds(cases, |seed| {
        let (kind, layers, heads) = ENCODERS[(seed % 4) as usize];
        let (p, ctx, s) = gradient_fixture_seeded(kind, layers, heads, seed);
        for mix in [
            LossMix { ui: 1.0, ut: 0.0, it: 0.0 },
            LossMix { ui: 0.0, ut: 1.0, it: 0.0 },
            LossMix { ui: 0.0, ut: 0.0, it: 1.0 },
            LossMix::objective(0.5),
        ] {
            let (err, at) = max_gradient_error(&p, &ctx, &s, mix);
            prop_assert!(err < 1e-4, "{:?} {:?}: {:e} at {}", kind, mix, err, at);
        }
        Ok(())
    })
}

fn scores_bounded_and_losses_finite(cases: u32) -> Result<(), String> {
    prop(cases, (any::<u64>(), 0.1f64..50.0), |(seed, scale)| {
        let (kind, layers, heads) = ENCODERS[(seed % 4) as usize];
        let (p, ctx, s) = gradient_fixture_seeded(kind, layers, heads, seed);
        let phi = tagcf::recommender::encode_user(&p, &ctx, &s.history, s.user).unwrap();
        for i in 0..p.n_items() {
            let y = raw_score(&phi, p.item_emb.row(i));
            prop_assert!(y > 0.0 && y < 1.0);
        }
        for r in 0..p.tag_ids.len() {
            let q = sigmoid(tagcf::util::dot(&phi, p.tag_emb.row(r)));
            prop_assert!(q > 0.0 && q < 1.0);
        }
        let mut big = p.clone();
        big.for_each_mut(|_, t| t.data.iter_mut().for_each(|x| *x *= scale));
        let parts = loss_and_grad(&big, &ctx, &s, LossMix::objective(0.5), None).unwrap();
        for v in [parts.ui, parts.ut, parts.it, parts.total] {
            prop_assert!(v.is_finite() && v >= 0.0, "{:?}", parts);
        }
        Ok(())
    })
}

fn tag_set_selection_ignores_monotone_transforms(cases: u32) -> Result<(), String> {
    let strategy = (Just((1..=40u32).collect::<Vec<_>>()).prop_shuffle(), 1usize..40, 1usize..8, 0usize..4);
    prop(cases, strategy, |(levels, n, k, which)| {
        let scores: Vec<(u32, f64)> = levels.iter().take(n).enumerate().map(|(i, &l)| (i as u32, f64::from(l) / 40.0)).collect();
        let f = |x: f64| match which {
            0 => x * x * x,
            1 => x.sqrt(),
            2 => x / (1.0 + x),
            _ => x.exp(),
        };
        let mapped: Vec<(u32, f64)> = scores.iter().map(|&(t, s)| (t, f(s))).collect();
        let a = select_tag_set(&scores, k);
        let b = select_tag_set(&mapped, k);
        prop_assert_eq!(a.support(), b.support());
        prop_assert_eq!(a.len(), k.min(n));
        Ok(())
    })
}

fn item_tag_encoding_in_convex_hull(cases: u32) -> Result<(), String> {
    seeds(cases, |seed| {
        let mut r = rng(seed);
        let d = 4;
        let m = r.gen_range(1..=d);
        let tags: Vec<Vec<f64>> = (0..m).map(|_| random_vec(&mut r, d, 2.0)).collect();
        let w = Tensor::from_rows(&(0..d).map(|_| random_vec(&mut r, d, 3.0)).collect::<Vec<_>>());
        let b = random_vec(&mut r, d, 1.0);
        let refs: Vec<&[f64]> = tags.iter().map(|v| &v[..]).collect();
        let out = encode_item_tags(&refs, &w, &b);
        // Barycentric coordinates from [E; 1] α = [out; 1].
        let mut rows: Vec<Vec<f64>> = (0..d).map(|c| tags.iter().map(|t| t[c]).collect()).collect();
        rows.push(vec![1.0; m]);
        let mut rhs = out.clone();
        rhs.push(1.0);
        let alpha = oracles::least_squares(&rows, &rhs).ok_or_else(|| fail("degenerate tag set"))?;
        prop_assert!(alpha.iter().all(|&a| a >= -1e-9), "{:?}", alpha);
        for (row, want) in rows.iter().zip(&rhs) {
            let got: f64 = row.iter().zip(&alpha).map(|(x, a)| x * a).sum();
            prop_assert!((got - want).abs() < 1e-9);
        }
        Ok(())
    })
}

fn training_is_deterministic(cases: u32) -> Result<(), String> {
    seeds(cases, |seed| {
        let world = small_world(seed % 8);
        let cfg = fixtures::small_training(seed);
        let ctx = TagContext::build(&world.dataset, &world.snapshot, &cfg).unwrap();
        let a = train(&world.dataset, &ctx, &cfg).unwrap();
        let b = train(&world.dataset, &ctx, &cfg).unwrap();
        let bytes = |params: &ModelParameters| {
            ModelFile {
                config: cfg.clone(),
                params: params.clone(),
            }
            .to_bytes()
            .unwrap()
        };
        let ba = bytes(&a.params);
        prop_assert_eq!(&ba, &bytes(&b.params));
        prop_assert_eq!(&a.trace, &b.trace);
        let back = ModelFile::from_bytes(&ba).unwrap();
        prop_assert_eq!(&back.to_bytes().unwrap(), &ba);
        let (user, history) = user_histories(&world.dataset).into_iter().next().unwrap();
        let infer = InferenceConfig::expl(0.5, 0.5, 5);
        let rank = |p: &ModelParameters| {
            let sc = Scorer::new(p, &ctx, &world.snapshot);
            let uc = sc.user_context(user, &history, &infer).unwrap();
            let all: Vec<u32> = world.dataset.items().keys().copied().collect();
            sc.rank(&uc, &all, &infer)
        };
        prop_assert_eq!(rank(&a.params), rank(&b.params));
        Ok(())
    })
}

// ---------------------------------------------------------------- inference

struct Ranking {
    world: tagcf::eval::SynthOutput,
    ctx: TagContext,
    params: ModelParameters,
    user: u64,
    history: Vec<u32>,
    candidates: Vec<u32>,
}

fn ranking_setup(seed: u64) -> Ranking {
    let world = small_world(seed % 16);
    let mut cfg = fixtures::small_training(seed);
    if seed % 2 == 0 {
        cfg.tag_prob = tagcf::recommender::TagProbSource::Distilled;
    }
    let ctx = TagContext::build(&world.dataset, &world.snapshot, &cfg).unwrap();
    let params = ModelParameters::init(cfg.arch, ctx.n_items(), &ctx.tag_ids, seed);
    let hs = user_histories(&world.dataset);
    let (user, history) = hs.into_iter().nth((seed % 12) as usize).unwrap();
    let candidates: Vec<u32> = world.dataset.items().keys().copied().collect();
    Ranking {
        world,
        ctx,
        params,
        user,
        history,
        candidates,
    }
}

fn score_is_affine_in_betas(cases: u32) -> Result<(), String> {
    prop(cases, (any::<u64>(), 0.0f64..1.0, 0.01f64..1.0, 0.0f64..0.5, 0.0f64..0.5), |(seed, b0, b1, u0, u1)| {
        let s = ranking_setup(seed);
        let sc = Scorer::new(&s.params, &s.ctx, &s.world.snapshot);
        let points: Vec<InferenceConfig> = (0..3)
            .map(|j| InferenceConfig::expl(b0 + j as f64 * u0, b1 + j as f64 * u1, 10))
            .collect();
        for &item in &s.candidates {
            let ys: Vec<_> = points
                .iter()
                .map(|cfg| {
                    let uc = sc.user_context(s.user, &s.history, cfg).unwrap();
                    sc.score(&uc, item, cfg)
                })
                .collect();
            prop_assert!(ys.iter().all(|y| y.tag0 >= 0.0 && y.tag1 >= 0.0));
            prop_assert!(close(ys[2].score - ys[1].score, ys[1].score - ys[0].score, 1e-9));
            for (y, cfg) in ys.iter().zip(&points) {
                prop_assert!(close(y.score, y.raw + cfg.beta0 * y.tag0 + cfg.beta1 * y.tag1, 1e-12));
            }
        }
        Ok(())
    })
}

pub fn zero_betas_rank_by_raw_score(cases: u32) -> Result<(), String> {
    seeds(cases, |seed| {
        let s = ranking_setup(seed);
        let sc = Scorer::new(&s.params, &s.ctx, &s.world.snapshot);
        let cfg = InferenceConfig::raw(s.candidates.len());
        let uc = sc.user_context(s.user, &s.history, &cfg).unwrap();
        let got = sc.rank(&uc, &s.candidates, &cfg).items();
        let phi = tagcf::recommender::encode_user(&s.params, &s.ctx, &s.history, s.user).unwrap();
        let seen: BTreeSet<u32> = s.history.iter().copied().collect();
        let mut want: Vec<(u32, f64)> = s
            .candidates
            .iter()
            .filter(|i| !seen.contains(i))
            .map(|&i| (i, raw_score(&phi, s.params.item_emb.row(i as usize))))
            .collect();
        want.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        prop_assert_eq!(got, want.into_iter().map(|p| p.0).collect::<Vec<_>>());
        Ok(())
    })
}

fn explored_term_skips_original_tags(cases: u32) -> Result<(), String> {
    seeds(cases, |seed| {
        let s = ranking_setup(seed);
        let sc = Scorer::new(&s.params, &s.ctx, &s.world.snapshot);
        let mut cfg = InferenceConfig::expl(0.5, 0.5, 10);
        cfg.k = 1 + (seed % 3) as usize;
        let uc = sc.user_context(s.user, &s.history, &cfg).unwrap();
        let novel: BTreeSet<u32> = uc.novel_tags().into_iter().collect();
        prop_assert!(novel.is_disjoint(&uc.t0.support()));
        prop_assert_eq!(&novel, &uc.t1.support().difference(&uc.t0.support()).copied().collect());
        for &item in &s.candidates {
            let y = sc.score(&uc, item, &cfg);
            let term = |tags: &BTreeSet<u32>| -> f64 {
                tags.iter().map(|&t| sc.user_tag_prob(&uc.phi, t) * sc.item_tag_prob(item, t)).sum()
            };
            prop_assert!(close(y.tag0, term(&uc.t0.support()), 1e-12));
            prop_assert!(close(y.tag1, term(&novel), 1e-12));
            let ex = sc.explain(&uc, item, &cfg);
            prop_assert!(close(ex.total(), cfg.beta0 * y.tag0 + cfg.beta1 * y.tag1, 1e-9));
        }
        Ok(())
    })
}

fn ranking_is_a_total_order(cases: u32) -> Result<(), String> {
    seeds(cases, |seed| {
        let s = ranking_setup(seed);
        let sc = Scorer::new(&s.params, &s.ctx, &s.world.snapshot);
        let mut r = rng(seed);
        let cfg = match seed % 3 {
            0 => InferenceConfig::raw(8),
            1 => InferenceConfig::util(0.5, 8),
            _ => InferenceConfig::expl(0.3, 0.7, 8),
        };
        let uc = sc.user_context(s.user, &s.history, &cfg).unwrap();
        let a = sc.rank(&uc, &s.candidates, &cfg);
        let mut dup = shuffled(&s.candidates, &mut r);
        dup.extend(shuffled(&s.candidates, &mut r).into_iter().take(5));
        prop_assert_eq!(&a, &sc.rank(&uc, &dup, &cfg));
        prop_assert_eq!(&a, &sc.rank(&uc, &a.items(), &cfg));
        prop_assert!(a
            .entries
            .windows(2)
            .all(|w| w[0].score > w[1].score || (w[0].score == w[1].score && w[0].item < w[1].item)));
        Ok(())
    })
}

pub fn util_mode_ignores_logic_graphs(cases: u32) -> Result<(), String> {
    seeds(cases, |seed| {
        let s = ranking_setup(seed);
        let (users, items) = fixtures::cover_tags(&s.world.snapshot);
        let mut r = rng(seed);
        let first = LogicGraph::from_edges(Direction::U2I, &users, &items, 3, random_edges(&mut r, &users, &items, 0.7))
            .unwrap();
        let second = LogicGraph::from_edges(Direction::I2U, &items, &users, 3, random_edges(&mut r, &items, &users, 0.7))
            .unwrap();
        let cfg = InferenceConfig::util(0.1 + r.gen_range(0.0..2.0), 10);
        let orig = Scorer::new(&s.params, &s.ctx, &s.world.snapshot);
        let perturbed = Scorer::with_graphs(&s.params, &s.ctx, &first, &second);
        let ua = orig.user_context(s.user, &s.history, &cfg).unwrap();
        let ub = perturbed.user_context(s.user, &s.history, &cfg).unwrap();
        prop_assert_eq!(orig.rank(&ua, &s.candidates, &cfg), perturbed.rank(&ub, &s.candidates, &cfg));
        Ok(())
    })
}

fn mode_constraints_are_enforced(cases: u32) -> Result<(), String> {
    let beta = || prop_oneof![Just(0.0), 0.001f64..2.0, Just(-0.5)];
    prop(cases, (beta(), beta(), 0usize..3), |(b0, b1, m)| {
        let mode = [Mode::Raw, Mode::Util, Mode::Expl][m];
        let cfg = InferenceConfig {
            beta0: b0,
            beta1: b1,
            mode,
            ..InferenceConfig::raw(10)
        };
        let valid = b0 >= 0.0
            && b1 >= 0.0
            && match mode {
                Mode::Raw => b0 == 0.0 && b1 == 0.0,
                Mode::Util => b0 > 0.0 && b1 == 0.0,
                Mode::Expl => b1 > 0.0,
            };
        prop_assert_eq!(cfg.validate().is_ok(), valid);
        Ok(())
    })
}

// ---------------------------------------------------------------- eval

/// Ranked lists over a catalog plus per-list relevant sets.
fn metric_instance(seed: u64) -> (usize, Vec<Vec<u32>>, Vec<BTreeSet<u32>>, usize) {
    let mut r = rng(seed);
    let catalog = r.gen_range(1..40usize);
    let all: Vec<u32> = (0..catalog as u32).collect();
    let lists: Vec<Vec<u32>> = (0..r.gen_range(1..12))
        .map(|_| {
            let len = r.gen_range(0..=catalog);
            shuffled(&all, &mut r).into_iter().take(len).collect()
        })
        .collect();
    let relevant: Vec<BTreeSet<u32>> = lists
        .iter()
        .map(|_| (0..r.gen_range(1..6)).map(|_| r.gen_range(0..catalog as u32)).collect())
        .collect();
    (catalog, lists, relevant, r.gen_range(1..25))
}

pub fn metrics_match_oracles(cases: u32) -> Result<(), String> {
    seeds(cases, |seed| {
        let (catalog, lists, relevant, n) = metric_instance(seed);
        for (l, rel) in lists.iter().zip(&relevant) {
            prop_assert!((ndcg_at(l, rel, n) - oracles::ndcg(l, rel, n)).abs() <= 1e-9);
            prop_assert_eq!(mrr_at(l, rel, n), oracles::mrr(l, rel, n));
        }
        prop_assert_eq!(coverage_at(&lists, catalog, n), oracles::coverage(&lists, catalog, n));
        prop_assert!((gini_at(&lists, catalog, n) - oracles::gini(&lists, catalog, n)).abs() <= 1e-9);
        Ok(())
    })
}

fn metrics_lie_in_unit_interval(cases: u32) -> Result<(), String> {
    seeds(cases, |seed| {
        let (catalog, lists, relevant, n) = metric_instance(seed);
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        for (l, rel) in lists.iter().zip(&relevant) {
            prop_assert!(unit(ndcg_at(l, rel, n)) && unit(mrr_at(l, rel, n)));
        }
        prop_assert!(unit(coverage_at(&lists, catalog, n)) && unit(gini_at(&lists, catalog, n)));
        Ok(())
    })
}

fn random_dataset(seed: u64) -> Dataset {
    let mut r = rng(seed);
    let n_items = r.gen_range(1..15u32);
    let items: Vec<ItemRecord> = (0..n_items).map(ItemRecord::new).collect();
    let events: Vec<InteractionEvent> = (0..r.gen_range(0..80))
        .map(|_| InteractionEvent::positive(r.gen_range(0..10), r.gen_range(0..n_items), r.gen_range(0..50)))
        .collect();
    Dataset::new(items, events).unwrap()
}

fn n_core_filter_is_a_fixpoint(cases: u32) -> Result<(), String> {
    prop(cases, (any::<u64>(), 1usize..8), |(seed, min)| {
        let ds = random_dataset(seed);
        let once = n_core_filter(&ds, min);
        prop_assert_eq!(&n_core_filter(&once, min), &once);
        for h in once.histories().values() {
            prop_assert!(h.len() >= min);
        }
        let used: BTreeSet<u32> = once.events().iter().map(|e| e.item_id).collect();
        prop_assert_eq!(used, once.items().keys().copied().collect::<BTreeSet<_>>());
        Ok(())
    })
}

fn temporal_split_separates_time(cases: u32) -> Result<(), String> {
    prop(cases, (any::<u64>(), 0i64..50), |(seed, boundary)| {
        let ds = random_dataset(seed);
        let Ok((train, test)) = temporal_split(&ds, boundary) else {
            return Ok(());
        };
        let train_h = train.histories();
        prop_assert!(train.events().iter().all(|e| e.timestamp < boundary));
        for (user, h) in test.histories() {
            let last = train_h.get(&user).and_then(|t| t.last()).map(|e| e.timestamp);
            prop_assert!(last.is_some(), "test user {} missing from training", user);
            prop_assert!(h.iter().all(|e| Some(e.timestamp) > last));
        }
        prop_assert_eq!(train.events().len() + test.events().len() <= ds.events().len(), true);
        Ok(())
    })
}

fn experiment_csv_is_reproducible(cases: u32) -> Result<(), String> {
    seeds(cases, |seed| {
        let world = small_world(seed % 8);
        let train_cfg = fixtures::small_training(0);
        let cfg = ExperimentConfig {
            arms: vec![
                ArmConfig {
                    name: "base".into(),
                    train: train_cfg.clone().id_only(),
                    infer: InferenceConfig::raw(5),
                },
                ArmConfig {
                    name: "expl".into(),
                    train: train_cfg,
                    infer: InferenceConfig::expl(0.5, 0.5, 5),
                },
            ],
            seeds: vec![seed % 1000, seed % 1000 + 1],
            cutoffs: vec![3, 5],
            train_fraction: 0.7,
            parallel: true,
        };
        let a = run_experiment(&world.dataset, &world.snapshot, &cfg).map_err(|e| fail(e.to_string()))?;
        let b = run_experiment(&world.dataset, &world.snapshot, &ExperimentConfig { parallel: false, ..cfg })
            .map_err(|e| fail(e.to_string()))?;
        prop_assert_eq!(a.to_csv(), b.to_csv());
        Ok(())
    })
}

fn data_files_round_trip(cases: u32) -> Result<(), String> {
    seeds(cases, |seed| {
        let world = small_world(seed % 32);
        let snap = &world.snapshot;
        let (uv, iv) = (snap.vocab(TagKind::UserRole), snap.vocab(TagKind::ItemTopic));
        let mut inter = Vec::new();
        let mut items = Vec::new();
        write_interactions(&world.dataset, &mut inter).unwrap();
        write_items(&world.dataset, uv, iv, &mut items).unwrap();
        let back = ingest_readers(&inter[..], "i", &items[..], "t", uv.clone(), iv.clone()).unwrap();
        prop_assert_eq!(&back.dataset, &world.dataset);
        prop_assert_eq!(&back.user_vocab, uv);
        prop_assert_eq!(&back.item_vocab, iv);
        Ok(())
    })
}
