//! `tagcf`: knowledge building, training, evaluation and recommendation.

mod config;
mod data;

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, LevelFilter};
use serde_json::json;
use tagcf::coverset::{coverset_stats, CoverSet, TagItemHistory, DEFAULT_TAU, DEFAULT_WINDOW_DAYS};
use tagcf::eval::{
    apply_cover_update, build_logic_graphs, collect_logic_pairs, distill_logic, distill_tag_kind, extract_item_tags,
    kb_stats, n_core_filter, run_experiment, synth_generate, ExperimentConfig, SynthConfig,
};
use tagcf::inference::{InferenceConfig, Mode, Scorer};
use tagcf::knowledge::{ItemId, KnowledgeSnapshot, TagKind};
use tagcf::logic::DEFAULT_BRANCH;
use tagcf::providers::DistillConfig;
use tagcf::recommender::{train, user_histories, ModelFile, TagContext, TrainingConfig};
use tagcf::util::canonical_json;

use crate::data::{
    load_dir, load_items, load_snapshot, load_snapshot_or_empty, write_dir, write_text, KindArg, ProviderArgs,
};

#[derive(Debug, Parser)]
#[command(name = "tagcf", version, about = "Tag-logic collaborative filtering toolkit")]
struct Cli {
    /// More log output (-v debug, -vv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

/// A TOML file plus `key.path=value` overrides.
#[derive(Debug, Clone, Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set arch.d=32`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Parse raw interactions and items into a data directory.
    Ingest {
        #[arg(long)]
        interactions: PathBuf,
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Snapshot whose vocabularies are extended with the items' tags.
        #[arg(long)]
        snapshot: PathBuf,
        /// Keep users with at least this many events (0 disables the filter).
        #[arg(long, default_value_t = 10)]
        min_interactions: usize,
    },
    /// Ask a provider for every item's user-role and item-topic tags.
    ExtractTags {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        snapshot: PathBuf,
        /// Output data directory; defaults to rewriting `--data`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Concurrent provider calls.
        #[arg(long, default_value_t = 8)]
        width: usize,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Apply one day of item tags to a cover set.
    CoversetUpdate {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        day: i64,
        #[arg(long)]
        items: PathBuf,
        /// Snapshot holding the cover sets; created when missing.
        #[arg(long)]
        state: PathBuf,
        /// Coverage target for a new cover set.
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        /// Staleness window (days) for a new cover set.
        #[arg(long, default_value_t = DEFAULT_WINDOW_DAYS)]
        window: usize,
    },
    /// Rebuild both logic graphs from the distilled logic models.
    LogicBuild {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BRANCH)]
        branch: usize,
        /// Output snapshot; defaults to rewriting `--snapshot`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the distilled tag models (θ) or logic models (φ).
    Distill {
        #[arg(long, value_enum)]
        what: DistillWhat,
        #[arg(long)]
        snapshot: PathBuf,
        /// Data directory (tags only).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Tag kind to distill; both when omitted (tags only).
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        /// Share of items sampled for tag distillation.
        #[arg(long, default_value_t = 0.1)]
        subset: f64,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 1.0)]
        lr: f64,
        #[arg(long, default_value_t = 0.0)]
        weight_decay: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Train the recommender.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write per-epoch statistics as JSON here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a multi-seed experiment over a temporal split and write CSV.
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank candidates for one user with score decomposition and explanations.
    Recommend {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        snapshot: PathBuf,
        /// Data directory holding the user's history.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        user: u64,
        /// One item id per line; all items when omitted.
        #[arg(long)]
        candidates: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "util")]
        mode: ModeArg,
        #[arg(long, default_value_t = 0.5)]
        beta0: f64,
        #[arg(long, default_value_t = 0.0)]
        beta1: f64,
        #[arg(long, default_value_t = 6)]
        topn: usize,
        /// Size of the user's original tag set.
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Tag frequency, tags-per-item and graph degree statistics as CSV.
    Stats {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "user")]
        kind: KindArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset and its knowledge snapshot.
    Synth {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        snapshot: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DistillWhat {
    Tags,
    Logic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Raw,
    Util,
    Expl,
}

/// A closed stdout (e.g. piped into `head`) is not an error.
fn print_json(v: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn save_snapshot(s: &KnowledgeSnapshot, path: &Path) -> Result<()> {
    s.save(path).with_context(|| format!("writing {}", path.display()))
}

fn kinds(kind: Option<KindArg>) -> Vec<TagKind> {
    match kind {
        Some(k) => vec![k.into()],
        None => vec![TagKind::UserRole, TagKind::ItemTopic],
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Ingest {
            interactions,
            items,
            out,
            snapshot,
            min_interactions,
        } => {
            let snap = load_snapshot_or_empty(&snapshot)?;
            let ing = tagcf::eval::ingest_with_vocab(
                &interactions,
                &items,
                snap.vocab(TagKind::UserRole).clone(),
                snap.vocab(TagKind::ItemTopic).clone(),
            )?;
            let ds = if min_interactions > 0 {
                n_core_filter(&ing.dataset, min_interactions)
            } else {
                ing.dataset.clone()
            };
            write_dir(&out, &ds, &ing.user_vocab, &ing.item_vocab)?;
            let mut b = snap.to_builder();
            b.user_vocab = ing.user_vocab;
            b.item_vocab = ing.item_vocab;
            save_snapshot(&b.build()?, &snapshot)?;
            print_json(&json!({
                "report": ing.report,
                "kept_events": ds.events().len(),
                "kept_items": ds.items().len(),
                "kept_users": ds.users().len(),
            }))
        }
        Cmd::ExtractTags {
            data,
            snapshot,
            out,
            width,
            provider,
        } => {
            let snap = load_snapshot_or_empty(&snapshot)?;
            let ing = load_dir(&data, &snap)?;
            let p = provider.build()?;
            let mut b = snap.to_builder();
            b.user_vocab = ing.user_vocab;
            b.item_vocab = ing.item_vocab;
            let (ds, snap, report) = extract_item_tags(&p, &ing.dataset, &b.build()?, width)?;
            write_dir(
                out.as_deref().unwrap_or(&data),
                &ds,
                snap.vocab(TagKind::UserRole),
                snap.vocab(TagKind::ItemTopic),
            )?;
            save_snapshot(&snap, &snapshot)?;
            print_json(&report)
        }
        Cmd::CoversetUpdate {
            kind,
            day,
            items,
            state,
            tau,
            window,
        } => {
            let kind: TagKind = kind.into();
            let mut snap = load_snapshot_or_empty(&state)?;
            if snap.cover_set(kind).last_day().is_none() && snap.cover_set(kind).is_empty() {
                let mut b = snap.to_builder();
                match kind {
                    TagKind::UserRole => {
                        b.cover_set_user = CoverSet::new(tau);
                        b.history_user = TagItemHistory::new(window);
                    }
                    TagKind::ItemTopic => {
                        b.cover_set_item = CoverSet::new(tau);
                        b.history_item = TagItemHistory::new(window);
                    }
                }
                snap = b.build()?;
            }
            let ing = load_items(&items, &snap)?;
            let mut b = snap.to_builder();
            b.user_vocab = ing.user_vocab.clone();
            b.item_vocab = ing.item_vocab.clone();
            let (next, report) = apply_cover_update(&b.build()?, kind, ing.dataset.item_tag_mapping(kind), day)?;
            save_snapshot(&next, &state)?;
            print_json(&report)
        }
        Cmd::LogicBuild { snapshot, branch, out } => {
            let snap = build_logic_graphs(&load_snapshot(&snapshot)?, branch)?;
            save_snapshot(&snap, out.as_deref().unwrap_or(&snapshot))?;
            print_json(&json!({
                "u2i_edges": snap.g_u2i().edge_count(),
                "i2u_edges": snap.g_i2u().edge_count(),
                "branch": branch,
            }))
        }
        Cmd::Distill {
            what,
            snapshot,
            data,
            kind,
            subset,
            epochs,
            lr,
            weight_decay,
            seed,
            provider,
        } => {
            let cfg = DistillConfig {
                lr,
                epochs,
                weight_decay,
                seed,
            };
            let mut snap = load_snapshot(&snapshot)?;
            let summary = match what {
                DistillWhat::Tags => {
                    let Some(data) = data else {
                        bail!("distill --what tags needs --data");
                    };
                    let ing = load_dir(&data, &snap)?;
                    let mut out = Vec::new();
                    for k in kinds(kind) {
                        let (next, trace) = distill_tag_kind(&ing.dataset, &snap, k, subset, &cfg)?;
                        snap = next;
                        out.push(json!({"kind": k, "loss_first": trace.first(), "loss_last": trace.last()}));
                    }
                    json!(out)
                }
                DistillWhat::Logic => {
                    let p = provider.build()?;
                    let fwd = collect_logic_pairs(&p, &snap, TagKind::UserRole, seed)?;
                    let back = collect_logic_pairs(&p, &snap, TagKind::ItemTopic, seed)?;
                    snap = distill_logic(&snap, &fwd, &back, &cfg)?;
                    json!({"u2i_pairs": fwd.len(), "i2u_pairs": back.len()})
                }
            };
            save_snapshot(&snap, &snapshot)?;
            print_json(&summary)
        }
        Cmd::Train {
            config,
            snapshot,
            data,
            out,
            trace,
        } => {
            let cfg: TrainingConfig = config::load(config.config.as_deref(), &config.sets)?;
            let snap = load_snapshot(&snapshot)?;
            let ing = load_dir(&data, &snap)?;
            let ctx = TagContext::build(&ing.dataset, &snap, &cfg)?;
            let result = train(&ing.dataset, &ctx, &cfg)?;
            let file = ModelFile {
                config: cfg,
                params: result.params,
            };
            file.save(&out).with_context(|| format!("writing {}", out.display()))?;
            if let Some(t) = trace {
                write_text(&t, &canonical_json(&result.trace)?)?;
            }
            let last = result.trace.last();
            print_json(&json!({
                "epochs": result.trace.len(),
                "initial_probe_ui": result.initial_probe_ui,
                "final_probe_ui": last.map(|s| s.probe_ui),
                "final_mean_total": last.map(|s| s.mean_total),
            }))
        }
        Cmd::Evaluate {
            config,
            snapshot,
            data,
            out,
        } => {
            let cfg: ExperimentConfig = config::load(config.config.as_deref(), &config.sets)?;
            let snap = load_snapshot(&snapshot)?;
            let ing = load_dir(&data, &snap)?;
            let result = match run_experiment(&ing.dataset, &snap, &cfg) {
                Ok(r) => r,
                Err(tagcf::Error::Experiment { seed, source, partial }) => {
                    write_text(&out, &partial.to_csv())?;
                    bail!("seed {seed} failed: {source}; partial results written to {}", out.display());
                }
                Err(e) => return Err(e.into()),
            };
            write_text(&out, &result.to_csv())?;
            print_json(&result.summary)
        }
        Cmd::Recommend {
            model,
            snapshot,
            data,
            user,
            candidates,
            mode,
            beta0,
            beta1,
            topn,
            k,
        } => {
            let file = ModelFile::load(&model).with_context(|| format!("loading {}", model.display()))?;
            let snap = load_snapshot(&snapshot)?;
            let ing = load_dir(&data, &snap)?;
            let ctx = TagContext::build(&ing.dataset, &snap, &file.config)?;
            let mode = match mode {
                ModeArg::Raw => Mode::Raw,
                ModeArg::Util => Mode::Util,
                ModeArg::Expl => Mode::Expl,
            };
            let (beta0, beta1) = match mode {
                Mode::Raw => (0.0, 0.0),
                Mode::Util => (beta0, 0.0),
                Mode::Expl => (beta0, beta1),
            };
            let cfg = InferenceConfig {
                beta0,
                beta1,
                mode,
                top_n: topn,
                k,
                ..InferenceConfig::raw(topn)
            };
            cfg.validate()?;
            let history = user_histories(&ing.dataset).remove(&user).unwrap_or_default();
            let pool: Vec<ItemId> = match candidates {
                Some(p) => read_candidates(&p)?,
                None => ing.dataset.items().keys().copied().collect(),
            };
            let scorer = Scorer::new(&file.params, &ctx, &snap);
            let uc = scorer.user_context(user, &history, &cfg)?;
            let ranked = scorer.rank(&uc, &pool, &cfg);
            let kind = ctx.kind;
            let name = |t: u32| snap.vocab(kind).text(t).map(str::to_string);
            let vname = |t: u32| snap.vocab(kind.opposite()).text(t).map(str::to_string);
            let tagset = |s: &tagcf::logic::WeightedTagSet| {
                s.ranked()
                    .into_iter()
                    .map(|(t, w)| json!({"tag": t, "text": name(t), "weight": w}))
                    .collect::<Vec<_>>()
            };
            let items: Vec<_> = ranked
                .entries
                .iter()
                .map(|e| {
                    let ex = scorer.explain(&uc, e.item, &cfg);
                    let contrib = |v: &[tagcf::inference::TagContribution]| {
                        v.iter()
                            .map(|c| json!({"tag": c.tag, "text": name(c.tag), "contribution": c.contribution}))
                            .collect::<Vec<_>>()
                    };
                    json!({
                        "item": e.item,
                        "score": e.score,
                        "raw": e.raw,
                        "tag0": e.tag0,
                        "tag1": e.tag1,
                        "explanation": {
                            "original": contrib(&ex.original),
                            "explored": contrib(&ex.explored),
                            "paths": ex.paths.iter().map(|p| json!({
                                "source": name(p.source),
                                "via": vname(p.via),
                                "target": name(p.target),
                                "weight": p.weight,
                            })).collect::<Vec<_>>(),
                        },
                    })
                })
                .collect();
            print_json(&json!({
                "user": user,
                "mode": mode,
                "beta0": beta0,
                "beta1": beta1,
                "history_len": history.len(),
                "original_tags": tagset(&uc.t0),
                "explored_tags": tagset(&uc.t1),
                "items": items,
            }))
        }
        Cmd::Stats {
            snapshot,
            data,
            kind,
            out,
        } => {
            let snap = load_snapshot(&snapshot)?;
            let ing = load_dir(&data, &snap)?;
            let kind: TagKind = kind.into();
            let stats = kb_stats(&snap, &ing.dataset.item_tag_mapping(kind));
            write_text(&out, &stats.to_csv())?;
            print_json(&json!({
                "tags": stats.tag_frequency.len(),
                "assignments": stats.total_assignments(),
                "cover_set": coverset_stats(snap.cover_set(kind), snap.history(kind)),
            }))
        }
        Cmd::Synth {
            config,
            seed,
            out,
            snapshot,
        } => {
            let cfg: SynthConfig = config::load(config.config.as_deref(), &config.sets)?;
            let g = synth_generate(&cfg, seed)?;
            write_dir(
                &out,
                &g.dataset,
                g.snapshot.vocab(TagKind::UserRole),
                g.snapshot.vocab(TagKind::ItemTopic),
            )?;
            write_text(&out.join("truth.json"), &canonical_json(&g.truth)?)?;
            save_snapshot(&g.snapshot, &snapshot)?;
            info!("wrote {} events to {}", g.dataset.events().len(), out.display());
            print_json(&json!({
                "users": g.dataset.users().len(),
                "items": g.dataset.items().len(),
                "events": g.dataset.events().len(),
                "overlap_point_biserial": tagcf::eval::overlap_point_biserial(&g),
            }))
        }
    }
}

fn read_candidates(path: &Path) -> Result<Vec<ItemId>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let id: ItemId = line
            .parse()
            .with_context(|| format!("{}:{}: `{line}` is not an item id", path.display(), n + 1))?;
        if seen.insert(id) {
            out.push(id);
        }
    }
    Ok(out)
}

fn main() {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => LevelFilter::Error,
        (false, 0) => LevelFilter::Info,
        (false, 1) => LevelFilter::Debug,
        (false, _) => LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
