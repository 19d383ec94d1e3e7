//! Multi-seed train/evaluate runs over a temporal split.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ingest::{quantile_boundary, temporal_split};
use super::metrics::{coverage_at, gini_at, mrr_at, ndcg_at};
use crate::error::{Error, Result};
use crate::inference::{InferenceConfig, Scorer};
use crate::knowledge::{Dataset, ItemId, KnowledgeSnapshot};
use crate::recommender::{config_hash, train, user_histories, ModelParameters, TagContext, TrainingConfig};
use crate::util::{canonical_json, mean_std, sha256_hex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmConfig {
    pub name: String,
    pub train: TrainingConfig,
    pub infer: InferenceConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub arms: Vec<ArmConfig>,
    /// Model seeds; the data and split stay fixed.
    pub seeds: Vec<u64>,
    pub cutoffs: Vec<usize>,
    /// Share of events (by time) in the training side of the split.
    pub train_fraction: f64,
    /// Run seeds on the rayon pool.
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            arms: Vec::new(),
            seeds: (0..5).collect(),
            cutoffs: vec![10, 20],
            train_fraction: 0.8,
            parallel: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.arms.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("experiment needs at least one arm and one seed".into()));
        }
        if self.cutoffs.is_empty() || self.cutoffs.contains(&0) {
            return Err(Error::Config("cutoffs must be non-empty and positive".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
        }
        let names: BTreeSet<&str> = self.arms.iter().map(|a| a.name.as_str()).collect();
        if names.len() != self.arms.len() {
            return Err(Error::Config("arm names must be unique".into()));
        }
        for a in &self.arms {
            a.train.validate()?;
            a.infer.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub arm: String,
    pub seed: u64,
    pub config_hash: String,
    /// `ndcg@10`, `mrr@20`, `coverage@10`, `gini@10`, ...
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub arm: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub reports: Vec<MetricReport>,
    pub summary: Vec<Summary>,
}

impl ExperimentResult {
    pub fn from_reports(mut reports: Vec<MetricReport>) -> Self {
        reports.sort_by(|a, b| (a.seed, &a.arm).cmp(&(b.seed, &b.arm)));
        let mut grouped: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
        for r in &reports {
            for (m, &v) in &r.values {
                grouped.entry((r.arm.as_str(), m.as_str())).or_default().push(v);
            }
        }
        let summary = grouped
            .into_iter()
            .map(|((arm, metric), v)| {
                let (mean, std) = mean_std(&v);
                Summary {
                    arm: arm.to_string(),
                    metric: metric.to_string(),
                    mean,
                    std,
                }
            })
            .collect();
        ExperimentResult { reports, summary }
    }

    pub fn mean(&self, arm: &str, metric: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.arm == arm && s.metric == metric)
            .map(|s| s.mean)
    }

    /// `arm,seed,metric,value` rows, per seed first, then `mean` and `std` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("arm,seed,metric,value\n");
        for r in &self.reports {
            for (m, v) in &r.values {
                let _ = writeln!(out, "{},{},{m},{v}", r.arm, r.seed);
            }
        }
        for s in &self.summary {
            let _ = writeln!(out, "{},mean,{},{}", s.arm, s.metric, s.mean);
            let _ = writeln!(out, "{},std,{},{}", s.arm, s.metric, s.std);
        }
        out
    }
}

/// Hash of an arm's full configuration.
pub fn arm_hash(arm: &ArmConfig) -> Result<String> {
    Ok(sha256_hex(canonical_json(&(&arm.train, &arm.infer))?.as_bytes()))
}

/// Rank the catalog minus each user's training history and score it against
/// their test positives. Users without test positives outside the history are skipped.
pub fn evaluate(
    params: &ModelParameters,
    ctx: &TagContext,
    snapshot: &KnowledgeSnapshot,
    train: &Dataset,
    test: &Dataset,
    infer: &InferenceConfig,
    cutoffs: &[usize],
) -> Result<BTreeMap<String, f64>> {
    infer.validate()?;
    let scorer = Scorer::new(params, ctx, snapshot);
    let histories = user_histories(train);
    let catalog: Vec<ItemId> = train.items().keys().copied().collect();
    let n_max = cutoffs.iter().copied().max().unwrap_or(0);
    let cfg = InferenceConfig { top_n: n_max, ..*infer };

    let mut relevant: BTreeMap<u64, BTreeSet<ItemId>> = BTreeMap::new();
    for e in test.events().iter().filter(|e| e.label) {
        relevant.entry(e.user_id).or_default().insert(e.item_id);
    }
    let mut lists = Vec::new();
    let mut rels = Vec::new();
    for (user, rel) in relevant {
        let Some(hist) = histories.get(&user) else { continue };
        let seen: BTreeSet<ItemId> = hist.iter().copied().collect();
        let rel: BTreeSet<ItemId> = rel.difference(&seen).copied().collect();
        if rel.is_empty() {
            continue;
        }
        let uc = scorer.user_context(user, hist, &cfg)?;
        let candidates: Vec<ItemId> = catalog.iter().copied().filter(|i| !seen.contains(i)).collect();
        lists.push(scorer.rank(&uc, &candidates, &cfg).items());
        rels.push(rel);
    }
    if lists.is_empty() {
        return Err(Error::Split("no test user has an unseen positive".into()));
    }
    let n_users = lists.len() as f64;
    let mut out = BTreeMap::new();
    for &n in cutoffs {
        let ndcg: f64 = lists.iter().zip(&rels).map(|(l, r)| ndcg_at(l, r, n)).sum();
        let mrr: f64 = lists.iter().zip(&rels).map(|(l, r)| mrr_at(l, r, n)).sum();
        out.insert(format!("ndcg@{n}"), ndcg / n_users);
        out.insert(format!("mrr@{n}"), mrr / n_users);
        out.insert(format!("coverage@{n}"), coverage_at(&lists, catalog.len(), n));
        out.insert(format!("gini@{n}"), gini_at(&lists, catalog.len(), n));
    }
    Ok(out)
}

struct Prepared<'a> {
    ds_train: Dataset,
    ds_test: Dataset,
    snapshot: &'a KnowledgeSnapshot,
    cfg: &'a ExperimentConfig,
}

impl Prepared<'_> {
    /// All arms for one seed; arms sharing a training configuration share one model.
    fn run_seed(&self, seed: u64) -> std::result::Result<Vec<MetricReport>, (Vec<MetricReport>, Error)> {
        let mut models: BTreeMap<String, (TagContext, ModelParameters)> = BTreeMap::new();
        let mut reports = Vec::new();
        for arm in &self.cfg.arms {
            let mut step = || -> Result<MetricReport> {
                let tcfg = TrainingConfig {
                    seed,
                    ..arm.train.clone()
                };
                let key = config_hash(&tcfg)?;
                if !models.contains_key(&key) {
                    let ctx = TagContext::build(&self.ds_train, self.snapshot, &tcfg)?;
                    let out = train(&self.ds_train, &ctx, &tcfg)?;
                    info!(
                        "seed {seed}, arm {}: probe ui {:.4} -> {:.4}",
                        arm.name,
                        out.initial_probe_ui,
                        out.trace.last().map_or(f64::NAN, |s| s.probe_ui)
                    );
                    models.insert(key.clone(), (ctx, out.params));
                }
                let (ctx, params) = &models[&key];
                let values = evaluate(
                    params,
                    ctx,
                    self.snapshot,
                    &self.ds_train,
                    &self.ds_test,
                    &arm.infer,
                    &self.cfg.cutoffs,
                )?;
                Ok(MetricReport {
                    arm: arm.name.clone(),
                    seed,
                    config_hash: arm_hash(&ArmConfig {
                        train: tcfg,
                        ..arm.clone()
                    })?,
                    values,
                })
            };
            match step() {
                Ok(r) => reports.push(r),
                Err(e) => return Err((reports, e)),
            }
        }
        Ok(reports)
    }
}

/// Train and evaluate every arm for every seed. On failure the error carries
/// the reports finished so far, from every seed.
pub fn run_experiment(ds: &Dataset, snapshot: &KnowledgeSnapshot, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let boundary =
        quantile_boundary(ds, cfg.train_fraction).ok_or_else(|| Error::Split("dataset has no events".into()))?;
    let (ds_train, ds_test) = temporal_split(ds, boundary)?;
    let prepared = Prepared {
        ds_train,
        ds_test,
        snapshot,
        cfg,
    };
    let runs: Vec<_> = if cfg.parallel {
        cfg.seeds.par_iter().map(|&s| (s, prepared.run_seed(s))).collect()
    } else {
        cfg.seeds.iter().map(|&s| (s, prepared.run_seed(s))).collect()
    };
    let mut reports = Vec::new();
    let mut failure = None;
    for (seed, run) in runs {
        match run {
            Ok(r) => reports.extend(r),
            Err((r, e)) => {
                reports.extend(r);
                failure.get_or_insert((seed, e));
            }
        }
    }
    let result = ExperimentResult::from_reports(reports);
    match failure {
        None => Ok(result),
        Some((seed, source)) => Err(Error::Experiment {
            seed,
            source: Box::new(source),
            partial: Box::new(result),
        }),
    }
}
