use std::collections::{BTreeMap, BTreeSet};

use log::{debug, info};
use rand::seq::{IteratorRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{OptimizerKind, TrainingConfig};
use super::context::TagContext;
use super::model::{loss_and_grad, LossMix, LossParts, Target, UserSample};
use super::params::ModelParameters;
use crate::error::{Error, Result};
use crate::knowledge::{Dataset, ItemId, UserId};
use crate::util::seeded_rng;

const PROBE_USERS: usize = 256;
const PROBE_SEED_SALT: u64 = 0x5eed_0f_9b0be;

/// Chronological positive interactions per user plus the item catalog.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub users: Vec<(UserId, Vec<(ItemId, f64)>)>,
    seen: Vec<BTreeSet<ItemId>>,
    pub catalog: Vec<ItemId>,
}

impl TrainData {
    pub fn from_dataset(ds: &Dataset) -> Self {
        let mut users = Vec::new();
        let mut seen = Vec::new();
        for (u, events) in ds.histories() {
            let items: Vec<(ItemId, f64)> = events.iter().filter(|e| e.label).map(|e| (e.item_id, e.weight)).collect();
            if items.is_empty() {
                continue;
            }
            seen.push(items.iter().map(|p| p.0).collect());
            users.push((u, items));
        }
        TrainData {
            users,
            seen,
            catalog: ds.items().keys().copied().collect(),
        }
    }

    fn sample_negative(&self, user_idx: usize, rng: &mut impl Rng) -> Option<ItemId> {
        let seen = &self.seen[user_idx];
        if seen.len() >= self.catalog.len() {
            return None;
        }
        loop {
            let i = *self.catalog.choose(rng)?;
            if !seen.contains(&i) {
                return Some(i);
            }
        }
    }

    /// Targets `cut..cut+len` after the history `..cut`.
    fn sample(
        &self,
        user_idx: usize,
        cut: usize,
        len: usize,
        ctx: &TagContext,
        rng: &mut impl Rng,
    ) -> Option<UserSample> {
        let (user, items) = &self.users[user_idx];
        let history: Vec<ItemId> = items[..cut].iter().map(|p| p.0).collect();
        let mut targets = Vec::new();
        let mut user_pos = BTreeSet::new();
        let mut neg_items = Vec::new();
        for &(item, weight) in items.iter().skip(cut).take(len) {
            let negative = self.sample_negative(user_idx, rng)?;
            let pos_tags = ctx.item_pos[item as usize].clone();
            let neg_tags = sample_tag_negatives(&ctx.tag_ids, &pos_tags, rng);
            user_pos.extend(pos_tags.iter().copied());
            neg_items.push(negative);
            targets.push(Target {
                item,
                weight,
                negative,
                pos_tags,
                neg_tags,
            });
        }
        if targets.is_empty() {
            return None;
        }
        let user_neg: BTreeSet<u32> = neg_items
            .iter()
            .flat_map(|&i| ctx.item_pos[i as usize].iter().copied())
            .filter(|t| !user_pos.contains(t))
            .collect();
        Some(UserSample {
            user: *user,
            history,
            targets,
            user_pos_tags: user_pos.into_iter().collect(),
            user_neg_tags: user_neg.into_iter().collect(),
        })
    }
}

/// Uniform sample of `|pos|` tags from `tags ∖ pos`.
fn sample_tag_negatives(tags: &[u32], pos: &[u32], rng: &mut impl Rng) -> Vec<u32> {
    let mut out = tags
        .iter()
        .copied()
        .filter(|t| pos.binary_search(t).is_err())
        .choose_multiple(rng, pos.len());
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub samples: usize,
    /// Mean per-sample loss components over the epoch.
    pub mean_ui: f64,
    pub mean_ut: f64,
    pub mean_it: f64,
    pub mean_total: f64,
    /// Mean `ℒ_ui` on the fixed probe samples after the epoch.
    pub probe_ui: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: ModelParameters,
    /// Probe `ℒ_ui` before the first update.
    pub initial_probe_ui: f64,
    pub trace: Vec<EpochStats>,
}

struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    wd: f64,
    m: Option<ModelParameters>,
    v: Option<ModelParameters>,
    t: i32,
}

impl Optimizer {
    fn new(cfg: &TrainingConfig, p: &ModelParameters) -> Self {
        let adam = cfg.optimizer == OptimizerKind::Adam;
        Optimizer {
            kind: cfg.optimizer,
            lr: cfg.lr,
            wd: cfg.weight_decay,
            m: adam.then(|| p.zeros_like()),
            v: adam.then(|| p.zeros_like()),
            t: 0,
        }
    }

    fn step(&mut self, p: &mut ModelParameters, g: &ModelParameters) {
        let (lr, wd) = (self.lr, self.wd);
        match self.kind {
            OptimizerKind::Sgd => p.zip_mut(g, |w, gw| {
                for (x, d) in w.data.iter_mut().zip(&gw.data) {
                    *x -= lr * (d + wd * *x);
                }
            }),
            OptimizerKind::Adam => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                self.t += 1;
                let (c1, c2) = (1.0 - B1.powi(self.t), 1.0 - B2.powi(self.t));
                let m = self.m.as_mut().expect("adam state");
                let v = self.v.as_mut().expect("adam state");
                m.zip_mut(g, |mw, gw| {
                    for (a, d) in mw.data.iter_mut().zip(&gw.data) {
                        *a = B1 * *a + (1.0 - B1) * d;
                    }
                });
                v.zip_mut(g, |vw, gw| {
                    for (a, d) in vw.data.iter_mut().zip(&gw.data) {
                        *a = B2 * *a + (1.0 - B2) * d * d;
                    }
                });
                let mut ms = Vec::new();
                m.for_each(|_, t| ms.push(t));
                let mut ms = ms.into_iter();
                p.zip_mut(v, |w, vw| {
                    let mw = ms.next().expect("adam state shape");
                    for ((x, a), b) in w.data.iter_mut().zip(&mw.data).zip(&vw.data) {
                        *x -= lr * ((a / c1) / ((b / c2).sqrt() + EPS) + wd * *x);
                    }
                });
            }
        }
    }
}

/// Fixed evaluation samples: each user's last positive as target, older items as history.
fn probe_samples(data: &TrainData, ctx: &TagContext, seed: u64) -> Vec<UserSample> {
    let mut rng = seeded_rng(seed ^ PROBE_SEED_SALT);
    let mut idx: Vec<usize> = (0..data.users.len()).filter(|&u| data.users[u].1.len() >= 2).collect();
    idx.shuffle(&mut rng);
    idx.truncate(PROBE_USERS);
    idx.sort_unstable();
    idx.into_iter()
        .filter_map(|u| {
            let n = data.users[u].1.len();
            data.sample(u, n - 1, 1, ctx, &mut rng)
        })
        .collect()
}

fn mean_probe_ui(p: &ModelParameters, ctx: &TagContext, probe: &[UserSample]) -> Result<f64> {
    if probe.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for s in probe {
        total += loss_and_grad(p, ctx, s, LossMix::objective(0.0), None)?.ui;
    }
    Ok(total / probe.len() as f64)
}

/// Train on every user's chronological positives.
///
/// Each epoch splits every user's sequence after the first item into
/// consecutive chunks of `targets_per_user` targets (the first chunk has a
/// random shorter length), predicting each chunk from the items before it.
/// Samples are shuffled across users and grouped into mini-batches of
/// `batch_users` samples.
pub fn train(ds: &Dataset, ctx: &TagContext, cfg: &TrainingConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    let data = TrainData::from_dataset(ds);
    let n_items = ds.item_capacity().max(ctx.n_items());
    if ctx.n_items() < n_items {
        return Err(Error::Shape {
            expected: n_items,
            found: ctx.n_items(),
        });
    }
    let mut params = ModelParameters::init(cfg.arch, n_items, &ctx.tag_ids, cfg.seed);
    let mut opt = Optimizer::new(cfg, &params);
    let mut rng = seeded_rng(cfg.seed);
    let mix = LossMix::objective(cfg.lambda);
    let probe = probe_samples(&data, ctx, cfg.seed);
    let initial_probe_ui = mean_probe_ui(&params, ctx, &probe)?;
    info!(
        "training {} users, {} items, {} tags, {} parameters; probe ui {:.4}",
        data.users.len(),
        n_items,
        ctx.tag_ids.len(),
        params.num_params(),
        initial_probe_ui
    );

    let chunk = cfg.targets_per_user;
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut plan: Vec<(usize, usize, usize)> = Vec::new();
        for (u, (_, items)) in data.users.iter().enumerate() {
            let mut cut = 1;
            let mut len = rng.gen_range(1..=chunk);
            while cut < items.len() {
                plan.push((u, cut, len));
                cut += len;
                len = chunk;
            }
        }
        plan.shuffle(&mut rng);

        let mut sum = LossParts::default();
        let mut n = 0usize;
        let mut grads = params.zeros_like();
        let mut in_batch = 0usize;
        for (i, &(u, cut, len)) in plan.iter().enumerate() {
            let Some(sample) = data.sample(u, cut, len, ctx, &mut rng) else {
                continue;
            };
            let parts = loss_and_grad(&params, ctx, &sample, mix, Some(&mut grads))?;
            if !parts.total.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    loss: parts.total,
                });
            }
            sum += parts;
            n += 1;
            in_batch += 1;
            if in_batch == cfg.batch_users || i + 1 == plan.len() {
                grads.for_each_mut(|_, t| t.data.iter_mut().for_each(|x| *x /= in_batch as f64));
                opt.step(&mut params, &grads);
                grads.for_each_mut(|_, t| t.fill(0.0));
                in_batch = 0;
            }
        }
        if !params.all_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                loss: f64::NAN,
            });
        }
        let probe_ui = mean_probe_ui(&params, ctx, &probe)?;
        let denom = n.max(1) as f64;
        let stats = EpochStats {
            epoch,
            samples: n,
            mean_ui: sum.ui / denom,
            mean_ut: sum.ut / denom,
            mean_it: sum.it / denom,
            mean_total: sum.total / denom,
            probe_ui,
        };
        debug!("epoch {epoch}: {stats:?}");
        if !stats.mean_total.is_finite() || !probe_ui.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                loss: stats.mean_total,
            });
        }
        trace.push(stats);
    }
    Ok(TrainOutput {
        params,
        initial_probe_ui,
        trace,
    })
}

/// Per-user chronological positive items, for callers that need histories.
pub fn user_histories(ds: &Dataset) -> BTreeMap<UserId, Vec<ItemId>> {
    ds.histories()
        .into_iter()
        .map(|(u, ev)| (u, ev.iter().filter(|e| e.label).map(|e| e.item_id).collect::<Vec<_>>()))
        .filter(|(_, h)| !h.is_empty())
        .collect()
}
