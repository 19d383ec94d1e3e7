use super::context::TagContext;
use super::encoder::{backward_user, forward_user};
use super::loss::loss_ui_grad;
use super::params::ModelParameters;
use super::tensor::axpy;
use crate::error::Result;
use crate::knowledge::{ItemId, UserId};
use crate::util::{dot, neg_log_one_minus_sigmoid, neg_log_sigmoid, PROB_EPS};

/// One positive target with its sampled negative item and item-side tag sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub item: ItemId,
    pub weight: f64,
    pub negative: ItemId,
    pub pos_tags: Vec<u32>,
    pub neg_tags: Vec<u32>,
}

/// A user's history prefix, the targets that follow it, and user-side tag sets.
#[derive(Debug, Clone, PartialEq)]
pub struct UserSample {
    pub user: UserId,
    pub history: Vec<ItemId>,
    pub targets: Vec<Target>,
    pub user_pos_tags: Vec<u32>,
    pub user_neg_tags: Vec<u32>,
}

/// Loss components of one sample: `ui` and `it` are summed over targets.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub ui: f64,
    pub ut: f64,
    pub it: f64,
    pub total: f64,
}

impl std::ops::AddAssign for LossParts {
    fn add_assign(&mut self, o: Self) {
        self.ui += o.ui;
        self.ut += o.ut;
        self.it += o.it;
        self.total += o.total;
    }
}

/// Weights of the three loss terms: `ui·ℒ_ui + ut·ℒ_ut/|targets| + it·ℒ_it`.
///
/// The training objective is `{1, λ, λ}`; the other settings isolate one term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossMix {
    pub ui: f64,
    pub ut: f64,
    pub it: f64,
}

impl LossMix {
    pub fn objective(lambda: f64) -> Self {
        LossMix {
            ui: 1.0,
            ut: lambda,
            it: lambda,
        }
    }
}

/// `φ_u` for a chronological history.
pub fn encode_user(p: &ModelParameters, ctx: &TagContext, history: &[ItemId], user: UserId) -> Result<Vec<f64>> {
    Ok(forward_user(p, &ctx.item_rows, history, user)?.phi().to_vec())
}

fn clamped_nll(p: f64, positive: bool) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if positive {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Loss of one sample; accumulates `∂/∂params` into `grads` when given.
///
/// With a distilled tagger in `ctx`, the item-side tag loss reads the frozen
/// probabilities and contributes no gradient.
pub fn loss_and_grad(
    p: &ModelParameters,
    ctx: &TagContext,
    s: &UserSample,
    mix: LossMix,
    grads: Option<&mut ModelParameters>,
) -> Result<LossParts> {
    let fwd = forward_user(p, &ctx.item_rows, &s.history, s.user)?;
    let phi = fwd.phi();
    let d = p.d();
    let n_targets = s.targets.len();
    let mut dphi = vec![0.0; d];
    let mut item_grads: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut tag_grads: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut parts = LossParts::default();

    for t in &s.targets {
        let xp = p.item_emb.row(t.item as usize);
        let xn = p.item_emb.row(t.negative as usize);
        let (l, gp, gn) = loss_ui_grad(dot(phi, xp), dot(phi, xn), t.weight);
        parts.ui += l;
        if mix.ui != 0.0 {
            axpy(mix.ui * gp, xp, &mut dphi);
            axpy(mix.ui * gn, xn, &mut dphi);
            item_grads.push((t.item as usize, phi.iter().map(|v| mix.ui * gp * v).collect()));
            item_grads.push((t.negative as usize, phi.iter().map(|v| mix.ui * gn * v).collect()));
        }

        for (tags, positive) in [(&t.pos_tags, true), (&t.neg_tags, false)] {
            for &tag in tags {
                let Some(row) = p.tag_row(tag) else { continue };
                if let Some(theta) = &ctx.theta {
                    parts.it += clamped_nll(theta.row(t.item as usize)[row], positive);
                    continue;
                }
                let e = p.tag_emb.row(row);
                let (l, g) = if positive {
                    neg_log_sigmoid(dot(xp, e))
                } else {
                    neg_log_one_minus_sigmoid(dot(xp, e))
                };
                parts.it += l;
                if mix.it != 0.0 && g != 0.0 {
                    item_grads.push((t.item as usize, e.iter().map(|v| mix.it * g * v).collect()));
                    tag_grads.push((row, xp.iter().map(|v| mix.it * g * v).collect()));
                }
            }
        }
    }

    let ut_scale = if n_targets == 0 { 0.0 } else { mix.ut / n_targets as f64 };
    for (tags, positive) in [(&s.user_pos_tags, true), (&s.user_neg_tags, false)] {
        for &tag in tags {
            let Some(row) = p.tag_row(tag) else { continue };
            let e = p.tag_emb.row(row);
            let (l, g) = if positive {
                neg_log_sigmoid(dot(phi, e))
            } else {
                neg_log_one_minus_sigmoid(dot(phi, e))
            };
            parts.ut += l;
            if ut_scale != 0.0 && g != 0.0 {
                axpy(ut_scale * g, e, &mut dphi);
                tag_grads.push((row, phi.iter().map(|v| ut_scale * g * v).collect()));
            }
        }
    }

    parts.total = mix.ui * parts.ui + ut_scale * parts.ut + mix.it * parts.it;

    if let Some(g) = grads {
        backward_user(p, &fwd, &dphi, g);
        for (row, v) in item_grads {
            axpy(1.0, &v, g.item_emb.row_mut(row));
        }
        for (row, v) in tag_grads {
            axpy(1.0, &v, g.tag_emb.row_mut(row));
        }
    }
    Ok(parts)
}
