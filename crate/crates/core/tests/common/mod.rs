#![allow(dead_code)]

pub mod suites;

use tagcf::knowledge::TagKind;
use tagcf::recommender::{
    loss_and_grad, Architecture, EncoderConfig, LossMix, ModelParameters, SeqEncoderKind, TagContext, Target, UserSample,
};

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central difference at `h` and `h / 2` combined by Richardson extrapolation (error `O(h⁴)`).
pub fn numeric_derivative(f: impl Fn(f64) -> f64) -> f64 {
    let h = 1e-4;
    let d = |h: f64| (f(h) - f(-h)) / (2.0 * h);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

/// Model with `d = 4`, six items, four tags, and a 3-item history sample with `k = 2` tags per item.
pub fn gradient_fixture(kind: SeqEncoderKind, layers: usize, heads: usize) -> (ModelParameters, TagContext, UserSample) {
    gradient_fixture_seeded(kind, layers, heads, 2024)
}

pub fn gradient_fixture_seeded(
    kind: SeqEncoderKind,
    layers: usize,
    heads: usize,
    seed: u64,
) -> (ModelParameters, TagContext, UserSample) {
    let arch = Architecture {
        d: 4,
        encoder: EncoderConfig {
            kind,
            layers,
            heads,
            max_len: 5,
        },
        ..Default::default()
    };
    let tags = [3, 8, 13, 21];
    let p = ModelParameters::init(arch, 6, &tags, seed);
    let mut ctx = TagContext::empty(TagKind::UserRole, 6);
    ctx.tag_ids = tags.to_vec();
    ctx.item_rows = vec![vec![0, 1], vec![1, 2], vec![2, 3], vec![3, 0], vec![0, 2], vec![1, 3]];
    let s = UserSample {
        user: 7,
        history: vec![0, 1, 2],
        targets: vec![
            Target {
                item: 3,
                weight: 1.7,
                negative: 5,
                pos_tags: vec![21, 3],
                neg_tags: vec![8, 13],
            },
            Target {
                item: 4,
                weight: 1.0,
                negative: 1,
                pos_tags: vec![3, 13],
                neg_tags: vec![8, 21],
            },
        ],
        user_pos_tags: vec![3, 13, 21],
        user_neg_tags: vec![8],
    };
    (p, ctx, s)
}

/// Largest relative error between the analytic gradient and central differences, over every parameter.
pub fn max_gradient_error(p: &ModelParameters, ctx: &TagContext, s: &UserSample, mix: LossMix) -> (f64, String) {
    let mut g = p.zeros_like();
    loss_and_grad(p, ctx, s, mix, Some(&mut g)).unwrap();
    let mut analytic = Vec::new();
    g.for_each(|name, t| analytic.push((name.to_string(), t.data.clone())));

    let mut worst = (0.0, String::new());
    for (ti, (name, grad)) in analytic.iter().enumerate() {
        for (j, &a) in grad.iter().enumerate() {
            let eval = |delta: f64| {
                let mut q = p.clone();
                let mut k = 0;
                q.for_each_mut(|_, t| {
                    if k == ti {
                        t.data[j] += delta;
                    }
                    k += 1;
                });
                loss_and_grad(&q, ctx, s, mix, None).unwrap().total
            };
            let numeric = numeric_derivative(eval);
            let e = rel_err(a, numeric);
            if e > worst.0 {
                worst = (e, format!("{name}[{j}]: analytic {a:e}, numeric {numeric:e}"));
            }
        }
    }
    worst
}
