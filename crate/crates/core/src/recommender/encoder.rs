//! Forward and backward passes of the tag attention encoder, the sequence
//! encoders and the fusion MLP.
//!
//! Matrices act on column vectors: `y = W x + b`, with `W` stored row-major as
//! `out × in`. Each `*_forward` returns a cache consumed by its `*_backward`,
//! which accumulates parameter gradients into a same-shaped parameter set and
//! returns the gradient w.r.t. its inputs.

use super::config::{Activation, EncoderConfig, SeqEncoderKind};
use super::params::{BlockParams, MlpParams, ModelParameters, SeqParams};
use super::tensor::{axpy, Tensor};
use crate::error::{Error, Result};
use crate::util::dot;

/// Attention pooling of `k` tag embeddings into one vector.
///
/// Logit `z_j` is the coordinate mean of `W e_j + b`; the output is the
/// softmax(z)-weighted sum of the embeddings.
pub fn encode_item_tags(tags: &[&[f64]], w: &Tensor, b: &[f64]) -> Vec<f64> {
    tag_attention(tags, w, b).0
}

fn tag_attention(tags: &[&[f64]], w: &Tensor, b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = b.len();
    if tags.is_empty() {
        return (vec![0.0; d], Vec::new());
    }
    let mut u = vec![0.0; d];
    let logits: Vec<f64> = tags
        .iter()
        .map(|e| {
            w.matvec(e, &mut u);
            (u.iter().sum::<f64>() + b.iter().sum::<f64>()) / d as f64
        })
        .collect();
    let alpha = softmax(&logits);
    let mut r = vec![0.0; d];
    for (a, e) in alpha.iter().zip(tags) {
        axpy(*a, e, &mut r);
    }
    (r, alpha)
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Gradient of a softmax input given the output and the output gradient.
fn softmax_backward(alpha: &[f64], dalpha: &[f64]) -> Vec<f64> {
    let inner: f64 = alpha.iter().zip(dalpha).map(|(a, g)| a * g).sum();
    alpha.iter().zip(dalpha).map(|(a, g)| a * (g - inner)).collect()
}

#[derive(Debug, Clone)]
pub(crate) struct TagAttnCache {
    rows: Vec<usize>,
    alpha: Vec<f64>,
    pub(crate) r: Vec<f64>,
}

pub(crate) fn item_tags_forward(p: &ModelParameters, rows: &[usize]) -> TagAttnCache {
    let tags: Vec<&[f64]> = rows.iter().map(|&r| p.tag_emb.row(r)).collect();
    let (r, alpha) = tag_attention(&tags, &p.attn_w, &p.attn_b.data);
    TagAttnCache {
        rows: rows.to_vec(),
        alpha,
        r,
    }
}

pub(crate) fn item_tags_backward(p: &ModelParameters, c: &TagAttnCache, dr: &[f64], g: &mut ModelParameters) {
    if c.rows.is_empty() {
        return;
    }
    let d = p.d();
    let dalpha: Vec<f64> = c.rows.iter().map(|&r| dot(dr, p.tag_emb.row(r))).collect();
    let dz = softmax_backward(&c.alpha, &dalpha);
    // d z_j / d W[a][c] = e_j[c] / d ; d z_j / d b[a] = 1 / d ; d z_j / d e_j[c] = Σ_a W[a][c] / d
    let mut col_sums = vec![0.0; d];
    p.attn_w.matvec_t_acc(&vec![1.0; d], &mut col_sums);
    for ((&row, &a), &dzj) in c.rows.iter().zip(&c.alpha).zip(&dz) {
        let scaled = dzj / d as f64;
        let e = p.tag_emb.row(row).to_vec();
        g.attn_w.add_outer(&vec![scaled; d], &e);
        g.attn_b.data.iter_mut().for_each(|x| *x += scaled);
        let ge = g.tag_emb.row_mut(row);
        axpy(a, dr, ge);
        axpy(scaled, &col_sums, ge);
    }
}

#[derive(Debug, Clone)]
struct BlockCache {
    x: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    /// `[head][i]` → attention weights over positions `0..=i`.
    a: Vec<Vec<Vec<f64>>>,
    o: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    g: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub(crate) struct SeqCache {
    n: usize,
    blocks: Vec<BlockCache>,
    pub(crate) out: Vec<f64>,
}

fn linear(w: &Tensor, b: Option<&Tensor>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; w.rows];
    w.matvec(x, &mut y);
    if let Some(b) = b {
        axpy(1.0, &b.data, &mut y);
    }
    y
}

fn block_forward(p: &BlockParams, heads: usize, x: Vec<Vec<f64>>) -> (BlockCache, Vec<Vec<f64>>) {
    let n = x.len();
    let d = p.wq.rows;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q: Vec<_> = x.iter().map(|xi| linear(&p.wq, None, xi)).collect();
    let k: Vec<_> = x.iter().map(|xi| linear(&p.wk, None, xi)).collect();
    let v: Vec<_> = x.iter().map(|xi| linear(&p.wv, None, xi)).collect();
    let mut o = vec![vec![0.0; d]; n];
    let mut a = Vec::with_capacity(heads);
    for h in 0..heads {
        let span = h * dh..(h + 1) * dh;
        let mut ah = Vec::with_capacity(n);
        for i in 0..n {
            let s: Vec<f64> = (0..=i)
                .map(|j| dot(&q[i][span.clone()], &k[j][span.clone()]) * scale)
                .collect();
            let w = softmax(&s);
            for (j, wj) in w.iter().enumerate() {
                axpy(*wj, &v[j][span.clone()], &mut o[i][span.clone()]);
            }
            ah.push(w);
        }
        a.push(ah);
    }
    let z: Vec<Vec<f64>> = x
        .iter()
        .zip(&o)
        .map(|(xi, oi)| {
            let mut zi = linear(&p.wo, None, oi);
            axpy(1.0, xi, &mut zi);
            zi
        })
        .collect();
    let g: Vec<Vec<f64>> = z
        .iter()
        .map(|zi| linear(&p.ff1_w, Some(&p.ff1_b), zi).into_iter().map(f64::tanh).collect())
        .collect();
    let y: Vec<Vec<f64>> = z
        .iter()
        .zip(&g)
        .map(|(zi, gi)| {
            let mut yi = linear(&p.ff2_w, Some(&p.ff2_b), gi);
            axpy(1.0, zi, &mut yi);
            yi
        })
        .collect();
    (BlockCache { x, q, k, v, a, o, z, g }, y)
}

fn block_backward(p: &BlockParams, heads: usize, c: &BlockCache, dy: &[Vec<f64>], gp: &mut BlockParams) -> Vec<Vec<f64>> {
    let n = c.x.len();
    let d = p.wq.rows;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    // y = z + W2 g + b2,  g = tanh(W1 z + b1)
    let mut dz: Vec<Vec<f64>> = dy.to_vec();
    for i in 0..n {
        if dy[i].iter().all(|&x| x == 0.0) {
            continue;
        }
        gp.ff2_w.add_outer(&dy[i], &c.g[i]);
        axpy(1.0, &dy[i], &mut gp.ff2_b.data);
        let mut dg = vec![0.0; d];
        p.ff2_w.matvec_t_acc(&dy[i], &mut dg);
        let dpre: Vec<f64> = dg.iter().zip(&c.g[i]).map(|(g, y)| g * (1.0 - y * y)).collect();
        gp.ff1_w.add_outer(&dpre, &c.z[i]);
        axpy(1.0, &dpre, &mut gp.ff1_b.data);
        p.ff1_w.matvec_t_acc(&dpre, &mut dz[i]);
    }

    // z = x + Wo o
    let mut dx = dz.clone();
    let mut do_: Vec<Vec<f64>> = vec![vec![0.0; d]; n];
    for i in 0..n {
        gp.wo.add_outer(&dz[i], &c.o[i]);
        p.wo.matvec_t_acc(&dz[i], &mut do_[i]);
    }

    let mut dq = vec![vec![0.0; d]; n];
    let mut dk = vec![vec![0.0; d]; n];
    let mut dv = vec![vec![0.0; d]; n];
    for h in 0..heads {
        let span = h * dh..(h + 1) * dh;
        for i in 0..n {
            let doi = &do_[i][span.clone()];
            if doi.iter().all(|&x| x == 0.0) {
                continue;
            }
            let ai = &c.a[h][i];
            let da: Vec<f64> = (0..=i).map(|j| dot(doi, &c.v[j][span.clone()])).collect();
            for (j, aij) in ai.iter().enumerate() {
                axpy(*aij, doi, &mut dv[j][span.clone()]);
            }
            let ds = softmax_backward(ai, &da);
            for (j, dsj) in ds.iter().enumerate() {
                let f = dsj * scale;
                let kj = c.k[j][span.clone()].to_vec();
                axpy(f, &kj, &mut dq[i][span.clone()]);
                let qi = c.q[i][span.clone()].to_vec();
                axpy(f, &qi, &mut dk[j][span.clone()]);
            }
        }
    }
    for i in 0..n {
        gp.wq.add_outer(&dq[i], &c.x[i]);
        gp.wk.add_outer(&dk[i], &c.x[i]);
        gp.wv.add_outer(&dv[i], &c.x[i]);
        p.wq.matvec_t_acc(&dq[i], &mut dx[i]);
        p.wk.matvec_t_acc(&dk[i], &mut dx[i]);
        p.wv.matvec_t_acc(&dv[i], &mut dx[i]);
    }
    dx
}

/// Encode a chronological sequence (oldest first) into one vector.
pub(crate) fn seq_forward(p: &SeqParams, enc: &EncoderConfig, inputs: &[Vec<f64>]) -> SeqCache {
    let n = inputs.len();
    debug_assert!(n >= 1);
    let d = inputs[0].len();
    match enc.kind {
        SeqEncoderKind::MeanPool => {
            let mut out = vec![0.0; d];
            for x in inputs {
                axpy(1.0 / n as f64, x, &mut out);
            }
            SeqCache { n, blocks: Vec::new(), out }
        }
        SeqEncoderKind::LastItem => SeqCache {
            n,
            blocks: Vec::new(),
            out: inputs[n - 1].clone(),
        },
        SeqEncoderKind::CausalAttention => {
            let mut x: Vec<Vec<f64>> = inputs
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    let mut xi = e.clone();
                    axpy(1.0, p.pos.row(n - 1 - i), &mut xi);
                    xi
                })
                .collect();
            let mut blocks = Vec::with_capacity(p.blocks.len());
            for b in &p.blocks {
                let (cache, y) = block_forward(b, enc.heads, x);
                blocks.push(cache);
                x = y;
            }
            SeqCache {
                n,
                blocks,
                out: x.pop().expect("non-empty sequence"),
            }
        }
    }
}

/// Returns the gradient for each input position.
pub(crate) fn seq_backward(
    p: &SeqParams,
    enc: &EncoderConfig,
    c: &SeqCache,
    dout: &[f64],
    gp: &mut SeqParams,
) -> Vec<Vec<f64>> {
    let n = c.n;
    let d = dout.len();
    match enc.kind {
        SeqEncoderKind::MeanPool => vec![dout.iter().map(|g| g / n as f64).collect(); n],
        SeqEncoderKind::LastItem => {
            let mut dx = vec![vec![0.0; d]; n];
            dx[n - 1] = dout.to_vec();
            dx
        }
        SeqEncoderKind::CausalAttention => {
            let mut dy = vec![vec![0.0; d]; n];
            dy[n - 1] = dout.to_vec();
            for (l, (b, cache)) in p.blocks.iter().zip(&c.blocks).enumerate().rev() {
                dy = block_backward(b, enc.heads, cache, &dy, &mut gp.blocks[l]);
            }
            for (i, dxi) in dy.iter().enumerate() {
                axpy(1.0, dxi, gp.pos.row_mut(n - 1 - i));
            }
            dy
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct MlpCache {
    z: Vec<f64>,
    h: Vec<f64>,
    pub(crate) out: Vec<f64>,
}

pub(crate) fn mlp_forward(p: &MlpParams, act: Activation, z: Vec<f64>) -> MlpCache {
    let h: Vec<f64> = linear(&p.w1, Some(&p.b1), &z)
        .into_iter()
        .map(|x| act.apply(x))
        .collect();
    let out = linear(&p.w2, Some(&p.b2), &h);
    MlpCache { z, h, out }
}

pub(crate) fn mlp_backward(p: &MlpParams, act: Activation, c: &MlpCache, dout: &[f64], gp: &mut MlpParams) -> Vec<f64> {
    gp.w2.add_outer(dout, &c.h);
    axpy(1.0, dout, &mut gp.b2.data);
    let mut dh = vec![0.0; c.h.len()];
    p.w2.matvec_t_acc(dout, &mut dh);
    let dpre: Vec<f64> = dh
        .iter()
        .zip(&c.h)
        .map(|(g, y)| g * act.grad_from_output(*y))
        .collect();
    gp.w1.add_outer(&dpre, &c.z);
    axpy(1.0, &dpre, &mut gp.b1.data);
    let mut dz = vec![0.0; c.z.len()];
    p.w1.matvec_t_acc(&dpre, &mut dz);
    dz
}

/// Per-item tag rows (into `tag_emb`) used by the tag-sequence path.
pub type ItemTagRows = Vec<Vec<usize>>;

/// Everything the backward pass needs from one user encoding.
#[derive(Debug, Clone)]
pub struct UserForward {
    history: Vec<u32>,
    tag_caches: Vec<TagAttnCache>,
    seq_x: SeqCache,
    seq_r: Option<SeqCache>,
    mlp: MlpCache,
}

impl UserForward {
    pub fn phi(&self) -> &[f64] {
        &self.mlp.out
    }

    /// ID-path user encoding `x_u`.
    pub fn x_u(&self) -> &[f64] {
        &self.seq_x.out
    }

    /// Tag-path user encoding `r_u`; zero when the path is disabled.
    pub fn r_u(&self) -> Vec<f64> {
        self.seq_r
            .as_ref()
            .map_or_else(|| vec![0.0; self.seq_x.out.len()], |c| c.out.clone())
    }
}

/// `φ_u = MLP(SeqEnc_x(x_history) ⊕ SeqEnc_r(r_history))`.
///
/// Only the newest `max_len` history items are used.
pub fn forward_user(p: &ModelParameters, item_tags: &ItemTagRows, history: &[u32], user: u64) -> Result<UserForward> {
    if history.is_empty() {
        return Err(Error::ColdStart(user));
    }
    let start = history.len().saturating_sub(p.arch.encoder.max_len);
    let history = &history[start..];
    for &i in history {
        if i as usize >= p.n_items() {
            return Err(Error::RejectedInput {
                index: i as usize,
                reason: format!("item {i} has no embedding"),
            });
        }
    }
    let xs: Vec<Vec<f64>> = history.iter().map(|&i| p.item_emb.row(i as usize).to_vec()).collect();
    let seq_x = seq_forward(&p.seq_x, &p.arch.encoder, &xs);

    let (tag_caches, seq_r) = if p.arch.use_tag_encoder {
        let caches: Vec<TagAttnCache> = history
            .iter()
            .map(|&i| item_tags_forward(p, item_tags.get(i as usize).map_or(&[][..], Vec::as_slice)))
            .collect();
        let rs: Vec<Vec<f64>> = caches.iter().map(|c| c.r.clone()).collect();
        let seq_r = seq_forward(&p.seq_r, &p.arch.encoder, &rs);
        (caches, Some(seq_r))
    } else {
        (Vec::new(), None)
    };

    let mut z = seq_x.out.clone();
    match &seq_r {
        Some(c) => z.extend_from_slice(&c.out),
        None => z.extend(std::iter::repeat(0.0).take(p.d())),
    }
    let mlp = mlp_forward(&p.mlp, p.arch.activation, z);
    Ok(UserForward {
        history: history.to_vec(),
        tag_caches,
        seq_x,
        seq_r,
        mlp,
    })
}

/// Accumulate `∂L/∂params` given `∂L/∂φ_u`.
pub fn backward_user(p: &ModelParameters, fwd: &UserForward, dphi: &[f64], g: &mut ModelParameters) {
    let d = p.d();
    let dz = mlp_backward(&p.mlp, p.arch.activation, &fwd.mlp, dphi, &mut g.mlp);
    let dxs = seq_backward(&p.seq_x, &p.arch.encoder, &fwd.seq_x, &dz[..d], &mut g.seq_x);
    for (&i, dx) in fwd.history.iter().zip(&dxs) {
        axpy(1.0, dx, g.item_emb.row_mut(i as usize));
    }
    if let Some(seq_r) = &fwd.seq_r {
        let drs = seq_backward(&p.seq_r, &p.arch.encoder, seq_r, &dz[d..], &mut g.seq_r);
        for (cache, dr) in fwd.tag_caches.iter().zip(&drs) {
            item_tags_backward(p, cache, dr, g);
        }
    }
}
