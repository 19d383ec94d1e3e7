use serde::{Deserialize, Serialize};

use super::config::{Architecture, SeqEncoderKind};
use super::tensor::Tensor;
use crate::util::seeded_rng;

/// One causal self-attention block with a residual feed-forward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    pub ff1_w: Tensor,
    pub ff1_b: Tensor,
    pub ff2_w: Tensor,
    pub ff2_b: Tensor,
}

/// Sequence encoder weights. Empty for the pooling encoders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqParams {
    /// Learned positions, indexed by recency (0 = newest item).
    pub pos: Tensor,
    pub blocks: Vec<BlockParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    /// `d × 2d`
    pub w1: Tensor,
    pub b1: Tensor,
    /// `d × d`
    pub w2: Tensor,
    pub b2: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    pub arch: Architecture,
    /// Tag id for each row of `tag_emb`, ascending.
    pub tag_ids: Vec<u32>,
    pub item_emb: Tensor,
    pub tag_emb: Tensor,
    pub attn_w: Tensor,
    pub attn_b: Tensor,
    pub seq_x: SeqParams,
    pub seq_r: SeqParams,
    pub mlp: MlpParams,
}

impl ModelParameters {
    /// Uniform(−1/√d, 1/√d) initialization for every tensor.
    pub fn init(arch: Architecture, n_items: usize, tag_ids: &[u32], seed: u64) -> Self {
        let d = arch.d;
        let bound = 1.0 / (d as f64).sqrt();
        let mut rng = seeded_rng(seed);
        let mut u = |r: usize, c: usize| Tensor::uniform(r, c, bound, &mut rng);
        let item_emb = u(n_items, d);
        let tag_emb = u(tag_ids.len(), d);
        let attn_w = u(d, d);
        let attn_b = u(1, d);
        let mut seq = || {
            let enc = arch.encoder;
            match enc.kind {
                SeqEncoderKind::CausalAttention => SeqParams {
                    pos: u(enc.max_len, d),
                    blocks: (0..enc.layers)
                        .map(|_| BlockParams {
                            wq: u(d, d),
                            wk: u(d, d),
                            wv: u(d, d),
                            wo: u(d, d),
                            ff1_w: u(d, d),
                            ff1_b: u(1, d),
                            ff2_w: u(d, d),
                            ff2_b: u(1, d),
                        })
                        .collect(),
                },
                _ => SeqParams {
                    pos: Tensor::zeros(0, d),
                    blocks: Vec::new(),
                },
            }
        };
        let seq_x = seq();
        let seq_r = seq();
        let mlp = MlpParams {
            w1: u(d, 2 * d),
            b1: u(1, d),
            w2: u(d, d),
            b2: u(1, d),
        };
        let mut tag_ids = tag_ids.to_vec();
        tag_ids.sort_unstable();
        ModelParameters {
            arch,
            tag_ids,
            item_emb,
            tag_emb,
            attn_w,
            attn_b,
            seq_x,
            seq_r,
            mlp,
        }
    }

    pub fn d(&self) -> usize {
        self.arch.d
    }

    pub fn n_items(&self) -> usize {
        self.item_emb.rows
    }

    pub fn tag_row(&self, tag: u32) -> Option<usize> {
        self.tag_ids.binary_search(&tag).ok()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|_, t| t.fill(0.0));
        z
    }

    /// Visit every tensor with a stable group name.
    pub fn for_each<'a>(&'a self, mut f: impl FnMut(&str, &'a Tensor)) {
        f("item_emb", &self.item_emb);
        f("tag_emb", &self.tag_emb);
        f("attn_w", &self.attn_w);
        f("attn_b", &self.attn_b);
        for (name, seq) in [("seq_x", &self.seq_x), ("seq_r", &self.seq_r)] {
            f(&format!("{name}.pos"), &seq.pos);
            for (l, b) in seq.blocks.iter().enumerate() {
                for (n, t) in block_tensors(b) {
                    f(&format!("{name}.{l}.{n}"), t);
                }
            }
        }
        f("mlp.w1", &self.mlp.w1);
        f("mlp.b1", &self.mlp.b1);
        f("mlp.w2", &self.mlp.w2);
        f("mlp.b2", &self.mlp.b2);
    }

    /// Mutable twin of [`ModelParameters::for_each`]; same order and names.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&str, &mut Tensor)) {
        f("item_emb", &mut self.item_emb);
        f("tag_emb", &mut self.tag_emb);
        f("attn_w", &mut self.attn_w);
        f("attn_b", &mut self.attn_b);
        for (name, seq) in [("seq_x", &mut self.seq_x), ("seq_r", &mut self.seq_r)] {
            f(&format!("{name}.pos"), &mut seq.pos);
            for (l, b) in seq.blocks.iter_mut().enumerate() {
                for (n, t) in block_tensors_mut(b) {
                    f(&format!("{name}.{l}.{n}"), t);
                }
            }
        }
        f("mlp.w1", &mut self.mlp.w1);
        f("mlp.b1", &mut self.mlp.b1);
        f("mlp.w2", &mut self.mlp.w2);
        f("mlp.b2", &mut self.mlp.b2);
    }

    /// Pairwise visit of `self` and a same-shaped `other`.
    pub fn zip_mut(&mut self, other: &ModelParameters, mut f: impl FnMut(&mut Tensor, &Tensor)) {
        let mut others = Vec::new();
        other.for_each(|_, t| others.push(t));
        let mut others = others.into_iter();
        self.for_each_mut(|_, t| f(t, others.next().expect("parameter shapes differ")));
    }

    pub fn num_params(&self) -> usize {
        let mut n = 0;
        self.for_each(|_, t| n += t.len());
        n
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.for_each(|_, t| ok &= t.all_finite());
        ok
    }
}

fn block_tensors(b: &BlockParams) -> [(&'static str, &Tensor); 8] {
    [
        ("wq", &b.wq),
        ("wk", &b.wk),
        ("wv", &b.wv),
        ("wo", &b.wo),
        ("ff1_w", &b.ff1_w),
        ("ff1_b", &b.ff1_b),
        ("ff2_w", &b.ff2_w),
        ("ff2_b", &b.ff2_b),
    ]
}

fn block_tensors_mut(b: &mut BlockParams) -> [(&'static str, &mut Tensor); 8] {
    [
        ("wq", &mut b.wq),
        ("wk", &mut b.wk),
        ("wv", &mut b.wv),
        ("wo", &mut b.wo),
        ("ff1_w", &mut b.ff1_w),
        ("ff1_b", &mut b.ff1_b),
        ("ff2_w", &mut b.ff2_w),
        ("ff2_b", &mut b.ff2_b),
    ]
}
