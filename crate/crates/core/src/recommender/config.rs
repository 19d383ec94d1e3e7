use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge::TagKind;
use crate::logic::ExplorationConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeqEncoderKind {
    MeanPool,
    LastItem,
    CausalAttention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub kind: SeqEncoderKind,
    pub layers: usize,
    pub heads: usize,
    /// Longest history the encoder sees; older items are dropped.
    pub max_len: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            kind: SeqEncoderKind::CausalAttention,
            layers: 1,
            heads: 1,
            max_len: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    pub fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Which tag kind the model is built around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// User-role tags.
    UT,
    /// Item-topic tags.
    IT,
}

impl Variant {
    pub fn tag_kind(self) -> TagKind {
        match self {
            Variant::UT => TagKind::UserRole,
            Variant::IT => TagKind::ItemTopic,
        }
    }
}

/// Source of `P(t|i)`: the learned item/tag embeddings, or the frozen distilled tagger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagProbSource {
    Embedding,
    Distilled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Plain gradient descent with decoupled weight decay.
    Sgd,
    /// Adam moments (0.9 / 0.999, eps 1e-8) with decoupled weight decay.
    Adam,
}

/// Shape of the network; stored with the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub d: usize,
    pub encoder: EncoderConfig,
    pub activation: Activation,
    /// `false` removes the tag-sequence path (the ID-only ablation).
    pub use_tag_encoder: bool,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            d: 64,
            encoder: EncoderConfig::default(),
            activation: Activation::Tanh,
            use_tag_encoder: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub arch: Architecture,
    pub lambda: f64,
    /// Tags kept per item and per user.
    pub k: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub neg_per_pos: usize,
    pub seed: u64,
    pub variant: Variant,
    pub tag_prob: TagProbSource,
    /// Train on merged original + explored tag sets.
    pub explore_tags: bool,
    pub exploration: ExplorationConfig,
    pub optimizer: OptimizerKind,
    /// Users per gradient step.
    pub batch_users: usize,
    /// Positive targets taken after each sampled history cut.
    pub targets_per_user: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            arch: Architecture::default(),
            lambda: 0.5,
            k: 5,
            lr: 1e-3,
            weight_decay: 1e-5,
            epochs: 10,
            neg_per_pos: 1,
            seed: 0,
            variant: Variant::UT,
            tag_prob: TagProbSource::Embedding,
            explore_tags: false,
            exploration: ExplorationConfig::default(),
            optimizer: OptimizerKind::Sgd,
            batch_users: 1,
            targets_per_user: 5,
        }
    }
}

impl TrainingConfig {
    /// The ID-only ablation: no contrastive term, no tag-sequence path.
    pub fn id_only(mut self) -> Self {
        self.lambda = 0.0;
        self.arch.use_tag_encoder = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lambda >= 0.0) {
            return fail("lambda must be non-negative");
        }
        if self.k == 0 {
            return fail("k must be at least 1");
        }
        if self.arch.d == 0 {
            return fail("embedding dimension must be positive");
        }
        if self.neg_per_pos != 1 {
            return fail("exactly one negative per positive is supported");
        }
        if self.batch_users == 0 || self.targets_per_user == 0 {
            return fail("batch_users and targets_per_user must be positive");
        }
        let enc = &self.arch.encoder;
        if enc.max_len == 0 {
            return fail("encoder max_len must be positive");
        }
        if enc.kind == SeqEncoderKind::CausalAttention {
            if enc.layers == 0 || enc.heads == 0 {
                return fail("attention encoder needs at least one layer and one head");
            }
            if self.arch.d % enc.heads != 0 {
                return fail("embedding dimension must be divisible by the head count");
            }
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return fail("lr must be positive and weight_decay non-negative");
        }
        self.exploration.validate()
    }
}
