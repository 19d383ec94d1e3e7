//! Tag-augmented sequential recommender with hand-written gradients.

mod config;
mod context;
mod encoder;
mod io;
mod loss;
mod model;
mod params;
mod tensor;
mod train;

pub use config::{
    Activation, Architecture, EncoderConfig, OptimizerKind, SeqEncoderKind, TagProbSource, TrainingConfig, Variant,
};
pub use context::TagContext;
pub use encoder::{backward_user, encode_item_tags, forward_user, ItemTagRows, UserForward};
pub use io::{config_hash, ModelFile, ModelHeader, MODEL_FORMAT_VERSION, MODEL_MAGIC};
pub use loss::{contrastive, loss_tags, loss_ui, loss_ui_grad, raw_score, select_tag_set, total_loss};
pub use model::{encode_user, loss_and_grad, LossMix, LossParts, Target, UserSample};
pub use params::{BlockParams, MlpParams, ModelParameters, SeqParams};
pub use tensor::{axpy, Tensor};
pub use train::{train, user_histories, EpochStats, TrainData, TrainOutput};
