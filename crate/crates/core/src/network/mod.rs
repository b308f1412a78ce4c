//! The learned solver: feature extraction, an LSTM encoder predicting latent
//! means and deviations, three MLP decoders (query, key, step size),
//! dot-product attention over the bundle's keys, a simplex normalizer in
//! place of the master problem, soft center updates, unrolled rollouts and
//! end-to-end training.

pub mod features;
mod model;
pub mod params;
mod rollout;
mod train;

pub use features::{extract_features, FeatureInputs, FEATURE_COUNT};
pub use model::{
    attention_scores, decode, encode_step, lstm_zero_state, normalize, sample_latents,
    soft_center_update, LatentChunks, LatentMode, LstmState, Psi,
};
pub use params::{BoundParams, NetDims, NetParams, ParamId, CHECKPOINT_FORMAT, PARAM_COUNT};
pub use rollout::{discounted_loss, rollout, RolloutOptions, RolloutOutput};
pub use train::{train, TrainConfig, TrainLogRow};
