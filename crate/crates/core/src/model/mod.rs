//! The keyword-assisted embedded topic model: parameters, losses, training
//! and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod forward;
pub mod params;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::{GammaAlphaAxis, Precision, TrainConfig};
pub use forward::{
    compute_beta, encode, gamma_mu, infer_theta, infer_theta_batch, kl_to_standard_normal, l_alpha, l_mu,
    reconstruction_loglik, sample_theta, top_words, Batch, BatchLoss, DocInference, GuidedTargets, LossSettings,
    Objective, TopicWordDist,
};
pub use params::{EncoderParams, ModelDims, ModelParams, PARAM_NAMES};
pub use train::{train, EpochRecord, TrainInputs, TrainedModel};
