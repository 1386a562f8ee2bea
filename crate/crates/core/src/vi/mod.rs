//! Variational family, ELBO with reverse-mode gradients, Adam, and training.

mod adam;
mod checkpoint;
mod elbo;
mod train;
mod variational;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use elbo::{
    elbo_constant, elbo_estimate, elbo_with_noise, mc_noise, ElboEvaluation, ElboTerms, Observations, ParamLayout,
};
pub use train::{
    init_params, smoothed, train, train_from, write_elbo_trace, GammaMode, Progress, TrainConfig, TrainResult,
    SATURATED_THETA3,
};
pub use variational::{q_entropy, sample_q, sample_q_with_noise, VariationalParams};
