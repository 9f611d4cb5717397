//! Variational objectives and training loops.

mod objectives;
mod train;

pub use objectives::{
    class_weights, elbo, gaussian_log_density, kl_gaussian, nf_elbo, reconstruction_loglik, std_normal_log_density,
    surrogate_elbo, Estimate, Objective, ReconTarget,
};
pub use train::{
    link_prediction_eval, prepare_inputs, train, train_two_stage, EpochRecord, TrainState, TwoStageOutcome,
};
