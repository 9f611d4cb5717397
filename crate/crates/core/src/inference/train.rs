use alloc::vec::Vec;

use super::objectives::{elbo, Objective, ReconTarget};
use crate::config::{LossConfig, ModelConfig, TrainConfig, TwoStageConfig};
use crate::encoders::EncoderInputs;
use crate::error::{Error, Result};
use crate::eval::{auc, average_precision, LinkMetrics};
use crate::graph::{normalize_adjacency, EdgeSplit, Graph};
use crate::model::Model;
use crate::numerics::{AdamState, CsrMatrix, Matrix, Tape};
use crate::params::ParamSet;
use crate::rng::{mix_seed, SeedRng};

const STEP_SALT: u64 = 0x5e9;
const EVAL_SALT: u64 = 0xe7a1;
const STAGE2_SALT: u64 = 0x2;

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Negative ELBO estimate of the step.
    pub loss: f64,
    pub val_auc: f64,
    pub val_ap: f64,
    /// Auxiliary draws used this step.
    pub k: usize,
    pub saturated: bool,
}

/// Outcome of a training run; `snapshot` holds the best parameters, which
/// are also left installed in the model.
#[derive(Clone, Debug)]
pub struct TrainState {
    /// Epochs actually run.
    pub epoch: usize,
    /// 0 means the initial parameters were never beaten.
    pub best_epoch: usize,
    /// Validation AUC + AP at `best_epoch`.
    pub best_val_metric: f64,
    pub best_val: LinkMetrics,
    pub patience_counter: usize,
    pub seed: u64,
    pub snapshot: ParamSet,
    pub history: Vec<EpochRecord>,
    pub lr_halved: bool,
    pub stopped_early: bool,
}

/// Â from the training positives plus the given node features.
pub fn prepare_inputs(n: usize, split: &EdgeSplit, features: CsrMatrix) -> Result<EncoderInputs> {
    EncoderInputs::new(normalize_adjacency(n, &split.train_pos)?, features)
}

/// AUC and AP of mean posterior edge probabilities on the given positives
/// and negatives.
pub fn link_prediction_eval(
    model: &Model,
    inputs: &EncoderInputs,
    pos: &[(usize, usize)],
    neg: &[(usize, usize)],
    samples: usize,
    rng: &mut SeedRng,
) -> Result<LinkMetrics> {
    let pairs: Vec<_> = pos.iter().chain(neg).copied().collect();
    let scores = model.score_pairs(inputs, &pairs, samples, rng)?;
    let (p, q) = scores.split_at(pos.len());
    Ok(LinkMetrics { auc: auc(p, q)?, ap: average_precision(p, q)? })
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::NonFinite { .. } | Error::NonFiniteObjective { .. })
}

/// One optimizer step; returns `(elbo, saturated)`.
fn step(
    model: &mut Model,
    inputs: &EncoderInputs,
    target: &ReconTarget,
    obj: &Objective,
    adam: &mut AdamState,
    rng: &mut SeedRng,
) -> Result<(f64, bool)> {
    let mut tape = Tape::new();
    let bound = model.params().bind(&mut tape);
    let est = elbo(&mut tape, model, &bound, inputs, target, obj, rng)?;
    let value = tape.value(est.elbo).item();
    if !value.is_finite() {
        return Err(Error::NonFinite { what: "training objective".into() });
    }
    let loss = tape.scale(est.elbo, -1.0);
    tape.backward(loss)?;
    let grads: Vec<Matrix> = bound
        .vars()
        .iter()
        .zip(model.params().values())
        .map(|(&v, p)| tape.grad(v).cloned().unwrap_or_else(|| Matrix::zeros(p.rows(), p.cols())))
        .collect();
    adam.step(model.params_mut().values_mut(), &grads)?;
    Ok((value, est.saturated))
}

/// Full-batch Adam on the model's ELBO with validation early stopping.
///
/// Validation uses AUC + AP of mean probabilities over `eval_samples`
/// posterior draws. A non-finite step restores the best snapshot and halves
/// the learning rate once; a second one aborts with [`Error::Diverged`].
pub fn train(
    model: &mut Model,
    inputs: &EncoderInputs,
    split: &EdgeSplit,
    loss: &LossConfig,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainState> {
    if cfg.learning_rate <= 0.0 || !cfg.learning_rate.is_finite() {
        return Err(Error::InvalidConfig("learning rate must be positive".into()));
    }
    let n = inputs.n();
    let target = ReconTarget::new(n, &split.train_pos, loss);
    let mut step_rng = SeedRng::new(mix_seed(cfg.seed, STEP_SALT));
    let mut eval_rng = SeedRng::new(mix_seed(cfg.seed, EVAL_SALT));
    let samples = cfg.eval_samples.max(1);

    let initial = link_prediction_eval(model, inputs, &split.val_pos, &split.val_neg, samples, &mut eval_rng)?;
    let mut state = TrainState {
        epoch: 0,
        best_epoch: 0,
        best_val_metric: initial.auc + initial.ap,
        best_val: initial,
        patience_counter: 0,
        seed: cfg.seed,
        snapshot: model.params().clone(),
        history: Vec::new(),
        lr_halved: false,
        stopped_early: false,
    };
    let mut adam = AdamState::new(model.params().values(), cfg.learning_rate);

    for epoch in 1..=cfg.epochs {
        let k = loss.k_at(epoch - 1, cfg.epochs);
        let obj = Objective::from_loss(loss, k);
        let (value, saturated) = match step(model, inputs, &target, &obj, &mut adam, &mut step_rng) {
            Ok(v) => v,
            Err(e) if is_divergence(&e) => {
                if state.lr_halved {
                    *model.params_mut() = state.snapshot.clone();
                    return Err(Error::Diverged { epoch });
                }
                log::warn!("non-finite step at epoch {epoch}; restoring best parameters and halving the learning rate");
                *model.params_mut() = state.snapshot.clone();
                adam = AdamState::new(model.params().values(), adam.learning_rate * 0.5);
                state.lr_halved = true;
                continue;
            }
            Err(e) => return Err(e),
        };
        state.epoch = epoch;
        let val = match link_prediction_eval(model, inputs, &split.val_pos, &split.val_neg, samples, &mut eval_rng) {
            Ok(v) => v,
            Err(e) if is_divergence(&e) => LinkMetrics { auc: f64::NAN, ap: f64::NAN },
            Err(e) => return Err(e),
        };
        let record = EpochRecord { epoch, loss: -value, val_auc: val.auc, val_ap: val.ap, k, saturated };
        on_epoch(&record);
        state.history.push(record);
        let metric = val.auc + val.ap;
        // Ties move the snapshot forward but do not reset patience.
        if metric >= state.best_val_metric {
            state.best_val = val;
            state.best_epoch = epoch;
            state.snapshot = model.params().clone();
        }
        if metric > state.best_val_metric {
            state.best_val_metric = metric;
            state.patience_counter = 0;
        } else {
            state.patience_counter += 1;
            if state.patience_counter >= cfg.patience {
                state.stopped_early = true;
                break;
            }
        }
    }
    *model.params_mut() = state.snapshot.clone();
    Ok(state)
}

/// Result of [`train_two_stage`]: the stage-2 model, its inputs and the
/// learned feature matrix.
#[derive(Clone, Debug)]
pub struct TwoStageOutcome {
    pub stage1: Option<TrainState>,
    pub state: TrainState,
    pub model: Model,
    pub inputs: EncoderInputs,
    pub features: CsrMatrix,
}

/// Stage 1 learns a wide embedding with light noise on identity features;
/// its posterior-mean embedding becomes the node features of stage 2.
pub fn train_two_stage(
    model_cfg: &ModelConfig,
    two_stage: &TwoStageConfig,
    graph: &Graph,
    split: &EdgeSplit,
    loss: &LossConfig,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(usize, &EpochRecord),
) -> Result<TwoStageOutcome> {
    let n = graph.n();
    let mut stage1 = None;
    let features = if two_stage.skip_stage1 {
        graph.attributes().clone()
    } else {
        let mut c1 = model_cfg.clone();
        c1.latent_dim = two_stage.stage1_latent;
        c1.noise.dim = two_stage.stage1_noise_dim;
        let t1 = TrainConfig { epochs: two_stage.stage1_epochs.unwrap_or(cfg.epochs), ..cfg.clone() };
        let inputs = prepare_inputs(n, split, graph.attributes().clone())?;
        let mut m1 = Model::new(&c1, graph.attribute_dim(), t1.seed)?;
        let st = train(&mut m1, &inputs, split, loss, &t1, &mut |r| on_epoch(1, r))?;
        let mut rng = SeedRng::new(mix_seed(cfg.seed, EVAL_SALT ^ STAGE2_SALT));
        let emb = m1.mean_embedding(&inputs, cfg.eval_samples, &mut rng)?;
        stage1 = Some(st);
        CsrMatrix::from_dense(&emb)
    };
    let mut c2 = model_cfg.clone();
    c2.latent_dim = two_stage.stage2_latent;
    c2.noise.dim = two_stage.stage2_noise_dim;
    let t2 = TrainConfig { seed: mix_seed(cfg.seed, STAGE2_SALT), ..cfg.clone() };
    let inputs = prepare_inputs(n, split, features.clone())?;
    let mut model = Model::new(&c2, features.cols(), t2.seed)?;
    let state = train(&mut model, &inputs, split, loss, &t2, &mut |r| on_epoch(2, r))?;
    Ok(TwoStageOutcome { stage1, state, model, inputs, features })
}
