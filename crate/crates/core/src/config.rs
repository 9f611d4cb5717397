//! Model, loss and training settings. Every field has a default; with the
//! `serde` feature the structs (de)serialize with unknown keys rejected.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum EncoderKind {
    Vgae,
    #[default]
    Sigvae,
    NaiveSivi,
    Nf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum DecoderKind {
    #[default]
    InnerProduct,
    BernoulliPoisson,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum NoiseFamily {
    #[default]
    Bernoulli,
    Normal,
}

/// Noise concatenated to the node features of stochastic layers.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    /// Success probability for the Bernoulli family.
    pub p: f64,
    /// Noise columns per node; 0 removes the noise entirely.
    pub dim: usize,
    /// Inject into every stochastic layer rather than only the first.
    pub per_layer: bool,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { family: NoiseFamily::Bernoulli, p: 0.5, dim: 64, per_layer: true }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ModelConfig {
    pub encoder: EncoderKind,
    pub decoder: DecoderKind,
    pub latent_dim: usize,
    /// Widths of the GCN layers before the μ / log σ branches.
    pub hidden_dims: Vec<usize>,
    pub noise: NoiseSpec,
    /// Widths of the stochastic fully connected layers (naive SIVI only).
    pub naive_fc_dims: Vec<usize>,
    /// Number of planar flows (NF only).
    pub flows: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderKind::default(),
            decoder: DecoderKind::default(),
            latent_dim: 16,
            hidden_dims: vec![32],
            noise: NoiseSpec::default(),
            naive_fc_dims: vec![32],
            flows: 4,
        }
    }
}

impl ModelConfig {
    /// Noise actually injected by this encoder (VGAE and NF have none).
    pub fn effective_noise_dim(&self) -> usize {
        match self.encoder {
            EncoderKind::Sigvae | EncoderKind::NaiveSivi => self.noise.dim,
            EncoderKind::Vgae | EncoderKind::Nf => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum KSchedule {
    Constant,
    /// Linear ramp from 1 to `k` over the first third of the epochs.
    #[default]
    Ramp,
}

/// Which density the auxiliary ψ draws mix over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum MixtureScope {
    /// Mixture of whole-graph densities `q(Z | ψ⁽ᵏ⁾)`.
    #[default]
    Joint,
    /// Independent mixture per node, `Π_i (1/(K+1)) Σ_k q(z_i | ψ_i⁽ᵏ⁾)`.
    PerNode,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct LossConfig {
    /// Outer ψ draws per step.
    pub j: usize,
    /// Auxiliary ψ draws for the mixture density (maximum when ramped).
    pub k: usize,
    pub k_schedule: KSchedule,
    pub mixture: MixtureScope,
    pub kl_weight: f64,
    /// Count node self-pairs as positives in the reconstruction target.
    pub self_loops: bool,
    /// Above this many nodes the reconstruction term subsamples pairs.
    pub dense_limit: usize,
    /// Sampled pairs per training edge in subsampled mode.
    pub pairs_per_edge: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            j: 1,
            k: 50,
            k_schedule: KSchedule::Ramp,
            mixture: MixtureScope::Joint,
            kl_weight: 1.0,
            self_loops: true,
            dense_limit: 4000,
            pairs_per_edge: 16,
        }
    }
}

impl LossConfig {
    /// Auxiliary draw count at `epoch` of `epochs`.
    pub fn k_at(&self, epoch: usize, epochs: usize) -> usize {
        match self.k_schedule {
            KSchedule::Constant => self.k,
            KSchedule::Ramp => {
                if self.k == 0 {
                    return 0;
                }
                let ramp = (epochs / 3).max(1);
                if epoch >= ramp {
                    self.k
                } else {
                    1 + (self.k - 1) * epoch / ramp
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Posterior samples averaged for validation and test scores.
    pub eval_samples: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 3500, learning_rate: 0.0005, patience: 200, eval_samples: 15, seed: 0 }
    }
}

/// Two-stage schedule for graphs without attributes: learn a wide embedding
/// with light noise, then retrain on it as node features.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TwoStageConfig {
    pub enabled: bool,
    pub stage1_latent: usize,
    pub stage1_noise_dim: usize,
    pub stage2_latent: usize,
    pub stage2_noise_dim: usize,
    /// Ablation: skip stage 1 and keep identity features.
    pub skip_stage1: bool,
    /// Stage-1 epoch budget; `None` reuses the training epochs.
    pub stage1_epochs: Option<usize>,
}

impl Default for TwoStageConfig {
    fn default() -> Self {
        TwoStageConfig {
            enabled: false,
            stage1_latent: 128,
            stage1_noise_dim: 5,
            stage2_latent: 16,
            stage2_noise_dim: 64,
            skip_stage1: false,
            stage1_epochs: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_ramp() {
        let cfg = LossConfig { k: 50, ..Default::default() };
        assert_eq!(cfg.k_at(0, 300), 1);
        assert_eq!(cfg.k_at(50, 300), 25);
        assert_eq!(cfg.k_at(100, 300), 50);
        assert_eq!(cfg.k_at(299, 300), 50);
        let c = LossConfig { k: 7, k_schedule: KSchedule::Constant, ..Default::default() };
        assert_eq!(c.k_at(0, 10), 7);
        assert_eq!(LossConfig { k: 0, ..Default::default() }.k_at(0, 10), 0);
    }
}
