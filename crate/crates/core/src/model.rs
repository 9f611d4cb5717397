use alloc::format;
use alloc::vec::Vec;

use crate::config::ModelConfig;
use crate::decoders::{edge_probability, Decoder};
use crate::encoders::{Encoder, EncoderInputs};
use crate::error::{Error, Result};
use crate::graph::Edge;
use crate::numerics::{Matrix, Tape};
use crate::params::ParamSet;
use crate::rng::{mix_seed, SeedRng};

const INIT_SALT: u64 = 0x1417;

/// Encoder + decoder with their parameters.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    attr_dim: usize,
    params: ParamSet,
    encoder: Encoder,
    decoder: Decoder,
}

/// Values of one forward draw.
#[derive(Clone, Debug)]
pub struct PosteriorSample {
    pub mu: Matrix,
    pub log_sigma: Matrix,
    /// Latent sample after any flows.
    pub z: Matrix,
}

impl Model {
    /// Fresh weights, deterministic in `(config, attr_dim, seed)`.
    pub fn new(config: &ModelConfig, attr_dim: usize, seed: u64) -> Result<Self> {
        let mut params = ParamSet::new();
        let mut rng = SeedRng::new(mix_seed(seed, INIT_SALT));
        let encoder = Encoder::new(config, attr_dim, &mut params, &mut rng)?;
        let decoder = Decoder::new(config.decoder, config.latent_dim, &mut params);
        Ok(Model { config: config.clone(), attr_dim, params, encoder, decoder })
    }

    /// Rebuilds the architecture and installs saved values, checked by name and shape.
    pub fn from_params(config: &ModelConfig, attr_dim: usize, saved: ParamSet) -> Result<Self> {
        let mut model = Self::new(config, attr_dim, 0)?;
        if saved.len() != model.params.len() {
            return Err(Error::InvalidConfig(format!(
                "saved model has {} parameters, architecture expects {}",
                saved.len(),
                model.params.len()
            )));
        }
        for (name, value) in saved.iter() {
            let id = model
                .params
                .find(name)
                .ok_or_else(|| Error::InvalidConfig(format!("unexpected parameter {name}")))?;
            let slot = model.params.get_mut(id);
            if slot.shape() != value.shape() {
                return Err(Error::ShapeMismatch { op: "load parameter", lhs: slot.shape(), rhs: value.shape() });
            }
            *slot = value.clone();
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn attr_dim(&self) -> usize {
        self.attr_dim
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    /// Bernoulli-Poisson rates `r` (None for the inner-product decoder).
    pub fn r(&self) -> Option<Vec<f64>> {
        self.decoder.r(&self.params)
    }

    /// `count` forward draws (fresh noise and Gaussian sample each).
    pub fn sample_posterior(&self, inputs: &EncoderInputs, count: usize, rng: &mut SeedRng) -> Result<Vec<PosteriorSample>> {
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let prep = self.encoder.prepare(&mut tape, &bound, inputs)?;
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let d = self.encoder.draw(&mut tape, &bound, inputs, &prep, rng)?;
            out.push(PosteriorSample {
                mu: tape.value(d.psi.mu).clone(),
                log_sigma: tape.value(d.psi.log_sigma).clone(),
                z: tape.value(d.z).clone(),
            });
        }
        Ok(out)
    }

    /// Average of μ over `count` ψ draws.
    pub fn mean_embedding(&self, inputs: &EncoderInputs, count: usize, rng: &mut SeedRng) -> Result<Matrix> {
        let draws = self.sample_posterior(inputs, count.max(1), rng)?;
        let mut acc = Matrix::zeros(inputs.n(), self.config.latent_dim);
        for d in &draws {
            acc.add_assign(&d.mu);
        }
        acc.scale_in_place(1.0 / draws.len() as f64);
        Ok(acc)
    }

    /// Mean edge probability of each pair over `samples` posterior draws.
    pub fn score_pairs(&self, inputs: &EncoderInputs, pairs: &[Edge], samples: usize, rng: &mut SeedRng) -> Result<Vec<f64>> {
        let r = self.r();
        let draws = self.sample_posterior(inputs, samples.max(1), rng)?;
        let mut scores = alloc::vec![0.0; pairs.len()];
        for d in &draws {
            for (s, &(i, j)) in scores.iter_mut().zip(pairs) {
                *s += edge_probability(d.z.row(i), d.z.row(j), r.as_deref());
            }
        }
        let k = draws.len() as f64;
        scores.iter_mut().for_each(|s| *s /= k);
        Ok(scores)
    }
}
