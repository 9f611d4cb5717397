use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::config::{EncoderKind, LossConfig, MixtureScope};
use crate::decoders::Decoder;
use crate::encoders::{reparameterize, Encoder, EncoderInputs, Prepared, Psi};
use crate::error::{Error, Result};
use crate::graph::{dense_adjacency, Edge};
use crate::model::Model;
use crate::numerics::{math, Matrix, Tape, Var};
use crate::params::Bound;
use crate::rng::SeedRng;

/// `KL(N(μ, σ²) ‖ N(0, 1))` summed over all entries.
pub fn kl_gaussian(tape: &mut Tape, psi: Psi) -> Result<Var> {
    let two_ls = tape.scale(psi.log_sigma, 2.0);
    let var = tape.exp(two_ls);
    let mu2 = tape.square(psi.mu);
    let t = tape.add(var, mu2)?;
    let t = tape.sub(t, two_ls)?;
    let t = tape.add_scalar(t, -1.0);
    let s = tape.sum(t);
    Ok(tape.scale(s, 0.5))
}

/// Per-row `log N(z_i | μ_i, diag σ_i²)`, n×1.
pub fn gaussian_log_density(tape: &mut Tape, z: Var, psi: Psi) -> Result<Var> {
    let diff = tape.sub(z, psi.mu)?;
    let inv = tape.neg(psi.log_sigma);
    let inv = tape.exp(inv);
    let t = tape.mul(diff, inv)?;
    let sq = tape.square(t);
    let sq = tape.scale(sq, -0.5);
    let terms = tape.sub(sq, psi.log_sigma)?;
    let terms = tape.add_scalar(terms, -0.5 * math::LN_2PI);
    Ok(tape.row_sums(terms))
}

/// Per-row standard normal log density, n×1.
pub fn std_normal_log_density(tape: &mut Tape, z: Var) -> Var {
    let sq = tape.square(z);
    let sq = tape.scale(sq, -0.5);
    let terms = tape.add_scalar(sq, -0.5 * math::LN_2PI);
    tape.row_sums(terms)
}

/// `norm · Σ [pos_weight · A log P + (1 - A) log(1 - P)]` over every entry of `p`.
pub fn reconstruction_loglik(tape: &mut Tape, p: Var, a: &Matrix, pos_weight: f64, norm: f64) -> Result<Var> {
    let pos = a.map(|v| pos_weight * v);
    let neg = a.map(|v| 1.0 - v);
    weighted_loglik(tape, p, pos, neg, norm)
}

fn weighted_loglik(tape: &mut Tape, p: Var, pos: Matrix, neg: Matrix, norm: f64) -> Result<Var> {
    let p = tape.clamp(p, crate::decoders::PROB_EPS, 1.0 - crate::decoders::PROB_EPS);
    let lp = tape.log(p)?;
    let q = tape.neg(p);
    let q = tape.add_scalar(q, 1.0);
    let lq = tape.log(q)?;
    weighted_logs(tape, lp, lq, pos, neg, norm)
}

fn weighted_logs(tape: &mut Tape, lp: Var, lq: Var, pos: Matrix, neg: Matrix, norm: f64) -> Result<Var> {
    let pos = tape.constant(pos);
    let neg = tape.constant(neg);
    let a = tape.mul(lp, pos)?;
    let b = tape.mul(lq, neg)?;
    let t = tape.add(a, b)?;
    let s = tape.sum(t);
    Ok(tape.scale(s, norm))
}

/// `(pos_weight, norm)` for `positives` positive entries among `n²`:
/// `pos_weight = negatives / positives`, `norm = n² / (2 · negatives)`.
pub fn class_weights(n: usize, positives: usize) -> (f64, f64) {
    let total = (n * n) as f64;
    let pos = positives.max(1) as f64;
    let neg = (total - pos).max(1.0);
    (neg / pos, total / (2.0 * neg))
}

#[derive(Clone, Debug)]
enum Target {
    Dense { pos: Matrix, neg: Matrix },
    Sampled { n: usize, edges: Vec<Edge>, positives: Vec<Edge>, samples: usize },
}

/// Reconstruction target built from the training edges only.
#[derive(Clone, Debug)]
pub struct ReconTarget {
    target: Target,
    pos_weight: f64,
    norm: f64,
}

impl ReconTarget {
    pub fn new(n: usize, train_edges: &[Edge], cfg: &LossConfig) -> Self {
        let positives = 2 * train_edges.len() + if cfg.self_loops { n } else { 0 };
        let (pos_weight, norm) = class_weights(n, positives);
        let target = if n <= cfg.dense_limit {
            let mut a = dense_adjacency(n, train_edges);
            if cfg.self_loops {
                for i in 0..n {
                    a[(i, i)] = 1.0;
                }
            }
            Target::Dense { pos: a.map(|v| pos_weight * v), neg: a.map(|v| 1.0 - v) }
        } else {
            let mut positives: Vec<Edge> = train_edges.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
            if cfg.self_loops {
                positives.extend((0..n).map(|i| (i, i)));
            }
            positives.sort_unstable();
            let samples = (cfg.pairs_per_edge * train_edges.len()).max(1);
            Target::Sampled { n, edges: train_edges.to_vec(), positives, samples }
        };
        ReconTarget { target, pos_weight, norm }
    }

    pub fn pos_weight(&self) -> f64 {
        self.pos_weight
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn is_sampled(&self) -> bool {
        matches!(self.target, Target::Sampled { .. })
    }

    /// Log-likelihood of the target under latent `z`, plus the decoder's
    /// saturation flag. Sampled mode sums positives exactly and estimates the
    /// negative sum from uniformly drawn pairs.
    pub fn loglik(&self, tape: &mut Tape, decoder: &Decoder, bound: &Bound, z: Var, rng: &mut SeedRng) -> Result<(Var, bool)> {
        match &self.target {
            Target::Dense { pos, neg } => {
                let s = decoder.scores(tape, bound, z)?;
                decoder.weighted_loglik(tape, s, pos, neg, self.norm)
            }
            Target::Sampled { n, edges, positives, samples } => {
                let mut pairs: Vec<Edge> = edges.clone();
                let mut pos_w: Vec<f64> = alloc::vec![2.0 * self.pos_weight; edges.len()];
                let mut neg_w: Vec<f64> = alloc::vec![0.0; edges.len()];
                if positives.len() > 2 * edges.len() {
                    for i in 0..*n {
                        pairs.push((i, i));
                        pos_w.push(self.pos_weight);
                        neg_w.push(0.0);
                    }
                }
                let scale = (*n as f64) * (*n as f64) / *samples as f64;
                for _ in 0..*samples {
                    let pair = (rng.below(*n), rng.below(*n));
                    if positives.binary_search(&pair).is_err() {
                        pairs.push(pair);
                        pos_w.push(0.0);
                        neg_w.push(scale);
                    }
                }
                let s = decoder.pair_scores(tape, bound, z, &pairs)?;
                let m = pairs.len();
                let pos = Matrix::from_vec(m, 1, pos_w)?;
                let neg = Matrix::from_vec(m, 1, neg_w)?;
                decoder.weighted_loglik(tape, s, &pos, &neg, self.norm)
            }
        }
    }
}

/// Per-step estimator settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Objective {
    pub j: usize,
    pub k: usize,
    pub mixture: MixtureScope,
    pub kl_weight: f64,
}

impl Objective {
    pub fn from_loss(cfg: &LossConfig, k: usize) -> Self {
        Objective { j: cfg.j, k, mixture: cfg.mixture, kl_weight: cfg.kl_weight }
    }
}

/// Estimate plus whether any decoder score saturated.
#[derive(Clone, Copy, Debug)]
pub struct Estimate {
    pub elbo: Var,
    pub saturated: bool,
}

fn check_j(obj: &Objective) -> Result<()> {
    if obj.j == 0 {
        return Err(Error::InvalidConfig("J must be at least 1".into()));
    }
    Ok(())
}

/// `E[log p(A | Z) + log p(Z) - log q̃(Z)]`, `q̃` the mixture of `q(Z | ψ⁽ᵏ⁾)`
/// over the draw that produced `Z` and `K` auxiliary draws; analytic KL when
/// `K = 0` or ψ is deterministic. Averaged over `J` repetitions.
pub fn surrogate_elbo(
    tape: &mut Tape,
    model: &Model,
    bound: &Bound,
    inputs: &EncoderInputs,
    target: &ReconTarget,
    obj: &Objective,
    rng: &mut SeedRng,
) -> Result<Estimate> {
    check_j(obj)?;
    let enc = model.encoder();
    let prep = enc.prepare(tape, bound, inputs)?;
    let mut total: Option<Var> = None;
    let mut saturated = false;
    for _ in 0..obj.j {
        let psi0 = enc.draw_psi(tape, bound, inputs, &prep, rng)?;
        let z = reparameterize(tape, psi0, rng)?;
        let (recon, sat) = target.loglik(tape, model.decoder(), bound, z, rng)?;
        saturated |= sat;
        let reg = if obj.k == 0 || !enc.is_stochastic() {
            let kl = kl_gaussian(tape, psi0)?;
            tape.neg(kl)
        } else {
            let log_q = match obj.mixture {
                MixtureScope::Joint => joint_mixture_log_density(tape, enc, bound, inputs, &prep, z, psi0, obj.k, rng)?,
                MixtureScope::PerNode => {
                    let mut comps = Vec::with_capacity(obj.k + 1);
                    comps.push(gaussian_log_density(tape, z, psi0)?);
                    for _ in 0..obj.k {
                        let psi = enc.draw_psi(tape, bound, inputs, &prep, rng)?;
                        comps.push(gaussian_log_density(tape, z, psi)?);
                    }
                    let c = tape.concat_cols(&comps)?;
                    let lse = tape.row_logsumexp(c);
                    let s = tape.sum(lse);
                    tape.add_scalar(s, -(inputs.n() as f64) * math::ln((obj.k + 1) as f64))
                }
            };
            let lp = std_normal_log_density(tape, z);
            let log_p = tape.sum(lp);
            tape.sub(log_p, log_q)?
        };
        let reg = tape.scale(reg, obj.kl_weight);
        let term = tape.add(recon, reg)?;
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    let elbo = tape.scale(total.expect("j >= 1"), 1.0 / obj.j as f64);
    Ok(Estimate { elbo, saturated })
}

/// `log (1/(K+1)) Σ_k Π_i N(z_i | ψ_k)` over `psi0` and `k` fresh draws.
/// Each auxiliary draw is backpropagated as soon as it is recorded and then
/// dropped from the tape, so memory does not grow with `k`; the softmax
/// weights are applied online against a running maximum.
#[allow(clippy::too_many_arguments)]
pub(crate) fn joint_mixture_log_density(
    tape: &mut Tape,
    enc: &Encoder,
    bound: &Bound,
    inputs: &EncoderInputs,
    prep: &Prepared,
    z: Var,
    psi0: Psi,
    k: usize,
    rng: &mut SeedRng,
) -> Result<Var> {
    let c0 = gaussian_log_density(tape, z, psi0)?;
    let mut max = tape.value(c0).sum();
    let mut denom = 1.0;
    let mut grads: BTreeMap<Var, Matrix> = BTreeMap::new();
    grads.insert(c0, Matrix::filled(inputs.n(), 1, 1.0));
    for _ in 0..k {
        let mark = tape.len();
        let psi = enc.draw_psi(tape, bound, inputs, prep, rng)?;
        let c = gaussian_log_density(tape, z, psi)?;
        let total = tape.sum(c);
        let s = tape.value(total).item();
        let seg = tape.backward_segment(total, mark)?;
        if s > max {
            let shrink = math::exp(max - s);
            grads.values_mut().for_each(|g| g.scale_in_place(shrink));
            denom *= shrink;
            max = s;
        }
        let w = math::exp(s - max);
        denom += w;
        for (v, mut g) in seg {
            g.scale_in_place(w);
            match grads.get_mut(&v) {
                Some(acc) => acc.add_assign(&g),
                None => {
                    grads.insert(v, g);
                }
            }
        }
    }
    let grads = grads
        .into_iter()
        .map(|(v, mut g)| {
            g.scale_in_place(1.0 / denom);
            (v, g)
        })
        .collect();
    let value = max + math::ln(denom) - math::ln((k + 1) as f64);
    Ok(tape.scalar_with_grads(value, grads))
}

/// `E[log p(A | z_K)] - E[log q_0(z_0) - Σ log-det - log p(z_K)]`, written as
/// reconstruction minus the analytic `KL(q_0 ‖ p)` plus the flow correction
/// `Σ log-det + log p(z_K) - log p(z_0)`.
pub fn nf_elbo(
    tape: &mut Tape,
    model: &Model,
    bound: &Bound,
    inputs: &EncoderInputs,
    target: &ReconTarget,
    obj: &Objective,
    rng: &mut SeedRng,
) -> Result<Estimate> {
    check_j(obj)?;
    let enc = model.encoder();
    let prep = enc.prepare(tape, bound, inputs)?;
    let mut total: Option<Var> = None;
    let mut saturated = false;
    for _ in 0..obj.j {
        let d = enc.draw(tape, bound, inputs, &prep, rng)?;
        let (recon, sat) = target.loglik(tape, model.decoder(), bound, d.z, rng)?;
        saturated |= sat;
        let kl = kl_gaussian(tape, d.psi)?;
        let reg = match d.log_det {
            Some(ld) => {
                let ld = tape.sum(ld);
                let pk = std_normal_log_density(tape, d.z);
                let pk = tape.sum(pk);
                let p0 = std_normal_log_density(tape, d.z0);
                let p0 = tape.sum(p0);
                let shift = tape.sub(pk, p0)?;
                let correction = tape.add(ld, shift)?;
                tape.sub(kl, correction)?
            }
            None => kl,
        };
        let reg = tape.scale(reg, obj.kl_weight);
        let term = tape.sub(recon, reg)?;
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    let elbo = tape.scale(total.expect("j >= 1"), 1.0 / obj.j as f64);
    Ok(Estimate { elbo, saturated })
}

/// The objective matching the model's encoder.
pub fn elbo(
    tape: &mut Tape,
    model: &Model,
    bound: &Bound,
    inputs: &EncoderInputs,
    target: &ReconTarget,
    obj: &Objective,
    rng: &mut SeedRng,
) -> Result<Estimate> {
    match model.encoder().kind() {
        EncoderKind::Nf => nf_elbo(tape, model, bound, inputs, target, obj, rng),
        _ => surrogate_elbo(tape, model, bound, inputs, target, obj, rng),
    }
}
