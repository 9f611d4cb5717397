//! Inference networks mapping a graph and its node attributes to Gaussian
//! posterior parameters ψ = (μ, log σ) and latent draws.
//!
//! All variants share a GCN stack whose layer `u` reads
//! `concat(X, ε_u, h_{u-1})`, then two GCN branches reading
//! `concat(X, h_L)`. VGAE is the noise-free stack; SIG-VAE injects noise into
//! the stack; naive SIVI keeps the stack noise-free and injects noise into
//! per-node fully connected layers; NF pushes the Gaussian draw through
//! planar flows.

mod flow;

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

pub use flow::{constrained_u, planar_step, projection_threshold, PlanarFlow};

use crate::config::{EncoderKind, ModelConfig, NoiseFamily, NoiseSpec};
use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::numerics::{CsrMatrix, Matrix, Tape, Var};
use crate::params::{glorot, Bound, ParamId, ParamSet};
use crate::rng::SeedRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

fn activate(tape: &mut Tape, x: Var, act: Activation) -> Var {
    match act {
        Activation::Relu => tape.relu(x),
        Activation::Tanh => tape.tanh(x),
        Activation::Identity => x,
    }
}

/// `activation(Â · H · W)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GcnLayer {
    pub weight: ParamId,
    pub activation: Activation,
}

impl GcnLayer {
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, adj: &NormalizedAdjacency, h: Var) -> Result<Var> {
        gcn_forward(tape, adj, h, bound.var(self.weight), self.activation)
    }
}

pub fn gcn_forward(tape: &mut Tape, adj: &NormalizedAdjacency, h: Var, weight: Var, act: Activation) -> Result<Var> {
    let hw = tape.matmul(h, weight)?;
    let out = tape.spmm(adj.matrix(), hw)?;
    Ok(activate(tape, out, act))
}

/// Graph-side inputs shared by every forward pass.
#[derive(Clone, Debug)]
pub struct EncoderInputs {
    pub adjacency: NormalizedAdjacency,
    pub features: Arc<CsrMatrix>,
}

impl EncoderInputs {
    pub fn new(adjacency: NormalizedAdjacency, features: CsrMatrix) -> Result<Self> {
        if features.rows() != adjacency.n() {
            return Err(Error::ShapeMismatch {
                op: "encoder inputs",
                lhs: (adjacency.n(), adjacency.n()),
                rhs: features.shape(),
            });
        }
        Ok(EncoderInputs { adjacency, features: Arc::new(features) })
    }

    pub fn n(&self) -> usize {
        self.adjacency.n()
    }
}

/// Posterior parameters of one ψ draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Psi {
    pub mu: Var,
    pub log_sigma: Var,
}

/// One draw through the encoder: ψ, the Gaussian sample `z0`, and for NF the
/// flowed sample with its summed n×1 log-determinant.
#[derive(Clone, Copy, Debug)]
pub struct LatentDraw {
    pub psi: Psi,
    pub z0: Var,
    pub z: Var,
    pub log_det: Option<Var>,
}

/// J draws sharing the same weights.
#[derive(Clone, Debug)]
pub struct EncoderOutput {
    pub draws: Vec<LatentDraw>,
}

/// `z = μ + exp(log σ) ∘ ε`.
pub fn reparameterize_with(tape: &mut Tape, psi: Psi, eps: Matrix) -> Result<Var> {
    let e = tape.constant(eps);
    let sigma = tape.exp(psi.log_sigma);
    let noise = tape.mul(sigma, e)?;
    tape.add(psi.mu, noise)
}

pub fn reparameterize(tape: &mut Tape, psi: Psi, rng: &mut SeedRng) -> Result<Var> {
    let (r, c) = tape.shape(psi.mu);
    reparameterize_with(tape, psi, rng.normal_matrix(r, c))
}

pub fn sample_noise(spec: &NoiseSpec, rows: usize, rng: &mut SeedRng) -> Matrix {
    match spec.family {
        NoiseFamily::Bernoulli => rng.bernoulli_matrix(rows, spec.dim, spec.p),
        NoiseFamily::Normal => rng.normal_matrix(rows, spec.dim),
    }
}

/// Weight split into consecutive row blocks: `[X rows | noise rows | hidden rows]`.
#[derive(Clone, Copy, Debug)]
struct Blocks {
    weight: ParamId,
    bias: Option<ParamId>,
    features: usize,
    noise: usize,
    hidden: usize,
}

impl Blocks {
    fn new(
        params: &mut ParamSet,
        name: &str,
        dims: (usize, usize, usize),
        out: usize,
        bias: bool,
        rng: &mut SeedRng,
    ) -> Self {
        let (features, noise, hidden) = dims;
        let weight = params.add(format!("{name}.weight"), glorot(features + noise + hidden, out, rng));
        let bias = bias.then(|| params.add(format!("{name}.bias"), Matrix::zeros(1, out)));
        Blocks { weight, bias, features, noise, hidden }
    }

    /// `X · W_X`, computed once per forward pass and reused across draws.
    fn feature_part(&self, tape: &mut Tape, bound: &Bound, x: &Arc<CsrMatrix>) -> Result<Option<Var>> {
        if self.features == 0 {
            return Ok(None);
        }
        let w = tape.slice_rows(bound.var(self.weight), 0, self.features)?;
        Ok(Some(tape.spmm(x, w)?))
    }

    fn dense_part(&self, tape: &mut Tape, bound: &Bound, input: Var, offset: usize, width: usize) -> Result<Var> {
        let w = tape.slice_rows(bound.var(self.weight), offset, offset + width)?;
        tape.matmul(input, w)
    }

    /// Pre-activation `concat(X, ε, h) · W (+ b)` given the cached feature part.
    fn combine(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        cached: Option<Var>,
        noise: Option<Var>,
        hidden: Option<Var>,
    ) -> Result<Var> {
        let mut acc = cached;
        if let (Some(e), true) = (noise, self.noise > 0) {
            let p = self.dense_part(tape, bound, e, self.features, self.noise)?;
            acc = Some(match acc {
                Some(a) => tape.add(a, p)?,
                None => p,
            });
        }
        if let (Some(h), true) = (hidden, self.hidden > 0) {
            let p = self.dense_part(tape, bound, h, self.features + self.noise, self.hidden)?;
            acc = Some(match acc {
                Some(a) => tape.add(a, p)?,
                None => p,
            });
        }
        let mut out = acc.ok_or(Error::InvalidConfig("layer with no inputs".into()))?;
        if let Some(b) = self.bias {
            out = tape.add(out, bound.var(b))?;
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
struct NaiveHead {
    fc: Vec<Blocks>,
    mu: Blocks,
    log_sigma: Blocks,
}

/// Any of the four inference networks; parameters live in a [`ParamSet`].
#[derive(Clone, Debug)]
pub struct Encoder {
    kind: EncoderKind,
    noise: NoiseSpec,
    latent_dim: usize,
    layers: Vec<Blocks>,
    mu: Blocks,
    log_sigma: Blocks,
    naive: Option<NaiveHead>,
    flows: Vec<PlanarFlow>,
}

/// Per-pass cache: feature products and any deterministic intermediate.
#[derive(Clone, Debug)]
pub struct Prepared {
    layer_x: Vec<Option<Var>>,
    mu_x: Option<Var>,
    log_sigma_x: Option<Var>,
    /// ψ when the encoder injects no noise.
    fixed: Option<Psi>,
    /// Naive SIVI: deterministic `h_L` and its contributions to each head layer.
    naive_hidden: Option<(Var, Vec<Var>, Var, Var)>,
}

impl Encoder {
    /// Registers the encoder's weights in `params` (deterministic given `rng`).
    pub fn new(cfg: &ModelConfig, attr_dim: usize, params: &mut ParamSet, rng: &mut SeedRng) -> Result<Self> {
        if cfg.latent_dim == 0 || attr_dim == 0 {
            return Err(Error::InvalidConfig("latent and attribute dimensions must be positive".into()));
        }
        if cfg.hidden_dims.contains(&0) || cfg.naive_fc_dims.contains(&0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        let mut noise = cfg.noise;
        noise.dim = cfg.effective_noise_dim();
        if noise.family == NoiseFamily::Bernoulli && !(0.0..=1.0).contains(&noise.p) {
            return Err(Error::InvalidConfig(format!("bernoulli noise p = {} outside [0, 1]", noise.p)));
        }
        let sigvae = cfg.encoder == EncoderKind::Sigvae;
        if sigvae && noise.dim > 0 && cfg.hidden_dims.is_empty() {
            return Err(Error::InvalidConfig("sigvae noise needs at least one hidden layer".into()));
        }
        let mut layers = Vec::with_capacity(cfg.hidden_dims.len());
        let mut prev = 0;
        for (u, &width) in cfg.hidden_dims.iter().enumerate() {
            let injects = sigvae && (u == 0 || noise.per_layer);
            let eps = if injects { noise.dim } else { 0 };
            layers.push(Blocks::new(params, &format!("gcn{u}"), (attr_dim, eps, prev), width, false, rng));
            prev = width;
        }
        let mu = Blocks::new(params, "mu", (attr_dim, 0, prev), cfg.latent_dim, false, rng);
        let log_sigma = Blocks::new(params, "log_sigma", (attr_dim, 0, prev), cfg.latent_dim, false, rng);
        let mut naive = None;
        if cfg.encoder == EncoderKind::NaiveSivi {
            if cfg.hidden_dims.is_empty() {
                return Err(Error::InvalidConfig("naive sivi needs at least one GCN layer".into()));
            }
            let mut fc = Vec::new();
            let mut width_prev = 0;
            for (t, &width) in cfg.naive_fc_dims.iter().enumerate() {
                fc.push(Blocks::new(params, &format!("fc{t}"), (width_prev, noise.dim, prev), width, true, rng));
                width_prev = width;
            }
            let mu = Blocks::new(params, "g_mu", (width_prev, 0, prev), cfg.latent_dim, true, rng);
            let ls = Blocks::new(params, "g_log_sigma", (width_prev, 0, prev), cfg.latent_dim, true, rng);
            naive = Some(NaiveHead { fc, mu, log_sigma: ls });
        }
        let mut flows = Vec::new();
        if cfg.encoder == EncoderKind::Nf {
            let small = |rng: &mut SeedRng| Matrix::from_fn(1, cfg.latent_dim, |_, _| 0.1 * (2.0 * rng.uniform() - 1.0));
            for k in 0..cfg.flows {
                let u = params.add(format!("flow{k}.u"), small(rng));
                let w = params.add(format!("flow{k}.w"), small(rng));
                let b = params.add(format!("flow{k}.b"), Matrix::zeros(1, 1));
                flows.push(PlanarFlow { u, w, b });
            }
        }
        Ok(Encoder { kind: cfg.encoder, noise, latent_dim: cfg.latent_dim, layers, mu, log_sigma, naive, flows })
    }

    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn flows(&self) -> &[PlanarFlow] {
        &self.flows
    }

    /// Noise actually consumed per ψ draw.
    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    /// Whether ψ varies between draws.
    pub fn is_stochastic(&self) -> bool {
        self.noise_slots() > 0
    }

    /// Number of noise matrices one ψ draw consumes.
    pub fn noise_slots(&self) -> usize {
        if self.noise.dim == 0 {
            return 0;
        }
        match &self.naive {
            Some(head) => head.fc.len(),
            None => self.layers.iter().filter(|l| l.noise > 0).count(),
        }
    }

    /// Fresh noise for one ψ draw, in slot order.
    pub fn sample_noise(&self, n: usize, rng: &mut SeedRng) -> Vec<Matrix> {
        (0..self.noise_slots()).map(|_| sample_noise(&self.noise, n, rng)).collect()
    }

    pub fn prepare(&self, tape: &mut Tape, bound: &Bound, inputs: &EncoderInputs) -> Result<Prepared> {
        let x = &inputs.features;
        let mut layer_x = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            layer_x.push(l.feature_part(tape, bound, x)?);
        }
        let mu_x = self.mu.feature_part(tape, bound, x)?;
        let log_sigma_x = self.log_sigma.feature_part(tape, bound, x)?;
        let mut prep = Prepared { layer_x, mu_x, log_sigma_x, fixed: None, naive_hidden: None };
        if let Some(head) = &self.naive {
            let h = self.stack(tape, bound, inputs, &prep, &[])?.expect("naive head has a GCN stack");
            let mut fc_h = Vec::with_capacity(head.fc.len());
            for b in &head.fc {
                fc_h.push(b.dense_part(tape, bound, h, b.features + b.noise, b.hidden)?);
            }
            let mu_h = head.mu.dense_part(tape, bound, h, head.mu.features, head.mu.hidden)?;
            let ls_h = head.log_sigma.dense_part(tape, bound, h, head.log_sigma.features, head.log_sigma.hidden)?;
            prep.naive_hidden = Some((h, fc_h, mu_h, ls_h));
        }
        if !self.is_stochastic() {
            prep.fixed = Some(self.psi_with_noise(tape, bound, inputs, &prep, &[])?);
        }
        Ok(prep)
    }

    /// GCN stack output `h_L` (None when there are no hidden layers).
    fn stack(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        inputs: &EncoderInputs,
        prep: &Prepared,
        noise: &[Var],
    ) -> Result<Option<Var>> {
        let mut h: Option<Var> = None;
        let mut slot = 0;
        for (u, l) in self.layers.iter().enumerate() {
            let eps = if l.noise > 0 && self.naive.is_none() {
                slot += 1;
                noise.get(slot - 1).copied()
            } else {
                None
            };
            let pre = l.combine(tape, bound, prep.layer_x[u], eps, h)?;
            let prop = tape.spmm(inputs.adjacency.matrix(), pre)?;
            let out = tape.relu(prop);
            if !tape.value(out).is_finite() {
                return Err(Error::NonFinite { what: format!("encoder GCN layer {u}") });
            }
            h = Some(out);
        }
        Ok(h)
    }

    /// ψ for one noise realization (`noise.len()` must equal [`Self::noise_slots`]).
    pub fn psi_with_noise(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        inputs: &EncoderInputs,
        prep: &Prepared,
        noise: &[Matrix],
    ) -> Result<Psi> {
        if let Some(psi) = prep.fixed {
            return Ok(psi);
        }
        if noise.len() != self.noise_slots() {
            return Err(Error::InvalidConfig(format!(
                "{} noise matrices supplied, encoder consumes {}",
                noise.len(),
                self.noise_slots()
            )));
        }
        let noise: Vec<Var> = noise.iter().map(|m| tape.constant(m.clone())).collect();
        let psi = match (&self.naive, &prep.naive_hidden) {
            (Some(head), Some((_, fc_h, mu_h, ls_h))) => {
                let mut ell: Option<Var> = None;
                for (t, b) in head.fc.iter().enumerate() {
                    let pre = b.combine(tape, bound, Some(fc_h[t]), noise.get(t).copied(), None)?;
                    let pre = match ell {
                        Some(prev) => {
                            let p = b.dense_part(tape, bound, prev, 0, b.features)?;
                            tape.add(pre, p)?
                        }
                        None => pre,
                    };
                    let out = tape.relu(pre);
                    if !tape.value(out).is_finite() {
                        return Err(Error::NonFinite { what: format!("encoder fully connected layer {t}") });
                    }
                    ell = Some(out);
                }
                let head_out = |tape: &mut Tape, blk: &Blocks, cached: Var| -> Result<Var> {
                    let mut out = blk.combine(tape, bound, Some(cached), None, None)?;
                    if let Some(prev) = ell {
                        let p = blk.dense_part(tape, bound, prev, 0, blk.features)?;
                        out = tape.add(out, p)?;
                    }
                    Ok(out)
                };
                let mu = head_out(tape, &head.mu, *mu_h)?;
                let log_sigma = head_out(tape, &head.log_sigma, *ls_h)?;
                Psi { mu, log_sigma }
            }
            _ => {
                let h = self.stack(tape, bound, inputs, prep, &noise)?;
                let adj = inputs.adjacency.matrix();
                let pre_mu = self.mu.combine(tape, bound, prep.mu_x, None, h)?;
                let mu = tape.spmm(adj, pre_mu)?;
                let pre_ls = self.log_sigma.combine(tape, bound, prep.log_sigma_x, None, h)?;
                let log_sigma = tape.spmm(adj, pre_ls)?;
                Psi { mu, log_sigma }
            }
        };
        if !tape.value(psi.mu).is_finite() || !tape.value(psi.log_sigma).is_finite() {
            return Err(Error::NonFinite { what: "encoder output branches".into() });
        }
        Ok(psi)
    }

    pub fn draw_psi(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        inputs: &EncoderInputs,
        prep: &Prepared,
        rng: &mut SeedRng,
    ) -> Result<Psi> {
        let noise = self.sample_noise(inputs.n(), rng);
        self.psi_with_noise(tape, bound, inputs, prep, &noise)
    }

    /// Pushes `z0` through the flows; identity (and no log-det) for non-NF encoders.
    pub fn apply_flows(&self, tape: &mut Tape, bound: &Bound, z0: Var) -> Result<(Var, Option<Var>)> {
        if self.kind != EncoderKind::Nf {
            return Ok((z0, None));
        }
        let mut z = z0;
        let mut total: Option<Var> = None;
        for f in &self.flows {
            let (next, ld) = f.forward(tape, bound, z)?;
            z = next;
            total = Some(match total {
                Some(t) => tape.add(t, ld)?,
                None => ld,
            });
        }
        let total = match total {
            Some(t) => t,
            None => tape.constant(Matrix::zeros(tape.shape(z0).0, 1)),
        };
        Ok((z, Some(total)))
    }

    /// One ψ draw followed by one reparameterized latent sample.
    pub fn draw(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        inputs: &EncoderInputs,
        prep: &Prepared,
        rng: &mut SeedRng,
    ) -> Result<LatentDraw> {
        let psi = self.draw_psi(tape, bound, inputs, prep, rng)?;
        let z0 = reparameterize(tape, psi, rng)?;
        let (z, log_det) = self.apply_flows(tape, bound, z0)?;
        Ok(LatentDraw { psi, z0, z, log_det })
    }

    /// `j` independent draws (`j ≥ 1`).
    pub fn encode(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        inputs: &EncoderInputs,
        j: usize,
        rng: &mut SeedRng,
    ) -> Result<EncoderOutput> {
        if j == 0 {
            return Err(Error::InvalidConfig("at least one ψ draw is required".into()));
        }
        let prep = self.prepare(tape, bound, inputs)?;
        let draws = (0..j).map(|_| self.draw(tape, bound, inputs, &prep, rng)).collect::<Result<_>>()?;
        Ok(EncoderOutput { draws })
    }
}
