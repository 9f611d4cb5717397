//! Edge-probability models `p(A_ij = 1 | z_i, z_j)`.
//!
//! Inner product: `sigmoid(z_i · z_j)`.
//! Bernoulli-Poisson: `1 - exp(-exp(Σ_k r_k z_ik z_jk))`, `r = softplus(r_raw)`.

use alloc::vec::Vec;

use crate::config::DecoderKind;
use crate::error::Result;
use crate::graph::{Edge, Graph};
use crate::numerics::{math, Matrix, Tape, Var};
use crate::params::{Bound, ParamId, ParamSet};
use crate::rng::SeedRng;

/// Upper clamp on the Bernoulli-Poisson score `s`; far beyond where the
/// probability rounds to 1.
pub const SCORE_CLAMP: f64 = 30.0;
/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before logs.
pub const PROB_EPS: f64 = 1e-7;
/// Default threshold below which `r_k` is zeroed for generation.
pub const SHRINK_THRESHOLD: f64 = 0.01;

/// `1 - exp(-exp(s))`.
pub fn bp_link(s: f64) -> f64 {
    -libm::expm1(-math::exp(s.min(SCORE_CLAMP)))
}

pub fn link(kind: DecoderKind, s: f64) -> f64 {
    match kind {
        DecoderKind::InnerProduct => math::sigmoid(s),
        DecoderKind::BernoulliPoisson => bp_link(s),
    }
}

fn score(zi: &[f64], zj: &[f64], r: Option<&[f64]>) -> f64 {
    match r {
        Some(r) => zi.iter().zip(zj).zip(r).map(|((a, b), w)| w * a * b).sum(),
        None => zi.iter().zip(zj).map(|(a, b)| a * b).sum(),
    }
}

/// Probability of a single pair; `r = None` for the inner-product decoder.
pub fn edge_probability(zi: &[f64], zj: &[f64], r: Option<&[f64]>) -> f64 {
    match r {
        Some(_) => bp_link(score(zi, zj, r)),
        None => math::sigmoid(score(zi, zj, None)),
    }
}

/// `sigmoid(Z Zᵀ)`, filled symmetrically.
pub fn inner_product_decode(z: &Matrix) -> Matrix {
    probability_matrix(z, None).0
}

/// Bernoulli-Poisson probabilities and whether any score hit the clamp.
pub fn bernoulli_poisson_decode(z: &Matrix, r: &[f64]) -> (Matrix, bool) {
    probability_matrix(z, Some(r))
}

fn probability_matrix(z: &Matrix, r: Option<&[f64]>) -> (Matrix, bool) {
    let n = z.rows();
    let mut p = Matrix::zeros(n, n);
    let mut saturated = false;
    for i in 0..n {
        for j in i..n {
            let s = score(z.row(i), z.row(j), r);
            let v = match r {
                Some(_) => {
                    saturated |= s > SCORE_CLAMP;
                    bp_link(s)
                }
                None => math::sigmoid(s),
            };
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
    (p, saturated)
}

/// Draws each upper-triangle pair independently; the diagonal is ignored.
pub fn sample_adjacency(p: &Matrix, rng: &mut SeedRng) -> Result<Graph> {
    let n = p.rows();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.uniform() < p[(i, j)] {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, edges)
}

/// Zeroes every `r_k < threshold`.
pub fn shrink_r(r: &[f64], threshold: f64) -> Vec<f64> {
    r.iter().map(|&v| if v < threshold { 0.0 } else { v }).collect()
}

/// Decoder attached to a model; owns the `r_raw` parameter when Bernoulli-Poisson.
#[derive(Clone, Debug)]
pub struct Decoder {
    kind: DecoderKind,
    r_raw: Option<ParamId>,
}

/// Scores plus the saturation flag raised when any score was clamped.
#[derive(Clone, Copy, Debug)]
pub struct Decoded {
    /// Edge probabilities, clamped to `[PROB_EPS, 1 - PROB_EPS]`.
    pub prob: Var,
    pub saturated: bool,
}

/// `log P` and `log(1 - P)` computed from the scores without cancellation,
/// each clamped as if `P` were clamped to `[PROB_EPS, 1 - PROB_EPS]`.
#[derive(Clone, Copy, Debug)]
pub struct LogProbs {
    pub log_p: Var,
    pub log_q: Var,
    pub saturated: bool,
}

impl Decoder {
    pub fn new(kind: DecoderKind, latent_dim: usize, params: &mut ParamSet) -> Self {
        let r_raw = match kind {
            // softplus(ln(e - 1)) = 1: start from the unweighted score.
            DecoderKind::BernoulliPoisson => {
                Some(params.add("decoder.r_raw", Matrix::filled(1, latent_dim, math::ln(core::f64::consts::E - 1.0))))
            }
            DecoderKind::InnerProduct => None,
        };
        Decoder { kind, r_raw }
    }

    pub fn kind(&self) -> DecoderKind {
        self.kind
    }

    pub fn r_raw(&self) -> Option<ParamId> {
        self.r_raw
    }

    /// Current `r = softplus(r_raw)`.
    pub fn r(&self, params: &ParamSet) -> Option<Vec<f64>> {
        self.r_raw.map(|id| params.get(id).as_slice().iter().map(|&x| math::softplus(x)).collect())
    }

    /// `Z` scaled columnwise by `r` (Bernoulli-Poisson) or `Z` itself.
    fn weighted(&self, tape: &mut Tape, bound: &Bound, z: Var) -> Result<Var> {
        match self.r_raw {
            Some(id) => {
                let r = tape.softplus(bound.var(id));
                tape.mul(z, r)
            }
            None => Ok(z),
        }
    }

    /// n×n score matrix `Z R Zᵀ`.
    pub fn scores(&self, tape: &mut Tape, bound: &Bound, z: Var) -> Result<Var> {
        let zr = self.weighted(tape, bound, z)?;
        tape.matmul_t(zr, z)
    }

    /// m×1 scores of the listed pairs.
    pub fn pair_scores(&self, tape: &mut Tape, bound: &Bound, z: Var, pairs: &[Edge]) -> Result<Var> {
        let rows: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let cols: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let zi = tape.gather_rows(z, &rows)?;
        let zj = tape.gather_rows(z, &cols)?;
        let zi = self.weighted(tape, bound, zi)?;
        let prod = tape.mul(zi, zj)?;
        Ok(tape.row_sums(prod))
    }

    pub fn log_probs(&self, tape: &mut Tape, s: Var) -> Result<LogProbs> {
        let (lo, hi) = (math::ln(PROB_EPS), math::ln_1p(-PROB_EPS));
        let (log_p, log_q, saturated) = match self.kind {
            DecoderKind::InnerProduct => {
                let neg = tape.neg(s);
                let sp = tape.softplus(neg);
                let log_p = tape.neg(sp);
                let sq = tape.softplus(s);
                (log_p, tape.neg(sq), false)
            }
            DecoderKind::BernoulliPoisson => {
                let saturated = tape.value(s).as_slice().iter().any(|&v| v > SCORE_CLAMP);
                let s = tape.clamp(s, f64::NEG_INFINITY, SCORE_CLAMP);
                let p = tape.bp_link(s);
                // Floor before the log; the result is clamped to `lo` anyway.
                let p = tape.clamp(p, PROB_EPS, 1.0);
                let log_p = tape.log(p)?;
                let rate = tape.exp(s);
                (log_p, tape.neg(rate), saturated)
            }
        };
        Ok(LogProbs { log_p: tape.clamp(log_p, lo, hi), log_q: tape.clamp(log_q, lo, hi), saturated })
    }

    /// `norm · Σ (pos ∘ log P + neg ∘ log(1 - P))` over scores `s` as a single
    /// tape node. Same values and gradients as summing [`Self::log_probs`],
    /// clamps included, without the per-entry temporaries.
    pub fn weighted_loglik(&self, tape: &mut Tape, s: Var, pos: &Matrix, neg: &Matrix, norm: f64) -> Result<(Var, bool)> {
        let (lo, hi) = (math::ln(PROB_EPS), math::ln_1p(-PROB_EPS));
        let inside = |v: f64| v >= lo && v <= hi;
        let x = tape.value(s);
        if pos.shape() != x.shape() || neg.shape() != x.shape() {
            return Err(crate::error::Error::ShapeMismatch { op: "weighted_loglik", lhs: x.shape(), rhs: pos.shape() });
        }
        let mut total = 0.0;
        let mut saturated = false;
        let mut grad = Matrix::zeros(x.rows(), x.cols());
        let terms = x.as_slice().iter().zip(pos.as_slice()).zip(neg.as_slice());
        for (((&xv, &wp), &wn), gv) in terms.zip(grad.as_mut_slice()) {
            let mut d = 0.0;
            match self.kind {
                DecoderKind::InnerProduct => {
                    // softplus(±x) and sigmoid(±x) all share exp(-|x|).
                    let e = math::exp(-xv.abs());
                    let l1 = math::ln_1p(e);
                    let inv = 1.0 / (1.0 + e);
                    let (sig, sig_neg) = if xv >= 0.0 { (inv, e * inv) } else { (e * inv, inv) };
                    if wp != 0.0 {
                        let lp = -((-xv).max(0.0) + l1);
                        total += wp * lp.clamp(lo, hi);
                        if inside(lp) {
                            d += wp * sig_neg;
                        }
                    }
                    if wn != 0.0 {
                        let lq = -(xv.max(0.0) + l1);
                        total += wn * lq.clamp(lo, hi);
                        if inside(lq) {
                            d -= wn * sig;
                        }
                    }
                }
                DecoderKind::BernoulliPoisson => {
                    saturated |= xv > SCORE_CLAMP;
                    let live = xv <= SCORE_CLAMP;
                    let xc = xv.min(SCORE_CLAMP);
                    let rate = math::exp(xc);
                    if wp != 0.0 {
                        let p = -libm::expm1(-rate);
                        let pc = p.clamp(PROB_EPS, 1.0);
                        let lp = math::ln(pc);
                        total += wp * lp.clamp(lo, hi);
                        if live && (PROB_EPS..=1.0).contains(&p) && inside(lp) {
                            d += wp * math::exp(xc - rate) / pc;
                        }
                    }
                    if wn != 0.0 {
                        let lq = -rate;
                        total += wn * lq.clamp(lo, hi);
                        if live && inside(lq) {
                            d -= wn * rate;
                        }
                    }
                }
            }
            *gv = norm * d;
        }
        Ok((tape.scalar_fn(s, norm * total, grad)?, saturated))
    }

    /// Applies the link to a score Var and clamps for safe logs.
    pub fn link(&self, tape: &mut Tape, s: Var) -> Decoded {
        match self.kind {
            DecoderKind::InnerProduct => {
                let p = tape.sigmoid(s);
                Decoded { prob: tape.clamp(p, PROB_EPS, 1.0 - PROB_EPS), saturated: false }
            }
            DecoderKind::BernoulliPoisson => {
                let saturated = tape.value(s).as_slice().iter().any(|&v| v > SCORE_CLAMP);
                let s = tape.clamp(s, f64::NEG_INFINITY, SCORE_CLAMP);
                let p = tape.bp_link(s);
                Decoded { prob: tape.clamp(p, PROB_EPS, 1.0 - PROB_EPS), saturated }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;
    use rand_distr::{Distribution, Poisson};

    #[test]
    fn inner_product_examples() {
        let p = inner_product_decode(&Matrix::zeros(2, 3));
        assert_eq!(p, Matrix::filled(2, 2, 0.5));
        let z = Matrix::from_rows(&[[10.0, 0.0], [10.0, 0.0]]);
        let expected = 1.0 / (1.0 + math::exp(-100.0));
        assert_eq!(inner_product_decode(&z)[(0, 1)], expected);
        assert!(1.0 - expected < 1e-40);
    }

    #[test]
    fn bernoulli_poisson_examples() {
        assert!((bp_link(0.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((bp_link(0.0) - 0.632121).abs() < 1e-6);
        let oracle = 1.0 - (-(-3.0f64).exp()).exp();
        assert!((bp_link(-3.0) - oracle).abs() < 1e-15);
        assert!((bp_link(-3.0) - 0.048568).abs() < 1e-6);
        assert!(bp_link(-50.0) < 1e-20);
        // Distinct from the inner-product link at s = 0.
        assert!((link(DecoderKind::InnerProduct, 0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn monotone_in_r_and_symmetric() {
        let z = Matrix::from_rows(&[[0.3, -0.2], [0.5, -0.4], [-0.1, 0.9]]);
        let (p1, _) = bernoulli_poisson_decode(&z, &[0.5, 0.5]);
        let (p2, _) = bernoulli_poisson_decode(&z, &[0.9, 0.5]);
        // z_0 · z_1 is positive in the first coordinate.
        assert!(p2[(0, 1)] > p1[(0, 1)]);
        assert_eq!(p1, p1.transpose());
        let big = Matrix::from_rows(&[[10.0], [10.0]]);
        let (p, sat) = bernoulli_poisson_decode(&big, &[1.0]);
        assert!(sat && p[(0, 1)] == 1.0);
    }

    #[test]
    fn shrink_examples() {
        assert_eq!(shrink_r(&[0.005, 0.5], SHRINK_THRESHOLD), vec![0.0, 0.5]);
        assert_eq!(shrink_r(&[0.005, 0.5], 0.0), vec![0.005, 0.5]);
        let r = shrink_r(&[0.001, 0.002], SHRINK_THRESHOLD);
        let z = Matrix::from_rows(&[[3.0, -1.0], [0.2, 4.0], [1.0, 1.0]]);
        let (p, _) = bernoulli_poisson_decode(&z, &r);
        assert!(p.as_slice().iter().all(|&v| (v - (1.0 - (-1.0f64).exp())).abs() < 1e-15));
    }

    #[test]
    fn sampling_extremes() {
        let mut rng = SeedRng::new(0);
        assert_eq!(sample_adjacency(&Matrix::zeros(5, 5), &mut rng).unwrap().num_edges(), 0);
        assert_eq!(sample_adjacency(&Matrix::filled(5, 5, 1.0), &mut rng).unwrap().num_edges(), 10);
    }

    #[test]
    fn poisson_truncation_identity() {
        let mut rng = SeedRng::new(42);
        for lambda in [0.01, 0.1, 1.0, 5.0] {
            let pois = Poisson::new(lambda).unwrap();
            let draws = 100_000;
            let hits = (0..draws).filter(|_| pois.sample(rng.raw()) > 0.0).count();
            let freq = hits as f64 / draws as f64;
            let p = bp_link(math::ln(lambda));
            assert!((freq - p).abs() < 0.005, "λ={lambda}: {freq} vs {p}");
            // Same identity through the sampler.
            let pm = Matrix::filled(2, 2, p);
            let edges: usize = (0..20_000).map(|_| sample_adjacency(&pm, &mut rng).unwrap().num_edges()).sum();
            assert!((edges as f64 / 20_000.0 - p).abs() < 0.012);
        }
    }

    #[test]
    fn tape_matches_forward_and_pairs() {
        let mut params = ParamSet::new();
        let dec = Decoder::new(DecoderKind::BernoulliPoisson, 2, &mut params);
        params.get_mut(dec.r_raw().unwrap()).as_mut_slice().copy_from_slice(&[0.2, -0.7]);
        let z = Matrix::from_rows(&[[0.3, -0.2], [0.5, 0.4], [-0.1, 0.9]]);
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let zv = tape.constant(z.clone());
        let s = dec.scores(&mut tape, &bound, zv).unwrap();
        let p = dec.link(&mut tape, s).prob;
        let r = dec.r(&params).unwrap();
        let (fwd, _) = bernoulli_poisson_decode(&z, &r);
        for (a, b) in tape.value(p).as_slice().iter().zip(fwd.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
        let ps = dec.pair_scores(&mut tape, &bound, zv, &[(0, 2), (1, 1)]).unwrap();
        let pp = dec.link(&mut tape, ps).prob;
        assert!((tape.value(pp)[(0, 0)] - fwd[(0, 2)]).abs() < 1e-15);
        assert!((tape.value(pp)[(1, 0)] - fwd[(1, 1)]).abs() < 1e-15);
    }

    #[test]
    fn loglik_gradients_pass_grad_check() {
        let a = crate::graph::dense_adjacency(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]);
        let mut rng = SeedRng::new(3);
        let z0 = Matrix::from_fn(6, 3, |_, _| 0.6 * rng.normal());
        for kind in [DecoderKind::InnerProduct, DecoderKind::BernoulliPoisson] {
            let mut params = ParamSet::new();
            let zid = params.add("z", z0.clone());
            let dec = Decoder::new(kind, 3, &mut params);
            if let Some(id) = dec.r_raw() {
                params.get_mut(id).as_mut_slice().copy_from_slice(&[0.3, -0.4, 0.8]);
            }
            let a = a.clone();
            let f = |tape: &mut Tape, vars: &[Var]| {
                let bound = Bound::from_vars(vars.to_vec());
                let s = dec.scores(tape, &bound, bound.var(zid))?;
                let p = dec.link(tape, s).prob;
                let target = tape.constant(a.clone());
                let lp = tape.log(p)?;
                let q = tape.neg(p);
                let q = tape.add_scalar(q, 1.0);
                let lq = tape.log(q)?;
                let pos = tape.mul(lp, target)?;
                let not_a = tape.constant(a.map(|v| 1.0 - v));
                let neg = tape.mul(lq, not_a)?;
                let total = tape.add(pos, neg)?;
                Ok(tape.sum(total))
            };
            let check = grad_check(f, params.values(), 1e-6).unwrap();
            assert!(check.max_relative_error < 1e-4, "{kind:?}: {}", check.max_relative_error);
        }
    }

    #[test]
    fn fused_loglik_matches_unfused_path() {
        // Scores cover both log clamps, the score clamp and ordinary values.
        let xs = [-40.0, -17.0, -3.0, -0.5, 0.0, 0.7, 2.5, 2.8, 16.5, 29.0, 31.0, 45.0];
        let x = Matrix::from_fn(3, 4, |r, c| xs[4 * r + c]);
        let pos = Matrix::from_fn(3, 4, |r, c| if (r + c) % 2 == 0 { 2.5 } else { 0.0 });
        let neg = Matrix::from_fn(3, 4, |r, c| if (r + c) % 2 == 0 { 0.0 } else { 1.0 + c as f64 });
        for kind in [DecoderKind::InnerProduct, DecoderKind::BernoulliPoisson] {
            let dec = Decoder::new(kind, 1, &mut ParamSet::new());
            let mut t = Tape::new();
            let s = t.leaf(x.clone());
            let d = dec.log_probs(&mut t, s).unwrap();
            let pc = t.constant(pos.clone());
            let nc = t.constant(neg.clone());
            let a = t.mul(d.log_p, pc).unwrap();
            let b = t.mul(d.log_q, nc).unwrap();
            let sum = t.add(a, b).unwrap();
            let sum = t.sum(sum);
            let unfused = t.scale(sum, 0.3);
            t.backward(unfused).unwrap();
            let g_unfused = t.grad(s).unwrap().clone();

            let mut f = Tape::new();
            let s2 = f.leaf(x.clone());
            let (fused, saturated) = dec.weighted_loglik(&mut f, s2, &pos, &neg, 0.3).unwrap();
            f.backward(fused).unwrap();
            assert_eq!(saturated, d.saturated);
            let (u, v) = (t.value(unfused).item(), f.value(fused).item());
            assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0), "{kind:?}: {u} vs {v}");
            for (gu, gf) in g_unfused.as_slice().iter().zip(f.grad(s2).unwrap().as_slice()) {
                assert!((gu - gf).abs() <= 1e-12 * gu.abs().max(1.0), "{kind:?}: {gu} vs {gf}");
            }
        }
    }

    #[test]
    fn fused_loglik_passes_grad_check() {
        let a = crate::graph::dense_adjacency(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        let pos = a.map(|v| 3.0 * v);
        let neg = a.map(|v| 1.0 - v);
        let mut rng = SeedRng::new(8);
        let z0 = Matrix::from_fn(5, 2, |_, _| 0.7 * rng.normal());
        for kind in [DecoderKind::InnerProduct, DecoderKind::BernoulliPoisson] {
            let mut params = ParamSet::new();
            let zid = params.add("z", z0.clone());
            let dec = Decoder::new(kind, 2, &mut params);
            let f = |tape: &mut Tape, vars: &[Var]| {
                let bound = Bound::from_vars(vars.to_vec());
                let s = dec.scores(tape, &bound, bound.var(zid))?;
                Ok(dec.weighted_loglik(tape, s, &pos, &neg, 0.5)?.0)
            };
            let check = grad_check(f, params.values(), 1e-6).unwrap();
            assert!(check.max_relative_error < 1e-4, "{kind:?}: {}", check.max_relative_error);
        }
    }
}
