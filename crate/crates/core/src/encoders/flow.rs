use crate::error::Result;
use crate::numerics::{math, Tape, Var};
use crate::params::{Bound, ParamId};

/// Below this value of `wᵀu` the flow may not be invertible: `-ln(e - 1)` is
/// where `m(x) = -1 + softplus(x)` crosses the identity.
pub fn projection_threshold() -> f64 {
    -math::ln(core::f64::consts::E - 1.0)
}

/// `f(z) = z + û·tanh(wᵀz + b)` applied to every row of `z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlanarFlow {
    /// 1×ℓ
    pub u: ParamId,
    /// 1×ℓ
    pub w: ParamId,
    /// 1×1
    pub b: ParamId,
}

/// Projects `u` so that `wᵀû > -1`:
/// `û = u + (m(wᵀu) - wᵀu)·w/‖w‖²` when `wᵀu` is below the threshold, else `u`.
pub fn constrained_u(tape: &mut Tape, u: Var, w: Var) -> Result<Var> {
    let wu = tape.matmul_t(w, u)?;
    if tape.value(wu).item() >= projection_threshold() {
        return Ok(u);
    }
    let m = tape.softplus(wu);
    let m = tape.add_scalar(m, -1.0);
    let gap = tape.sub(m, wu)?;
    let ww = tape.matmul_t(w, w)?;
    let dir = tape.div(w, ww)?;
    let shift = tape.mul(dir, gap)?;
    tape.add(u, shift)
}

/// One flow step: returns the transformed rows and the n×1 column of
/// `ln|1 + ûᵀ(1 - tanh²(wᵀz + b))w|`.
pub fn planar_step(tape: &mut Tape, u: Var, w: Var, b: Var, z: Var) -> Result<(Var, Var)> {
    let u_hat = constrained_u(tape, u, w)?;
    let lin = tape.matmul_t(z, w)?;
    let lin = tape.add(lin, b)?;
    let t = tape.tanh(lin);
    let shift = tape.matmul(t, u_hat)?;
    let z_next = tape.add(z, shift)?;
    let wu = tape.matmul_t(w, u_hat)?;
    let t2 = tape.square(t);
    let slope = tape.neg(t2);
    let slope = tape.add_scalar(slope, 1.0);
    let jac = tape.mul(slope, wu)?;
    let jac = tape.add_scalar(jac, 1.0);
    let log_det = tape.log(jac)?;
    Ok((z_next, log_det))
}

impl PlanarFlow {
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, z: Var) -> Result<(Var, Var)> {
        planar_step(tape, bound.var(self.u), bound.var(self.w), bound.var(self.b), z)
    }
}
