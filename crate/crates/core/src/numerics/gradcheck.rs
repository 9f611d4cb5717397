use alloc::vec::Vec;

use super::matrix::Matrix;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is ~0 are judged by absolute error instead.
pub const RELATIVE_FLOOR: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// (parameter, flat index) of the worst coordinate.
    pub worst: (usize, usize),
    pub analytic: Vec<Matrix>,
}

/// Compares reverse-mode gradients of `f` at `params` with central finite
/// differences of step `h`.
///
/// `f` must build a scalar on the given tape from the supplied leaf handles
/// and must be deterministic (freeze any randomness inside it). The error for
/// a coordinate is `|ad - fd| / max(|ad|, |fd|, RELATIVE_FLOOR)`.
pub fn grad_check<F>(f: F, params: &[Matrix], h: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Matrix]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|m| tape.leaf(m.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|m| tape.leaf(m.clone())).collect();
    let out = f(&mut tape, &vars)?;
    if !tape.value(out).item().is_finite() {
        return Err(Error::NonFinite { what: "objective at the base point".into() });
    }
    tape.backward(out)?;
    let analytic: Vec<Matrix> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| tape.grad(v).cloned().unwrap_or_else(|| Matrix::zeros(p.rows(), p.cols())))
        .collect();

    let mut probe: Vec<Matrix> = params.to_vec();
    let mut max_err = 0.0f64;
    let mut worst = (0, 0);
    for p in 0..params.len() {
        for k in 0..params[p].len() {
            let x0 = params[p].as_slice()[k];
            probe[p].as_mut_slice()[k] = x0 + h;
            let plus = eval(&probe)?;
            probe[p].as_mut_slice()[k] = x0 - h;
            let minus = eval(&probe)?;
            probe[p].as_mut_slice()[k] = x0;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFiniteObjective { param: p, index: k });
            }
            let fd = (plus - minus) / (2.0 * h);
            let ad = analytic[p].as_slice()[k];
            let err = (ad - fd).abs() / ad.abs().max(fd.abs()).max(RELATIVE_FLOOR);
            if err > max_err {
                max_err = err;
                worst = (p, k);
            }
        }
    }
    Ok(GradCheck { max_relative_error: max_err, worst, analytic })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn quadratic_is_exact() {
        let r = grad_check(
            |t, v| {
                let y = t.square(v[0]);
                Ok(t.sum(y))
            },
            &[Matrix::scalar(3.0)],
            1e-5,
        )
        .unwrap();
        assert!(r.max_relative_error < 1e-6, "{}", r.max_relative_error);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let r = grad_check(|t, _| Ok(t.scalar(4.2)), &[Matrix::from_rows(&[[1.0, 2.0]])], 1e-5).unwrap();
        assert_eq!(r.analytic, vec![Matrix::zeros(1, 2)]);
        assert_eq!(r.max_relative_error, 0.0);
    }

    #[test]
    fn non_finite_objective_names_coordinate() {
        // log(x) at x = 1e-6 with h = 1e-5 steps into the invalid region on one side.
        let err = grad_check(
            |t, v| {
                let y = t.log(v[0])?;
                Ok(t.sum(y))
            },
            &[Matrix::from_rows(&[[1.0, 1e-6]])],
            1e-5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Domain { op: "log", .. }));

        let err = grad_check(
            |t, v| {
                let e = t.exp(v[0]);
                Ok(t.sum(e))
            },
            &[Matrix::from_rows(&[[1.0, 709.7827]])],
            1e-4,
        )
        .unwrap_err();
        assert_eq!(err, Error::NonFiniteObjective { param: 0, index: 1 });
    }
}
