use super::{Tape, Var};
use crate::error::{ensure, Error, Result};
use crate::tensor::Tensor;

/// Compares the reverse-mode gradient of a scalar function against central
/// differences.
///
/// `f` receives a fresh tape and the leaf holding `x` and must return a
/// scalar node. The result is
/// `max_i |analytic_i - numeric_i| / max(1, |analytic_i|)`.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    ensure!((1e-7..=1e-3).contains(&eps), Contract, "eps {eps} outside [1e-7, 1e-3]");

    let mut tape = Tape::new();
    let leaf = tape.param(x.clone());
    let out = f(&mut tape, leaf)?;
    tape.backward(out)?;
    let analytic = tape.grad(leaf).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; x.len()]);

    let eval = |probe: Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let leaf = tape.constant(probe);
        let out = f(&mut tape, leaf)?;
        let v = tape.value(out);
        ensure!(v.len() == 1, Contract, "grad_check needs a scalar function");
        Ok(v.data()[0])
    };

    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        if !numeric.is_finite() {
            return Err(Error::NumericDomain(format!("central difference at {i} is {numeric}")));
        }
        let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}
