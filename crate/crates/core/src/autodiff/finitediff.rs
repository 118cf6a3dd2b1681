//! Central-difference gradients, the independent oracle for the engine.

use super::tensor::Tensor;
use crate::{Error, Result};

/// Central-difference gradient of a scalar function at `x`:
/// `(f(x + h·eᵢ) − f(x − h·eᵢ)) / (2h)` per coordinate.
///
/// This deliberately bypasses the graph engine so it can serve as a
/// gradient-check oracle.
pub fn finite_diff_grad<F>(mut f: F, x: &Tensor, h: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut grad = Tensor::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let fp = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let fm = f(&probe)?;
        probe.data_mut()[i] = orig;
        let d = (fp - fm) / (2.0 * h);
        if !d.is_finite() {
            return Err(Error::NonFiniteValue("finite_diff_grad".to_string()));
        }
        grad.data_mut()[i] = d;
    }
    Ok(grad)
}
