//! Spectral normalization via power iteration.
//!
//! The left singular-vector estimate `u` persists across calls, so one
//! iteration per training step tracks the leading direction as the weight
//! drifts. Gradients through a normalized weight treat `u` and `v` as
//! constants: `σ` is differentiable only through the bilinear form `uᵀWv`
//! (the in-graph construction lives with the models).

use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct SpectralState {
    /// Left singular-vector estimate, unit norm, length = rows(W).
    pub u: Vec<f64>,
    pub n_power_iters: usize,
}

impl SpectralState {
    /// Deterministic start: the normalized all-ones vector.
    pub fn new(rows: usize, n_power_iters: usize) -> SpectralState {
        assert!(rows > 0 && n_power_iters >= 1);
        let v = 1.0 / (rows as f64).sqrt();
        SpectralState {
            u: vec![v; rows],
            n_power_iters,
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = norm(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

/// Run `iters` power-iteration sweeps, updating `state.u` in place.
/// Returns the right vector `v` and the estimate `sigma = uᵀWv`.
pub fn power_iterate(
    w: &Tensor,
    state: &mut SpectralState,
    iters: usize,
) -> Result<(Vec<f64>, f64)> {
    assert_eq!(
        state.u.len(),
        w.rows(),
        "spectral state does not match W rows"
    );
    if w.frobenius_norm() == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let (rows, cols) = w.shape();
    let mut v = vec![0.0; cols];
    for _ in 0..iters.max(1) {
        // v ∝ Wᵀu
        for c in 0..cols {
            let mut s = 0.0;
            for r in 0..rows {
                s += w.get(r, c) * state.u[r];
            }
            v[c] = s;
        }
        if normalize(&mut v) == 0.0 {
            // u landed in the left null space; restart from the heaviest column.
            let best = (0..cols)
                .max_by(|&a, &b| {
                    let na: f64 = (0..rows).map(|r| w.get(r, a).powi(2)).sum();
                    let nb: f64 = (0..rows).map(|r| w.get(r, b).powi(2)).sum();
                    na.total_cmp(&nb)
                })
                .unwrap();
            v.iter_mut().for_each(|x| *x = 0.0);
            v[best] = 1.0;
        }
        // u ∝ Wv
        for r in 0..rows {
            let mut s = 0.0;
            for c in 0..cols {
                s += w.get(r, c) * v[c];
            }
            state.u[r] = s;
        }
        normalize(&mut state.u);
    }
    let mut sigma = 0.0;
    for r in 0..rows {
        let mut s = 0.0;
        for c in 0..cols {
            s += w.get(r, c) * v[c];
        }
        sigma += state.u[r] * s;
    }
    Ok((v, sigma))
}

/// Read off `(v, sigma)` from the stored `u` without advancing the state:
/// `v = normalize(Wᵀu)`, `sigma = uᵀWv`. A pure function of `(W, u)`, so
/// evaluating a trained model never drifts its definition.
pub fn sigma_readout(w: &Tensor, state: &SpectralState) -> Result<(Vec<f64>, f64)> {
    assert_eq!(
        state.u.len(),
        w.rows(),
        "spectral state does not match W rows"
    );
    if w.frobenius_norm() == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let (rows, cols) = w.shape();
    let mut v = vec![0.0; cols];
    for (c, slot) in v.iter_mut().enumerate() {
        let mut s = 0.0;
        for r in 0..rows {
            s += w.get(r, c) * state.u[r];
        }
        *slot = s;
    }
    if normalize(&mut v) == 0.0 {
        let best = (0..cols)
            .max_by(|&a, &b| {
                let na: f64 = (0..rows).map(|r| w.get(r, a).powi(2)).sum();
                let nb: f64 = (0..rows).map(|r| w.get(r, b).powi(2)).sum();
                na.total_cmp(&nb)
            })
            .unwrap();
        v.iter_mut().for_each(|x| *x = 0.0);
        v[best] = 1.0;
    }
    let mut sigma = 0.0;
    for r in 0..rows {
        let mut s = 0.0;
        for c in 0..cols {
            s += w.get(r, c) * v[c];
        }
        sigma += state.u[r] * s;
    }
    Ok((v, sigma))
}

/// Normalize `W` by its estimated spectral norm after `state.n_power_iters`
/// iterations: returns `(W / sigma, sigma)` and persists the updated `u`.
pub fn spectral_normalize(w: &Tensor, state: &mut SpectralState) -> Result<(Tensor, f64)> {
    let (_, sigma) = power_iterate(w, state, state.n_power_iters)?;
    Ok((w.map(|x| x / sigma), sigma))
}
