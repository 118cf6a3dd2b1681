//! Closed-form kernel baselines: uLSIF and its α-relative variant RuLSIF.
//!
//! Both solve a ridge system over Gaussian features φ centered on points
//! subsampled from X:
//!
//! ```text
//! Ĥ = (1/m)·Φ_ZᵀΦ_Z           (uLSIF)
//! Ĥ = α·(1/n)·Φ_XᵀΦ_X + (1−α)·(1/m)·Φ_ZᵀΦ_Z   (RuLSIF)
//! ĥ = (1/n)·Φ_Xᵀ1
//! θ = (Ĥ + reg·I)⁻¹ ĥ
//! ```
//!
//! The symmetric solve is a dense Cholesky; the least-squares criterion
//! `J(θ) = ½·θᵀĤθ − ĥᵀθ` drives k-fold cross-validation over (σ, reg)
//! grids. Negative weights are clamped to zero at prediction time only —
//! the solution vector itself keeps its signs so the solve residual can be
//! checked.

use crate::autodiff::Tensor;
use crate::datasets::rng::{role, shuffled_indices, trial_stream};
use crate::exec::{map_indexed, Jobs};
use crate::metrics::median_heuristic;
use crate::models::{kernel_design_matrix, KernelRatioModel};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct UlsifSolution {
    pub theta: Vec<f64>,
    pub sigma: f64,
    pub reg: f64,
    pub centers: Tensor,
}

impl UlsifSolution {
    /// Prediction-time model: negative θ entries clamped to 0, outputs
    /// floored positive.
    pub fn to_model(&self) -> KernelRatioModel {
        let clamped = self.theta.iter().map(|&t| t.max(0.0)).collect();
        KernelRatioModel::new(self.centers.clone(), clamped, self.sigma)
    }
}

/// Cholesky solve of an SPD system; `SingularSystem` on a non-positive
/// pivot (rank-deficient Gram matrix with `reg = 0`).
fn solve_spd(a: &Tensor, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    assert_eq!(a.cols(), n);
    assert_eq!(b.len(), n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 1e-300 {
                    return Err(Error::SingularSystem);
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    // forward then backward substitution
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Ok(x)
}

/// `(1/rows)·ΦᵀΦ` for a design matrix.
fn gram_mean(phi: &Tensor) -> Tensor {
    let (n, b) = phi.shape();
    let mut h = Tensor::zeros(b, b);
    for r in 0..n {
        let row = phi.row_slice(r);
        for i in 0..b {
            let pi = row[i];
            for j in i..b {
                let v = h.get(i, j) + pi * row[j];
                h.set(i, j, v);
            }
        }
    }
    for i in 0..b {
        for j in i..b {
            let v = h.get(i, j) / n as f64;
            h.set(i, j, v);
            h.set(j, i, v);
        }
    }
    h
}

fn feature_mean(phi: &Tensor) -> Vec<f64> {
    let (n, b) = phi.shape();
    let mut h = vec![0.0; b];
    for r in 0..n {
        for (hj, &p) in h.iter_mut().zip(phi.row_slice(r)) {
            *hj += p;
        }
    }
    for hj in h.iter_mut() {
        *hj /= n as f64;
    }
    h
}

/// The (Ĥ, ĥ) system for the α-relative objective; `alpha = 0` is uLSIF.
pub fn ulsif_system(
    x: &Tensor,
    z: &Tensor,
    centers: &Tensor,
    sigma: f64,
    alpha: f64,
) -> (Tensor, Vec<f64>) {
    let phi_x = kernel_design_matrix(x, centers, sigma);
    let phi_z = kernel_design_matrix(z, centers, sigma);
    let h_hat = feature_mean(&phi_x);
    let mut big_h = gram_mean(&phi_z);
    if alpha > 0.0 {
        let gx = gram_mean(&phi_x);
        for (hv, gv) in big_h.data_mut().iter_mut().zip(gx.data()) {
            *hv = alpha * gv + (1.0 - alpha) * *hv;
        }
    }
    (big_h, h_hat)
}

/// Least-squares importance fitting: ridge solution of the uLSIF system.
pub fn ulsif_fit(
    x: &Tensor,
    z: &Tensor,
    centers: &Tensor,
    sigma: f64,
    reg: f64,
) -> Result<UlsifSolution> {
    rulsif_fit(x, z, 0.0, centers, sigma, reg)
}

/// α-relative variant: estimates `p/(α·p + (1−α)·q)`.
pub fn rulsif_fit(
    x: &Tensor,
    z: &Tensor,
    alpha: f64,
    centers: &Tensor,
    sigma: f64,
    reg: f64,
) -> Result<UlsifSolution> {
    assert!((0.0..1.0).contains(&alpha), "alpha must be in [0, 1)");
    assert!(reg >= 0.0);
    let (mut big_h, h_hat) = ulsif_system(x, z, centers, sigma, alpha);
    let b = big_h.rows();
    for i in 0..b {
        let v = big_h.get(i, i) + reg;
        big_h.set(i, i, v);
    }
    let theta = solve_spd(&big_h, &h_hat)?;
    Ok(UlsifSolution {
        theta,
        sigma,
        reg,
        centers: centers.clone(),
    })
}

/// `J(θ) = ½·θᵀĤθ − ĥᵀθ`, the criterion cross-validation minimizes.
pub fn ls_criterion(theta: &[f64], big_h: &Tensor, h_hat: &[f64]) -> f64 {
    let b = theta.len();
    let mut quad = 0.0;
    for i in 0..b {
        for j in 0..b {
            quad += theta[i] * big_h.get(i, j) * theta[j];
        }
    }
    let lin: f64 = theta.iter().zip(h_hat).map(|(&t, &h)| t * h).sum();
    0.5 * quad - lin
}

fn fold_bounds(len: usize, folds: usize, k: usize) -> (usize, usize) {
    (k * len / folds, (k + 1) * len / folds)
}

fn drop_rows(t: &Tensor, lo: usize, hi: usize) -> Tensor {
    let mut data = Vec::with_capacity((t.rows() - (hi - lo)) * t.cols());
    for r in 0..t.rows() {
        if r < lo || r >= hi {
            data.extend_from_slice(t.row_slice(r));
        }
    }
    Tensor::new(t.rows() - (hi - lo), t.cols(), data)
}

fn take_rows(t: &Tensor, lo: usize, hi: usize) -> Tensor {
    let mut data = Vec::with_capacity((hi - lo) * t.cols());
    for r in lo..hi {
        data.extend_from_slice(t.row_slice(r));
    }
    Tensor::new(hi - lo, t.cols(), data)
}

/// k-fold selection of `(sigma, reg)` minimizing the held-out criterion.
/// Ties break toward the larger reg, then the larger sigma.
pub fn cv_select(
    x: &Tensor,
    z: &Tensor,
    centers: &Tensor,
    alpha: f64,
    sigma_grid: &[f64],
    reg_grid: &[f64],
    folds: usize,
) -> (f64, f64) {
    assert!(!sigma_grid.is_empty() && !reg_grid.is_empty());
    assert!(folds >= 2, "need at least two folds");
    let pairs: Vec<(f64, f64)> = sigma_grid
        .iter()
        .flat_map(|&s| reg_grid.iter().map(move |&r| (s, r)))
        .collect();
    let scores = map_indexed(Jobs::Sequential, pairs.len(), |pi| {
        let (sigma, reg) = pairs[pi];
        let mut total = 0.0;
        for k in 0..folds {
            let (xl, xh) = fold_bounds(x.rows(), folds, k);
            let (zl, zh) = fold_bounds(z.rows(), folds, k);
            let x_tr = drop_rows(x, xl, xh);
            let z_tr = drop_rows(z, zl, zh);
            let x_va = take_rows(x, xl, xh);
            let z_va = take_rows(z, zl, zh);
            if x_va.rows() == 0 || z_va.rows() == 0 {
                continue;
            }
            match rulsif_fit(&x_tr, &z_tr, alpha, centers, sigma, reg) {
                Ok(sol) => {
                    // score the deployed predictor: θ is clamped at
                    // prediction time, so validate the clamped vector
                    let deployed: Vec<f64> = sol.theta.iter().map(|&t| t.max(0.0)).collect();
                    let (h_va, hhat_va) = ulsif_system(&x_va, &z_va, centers, sigma, alpha);
                    total += ls_criterion(&deployed, &h_va, &hhat_va);
                }
                Err(_) => return f64::INFINITY,
            }
        }
        total / folds as f64
    });
    let mut best = 0;
    for i in 1..pairs.len() {
        let better = scores[i] < scores[best]
            || (scores[i] == scores[best]
                && (pairs[i].1 > pairs[best].1
                    || (pairs[i].1 == pairs[best].1 && pairs[i].0 > pairs[best].0)));
        if better {
            best = i;
        }
    }
    pairs[best]
}

/// Up to `cap` center points subsampled from X with the trial's seed.
pub fn subsample_centers(x: &Tensor, cap: usize, seed: u64, trial: u64) -> Tensor {
    let take = x.rows().min(cap);
    let mut rng = trial_stream(seed, trial, role::CENTERS);
    let idx = shuffled_indices(&mut rng, x.rows());
    let mut data = Vec::with_capacity(take * x.cols());
    for &i in idx.iter().take(take) {
        data.extend_from_slice(x.row_slice(i));
    }
    Tensor::new(take, x.cols(), data)
}

/// Default grids: σ ∈ {0.5, 1, 2, 5} × median heuristic on the pooled
/// samples; reg ∈ {1e-3, 1e-2, 1e-1, 1}.
pub fn default_grids(x: &Tensor, z: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let mut pooled = Vec::with_capacity((x.rows() + z.rows()) * x.cols());
    pooled.extend_from_slice(x.data());
    pooled.extend_from_slice(z.data());
    let pooled = Tensor::new(x.rows() + z.rows(), x.cols(), pooled);
    let med = median_heuristic(&pooled);
    let sigma_grid = [0.5, 1.0, 2.0, 5.0].iter().map(|f| f * med).collect();
    let reg_grid = vec![1e-3, 1e-2, 1e-1, 1.0];
    (sigma_grid, reg_grid)
}

/// Full pipeline: subsample centers, cross-validate the default grids,
/// fit on all data.
pub fn fit_with_cv(
    x: &Tensor,
    z: &Tensor,
    alpha: f64,
    center_cap: usize,
    folds: usize,
    seed: u64,
    trial: u64,
) -> Result<UlsifSolution> {
    let centers = subsample_centers(x, center_cap, seed, trial);
    let (sigma_grid, reg_grid) = default_grids(x, z);
    let (sigma, reg) = cv_select(x, z, &centers, alpha, &sigma_grid, &reg_grid, folds);
    rulsif_fit(x, z, alpha, &centers, sigma, reg)
}
