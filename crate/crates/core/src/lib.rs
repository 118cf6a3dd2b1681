//! Density-ratio estimation under ordinary and stratified sampling.
//!
//! Given two sample sets `X ~ P` and `Z ~ Q`, this crate fits positive models
//! `r(x) ≈ p(x)/q(x)` by maximizing penalized likelihoods of the ratio. The
//! central objective is the stratified estimator
//!
//! ```text
//! K̂(r) = λ·mean log r(X) − (1−λ)·mean log r(Z)
//!        − (1−λ)·mean 1/r(X) − λ·mean r(Z)
//! ```
//!
//! whose population maximum interpolates between KL(P‖Q) (λ=1), KL(Q‖P)
//! (λ=0), and half an integral probability metric over the log-ratio class
//! (λ=½). The unconstrained maximizer self-normalizes: at the optimum,
//! `mean r(Z) ≈ 1` and `mean 1/r(X) ≈ 1` without an explicit constraint.
//!
//! What lives where:
//!
//! - [`autodiff`] — a small reverse-mode engine over dense `f64` matrices,
//!   Adam, and spectral normalization via power iteration.
//! - [`models`] — ratio hypotheses: a ReLU MLP with an exponential (or
//!   clipped-softplus) head, and a linear-in-parameter Gaussian-kernel model.
//! - [`objectives`] — UKL, the stratified `K̂`, exponential-model variants,
//!   and the hinge-corrected non-negative objective with its branch rule.
//! - [`trainers`] — minibatch training loops, including the branch-switched
//!   non-negative trainer and constrained KLIEP.
//! - [`baselines`] — closed-form uLSIF / RuLSIF with grid cross-validation.
//! - [`metrics`] — Gaussian oracles, Monte-Carlo L² error, divergence
//!   estimates, MMD, and KDE negative log-likelihood.
//! - [`datasets`] — seeded, platform-deterministic samplers for Gaussian
//!   pairs and six 2-D shapes.
//! - [`slogan`] — a small GAN whose discriminator is the stratified
//!   likelihood and whose generator descends on the same objective.
//! - [`config`] / [`harness`] — experiment configuration, seeded multi-trial
//!   sweeps, CSV records, and summary tables.
//!
//! Trial-level parallelism uses rayon behind the `parallel` feature
//! (enabled by default); disabling it leaves a sequential fallback with
//! identical results.

pub mod autodiff;
pub mod baselines;
pub mod config;
pub mod datasets;
pub mod error;
pub mod exec;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod objectives;
pub mod plot;
pub mod slogan;
pub mod trainers;

pub use error::{Error, Result};
