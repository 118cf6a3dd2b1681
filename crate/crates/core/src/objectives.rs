//! Training objectives for density-ratio models.
//!
//! All of them are built from four empirical moments of a batch:
//! `mean log r(X)`, `mean log r(Z)`, `mean 1/r(X)` and `mean r(Z)`.
//!
//! - [`ukl_loss`]: the unnormalized-KL loss `−mean log r(X) + mean r(Z)`.
//!   Its population minimizer is the true ratio, and by the unconstrained
//!   maximum-likelihood argument the minimizer self-normalizes
//!   (`mean r(Z) → 1`) without an explicit constraint.
//! - [`khat`]: the stratified estimator
//!   `K̂(r) = λ·mean log r(X) − (1−λ)·mean log r(Z) − (1−λ)·mean 1/r(X)
//!   − λ·mean r(Z)` (a maximization objective; trainers descend on `−K̂`).
//! - [`khat_exp`]: the same objective for exponential models `r = exp(g)`,
//!   written in terms of `g`. The penalty terms carry the λ-weights so the
//!   two routes agree identically; [`khat_exp_unweighted`] keeps the variant
//!   with unweighted penalties for comparison.
//! - [`nnukl_loss`] and [`nn_branch`]: the hinge-corrected objective and the
//!   sign rule that switches between descending on it and ascending on a
//!   violated correction margin.
//!
//! Value-level functions serve evaluation and tests; `*_loss_node` builders
//! emit the same objectives into an autodiff graph for training. The
//! builders share their node layout so that the corrected objective with
//! `C = 0` constructs arithmetic identical (bit for bit) to the plain
//! stratified loss — the reduction the trainer tests pin down.

use crate::autodiff::{Graph, NodeId};
use crate::{Error, Result};

/// Objective family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Ordinary sampling, likelihood on X: `−mean log r(X) + mean r(Z)`.
    UklP,
    /// Ordinary sampling, likelihood on Z (inverse ratio).
    UklQ,
    /// Stratified `−K̂`.
    Stratified,
    /// Stratified for exponential models, λ-weighted penalties.
    StratifiedExp,
    /// Stratified for exponential models, unweighted penalties.
    StratifiedExpUnweighted,
    /// Hinge-corrected stratified objective with branch-switched gradients.
    NnStratified,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::UklP => "ukl_p",
            Variant::UklQ => "ukl_q",
            Variant::Stratified => "stratified",
            Variant::StratifiedExp => "stratified_exp",
            Variant::StratifiedExpUnweighted => "stratified_exp_unweighted",
            Variant::NnStratified => "nn_stratified",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "ukl_p" => Ok(Variant::UklP),
            "ukl_q" => Ok(Variant::UklQ),
            "stratified" => Ok(Variant::Stratified),
            "stratified_exp" => Ok(Variant::StratifiedExp),
            "stratified_exp_unweighted" => Ok(Variant::StratifiedExpUnweighted),
            "nn_stratified" => Ok(Variant::NnStratified),
            other => Err(Error::Range {
                key: "variant".to_string(),
                msg: format!("unknown variant `{other}`"),
            }),
        }
    }
}

/// Everything a trainer needs to know about the objective.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveSpec {
    /// Mixing weight λ ∈ [0, 1] between the two log-likelihoods.
    pub lambda: f64,
    pub variant: Variant,
    /// Correction constant C ≥ 0; 0 disables the correction.
    pub c: f64,
    /// Clip bound shared with the model.
    pub rbar: f64,
}

impl ObjectiveSpec {
    pub fn stratified(lambda: f64) -> ObjectiveSpec {
        ObjectiveSpec {
            lambda,
            variant: Variant::Stratified,
            c: 0.0,
            rbar: crate::models::DEFAULT_RBAR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Range {
                key: "lambda".to_string(),
                msg: format!("{} is outside [0, 1]", self.lambda),
            });
        }
        if self.c < 0.0 {
            return Err(Error::Range {
                key: "c".to_string(),
                msg: format!("{} is negative", self.c),
            });
        }
        Ok(())
    }
}

/// The four empirical moments plus batch sizes.
#[derive(Debug, Clone, Copy)]
pub struct BatchStats {
    pub mean_log_r_x: f64,
    pub mean_log_r_z: f64,
    pub mean_inv_r_x: f64,
    pub mean_r_z: f64,
    pub n: usize,
    pub m: usize,
}

impl BatchStats {
    pub fn from_values(r_x: &[f64], logr_x: &[f64], r_z: &[f64], logr_z: &[f64]) -> BatchStats {
        BatchStats {
            mean_log_r_x: mean(logr_x),
            mean_log_r_z: mean(logr_z),
            mean_inv_r_x: mean_of(r_x, |v| 1.0 / v),
            mean_r_z: mean(r_z),
            n: r_x.len(),
            m: r_z.len(),
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn mean_of(v: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    v.iter().map(|&x| f(x)).sum::<f64>() / v.len() as f64
}

fn check_positive(vals: &[f64], what: &str) -> Result<()> {
    if vals.iter().any(|&v| v.is_nan() || v <= 0.0) {
        return Err(Error::NonPositiveRatio(what.to_string()));
    }
    Ok(())
}

/// Unnormalized-KL loss `−mean log r(X) + mean r(Z)` (minimization form).
pub fn ukl_loss(r_x: &[f64], r_z: &[f64]) -> Result<f64> {
    check_positive(r_x, "ukl_loss r(X)")?;
    check_positive(r_z, "ukl_loss r(Z)")?;
    Ok(-mean_of(r_x, f64::ln) + mean(r_z))
}

/// Stratified estimator `K̂` (maximization form) from precomputed values.
pub fn khat(
    spec: &ObjectiveSpec,
    r_x: &[f64],
    logr_x: &[f64],
    r_z: &[f64],
    logr_z: &[f64],
) -> Result<f64> {
    check_positive(r_x, "khat r(X)")?;
    check_positive(r_z, "khat r(Z)")?;
    let s = BatchStats::from_values(r_x, logr_x, r_z, logr_z);
    Ok(khat_from_stats(spec.lambda, &s))
}

/// `K̂` from batch moments.
pub fn khat_from_stats(lambda: f64, s: &BatchStats) -> f64 {
    lambda * s.mean_log_r_x
        - (1.0 - lambda) * s.mean_log_r_z
        - (1.0 - lambda) * s.mean_inv_r_x
        - lambda * s.mean_r_z
}

/// `K̂` for exponential models in terms of `g = log r`, λ-weighted
/// penalties: `λ·mean g(X) − (1−λ)·mean g(Z) − (1−λ)·mean exp(−g(X))
/// − λ·mean exp(g(Z))`. Agrees with [`khat`] at `r = exp(g)`.
pub fn khat_exp(lambda: f64, g_x: &[f64], g_z: &[f64]) -> Result<f64> {
    if g_x.iter().chain(g_z).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("khat_exp input".to_string()));
    }
    Ok(lambda * mean(g_x)
        - (1.0 - lambda) * mean(g_z)
        - (1.0 - lambda) * mean_of(g_x, |g| (-g).exp())
        - lambda * mean_of(g_z, f64::exp))
}

/// Variant with the two penalty terms unweighted:
/// `λ·mean g(X) − (1−λ)·mean g(Z) − mean exp(−g(X)) − mean exp(g(Z))`.
pub fn khat_exp_unweighted(lambda: f64, g_x: &[f64], g_z: &[f64]) -> Result<f64> {
    if g_x.iter().chain(g_z).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("khat_exp input".to_string()));
    }
    Ok(lambda * mean(g_x)
        - (1.0 - lambda) * mean(g_z)
        - mean_of(g_x, |g| (-g).exp())
        - mean_of(g_z, f64::exp))
}

/// Branch rule of the corrected objective, on raw minibatch sums:
/// forward margin `Σ r(Z) − C·Σ r(X)`, inverse margin
/// `Σ 1/r(X) − C·Σ 1/r(Z)`; `true` (margin ≥ 0, boundary inclusive) means
/// descend on the corrected objective, `false` means ascend on the violated
/// margin.
#[allow(clippy::too_many_arguments)]
pub fn nn_branch(
    spec: &ObjectiveSpec,
    sum_r_x: f64,
    sum_r_z: f64,
    sum_inv_r_x: f64,
    sum_inv_r_z: f64,
    _n: usize,
    _m: usize,
) -> (bool, bool) {
    let forward = sum_r_z - spec.c * sum_r_x >= 0.0;
    let inverse = sum_inv_r_x - spec.c * sum_inv_r_z >= 0.0;
    (forward, inverse)
}

/// Hinge-corrected UKL with raw (unnormalized) sums:
/// `−Σ (log r(Xᵢ) − C·r(Xᵢ)) + max(0, Σ r(Zⱼ) − C·Σ r(Xᵢ))`.
pub fn nnukl_loss(r_x: &[f64], logr_x: &[f64], r_z: &[f64], c: f64) -> Result<f64> {
    check_positive(r_x, "nnukl_loss r(X)")?;
    check_positive(r_z, "nnukl_loss r(Z)")?;
    let likelihood: f64 = logr_x.iter().zip(r_x).map(|(&lr, &r)| lr - c * r).sum();
    let margin: f64 = r_z.iter().sum::<f64>() - c * r_x.iter().sum::<f64>();
    Ok(-likelihood + margin.max(0.0))
}

/// Mean-normalized form of [`nnukl_loss`], the one the trainers descend on:
/// each sum is replaced by its batch mean.
pub fn nnukl_loss_mean(r_x: &[f64], logr_x: &[f64], r_z: &[f64], c: f64) -> Result<f64> {
    check_positive(r_x, "nnukl_loss r(X)")?;
    check_positive(r_z, "nnukl_loss r(Z)")?;
    let likelihood = mean(logr_x) - c * mean(r_x);
    let margin = mean(r_z) - c * mean(r_x);
    Ok(-likelihood + margin.max(0.0))
}

// ---------------------------------------------------------------------------
// Graph builders.
//
// The stratified and corrected builders deliberately share their term
// grouping: loss = λ·(forward part) + (1−λ)·(inverse part), with the shared
// moment nodes created first, in one fixed order. With C = 0 every extra
// node of the corrected form contributes an exact ±0, so gradients (and
// therefore whole training trajectories) coincide bitwise with the plain
// stratified path.
// ---------------------------------------------------------------------------

/// Per-batch forward nodes handed to the loss builders.
#[derive(Debug, Clone, Copy)]
pub struct ForwardNodes {
    pub r_x: NodeId,
    pub logr_x: NodeId,
    pub r_z: NodeId,
    pub logr_z: NodeId,
}

struct Moments {
    neg_mean_logr_x: NodeId,
    mean_logr_z: NodeId,
    mean_inv_r_x: NodeId,
    mean_r_z: NodeId,
}

fn shared_moments(g: &mut Graph, f: &ForwardNodes) -> Moments {
    let inv_r_x = g.recip(f.r_x);
    let mean_logr_x = g.mean(f.logr_x);
    let mean_logr_z = g.mean(f.logr_z);
    let mean_r_z = g.mean(f.r_z);
    let mean_inv_r_x = g.mean(inv_r_x);
    let neg_mean_logr_x = g.neg(mean_logr_x);
    Moments {
        neg_mean_logr_x,
        mean_logr_z,
        mean_inv_r_x,
        mean_r_z,
    }
}

fn combine(g: &mut Graph, lambda: f64, forward_part: NodeId, inverse_part: NodeId) -> NodeId {
    let lam = g.scalar_const(lambda);
    let lam1 = g.scalar_const(1.0 - lambda);
    let a = g.mul(lam, forward_part);
    let b = g.mul(lam1, inverse_part);
    g.add(a, b)
}

/// `−K̂` in mean form: `λ·(−mean log r(X) + mean r(Z)) +
/// (1−λ)·(mean log r(Z) + mean 1/r(X))`.
pub fn stratified_loss_node(g: &mut Graph, lambda: f64, f: &ForwardNodes) -> NodeId {
    let m = shared_moments(g, f);
    let fwd = g.add(m.neg_mean_logr_x, m.mean_r_z);
    let inv = g.add(m.mean_logr_z, m.mean_inv_r_x);
    combine(g, lambda, fwd, inv)
}

/// Corrected loss with the branch decisions already made (from
/// [`nn_branch`] on the same raw minibatch sums). In each part, branch true
/// descends on the corrected objective — whose hinge is active exactly when
/// the branch fires, so the builder emits the active-region expression
/// directly — and branch false descends on the negated violation margin
/// (gradient ascent on the margin). With `C = 0` both branches are always
/// true and every correction node contributes an exact ±0, so the graph's
/// gradients coincide bitwise with [`stratified_loss_node`].
pub fn nn_loss_node(
    g: &mut Graph,
    lambda: f64,
    c: f64,
    branches: (bool, bool),
    f: &ForwardNodes,
) -> NodeId {
    let m = shared_moments(g, f);
    let inv_r_z = g.recip(f.r_z);
    let mean_r_x = g.mean(f.r_x);
    let mean_inv_r_z = g.mean(inv_r_z);
    let c_node = g.scalar_const(c);

    let fwd = if branches.0 {
        // −(mean log r(X) − C·mean r(X)) + (mean r(Z) − C·mean r(X))
        let c_rx = g.mul(c_node, mean_r_x);
        let lik = g.add(m.neg_mean_logr_x, c_rx);
        let c_rx2 = g.mul(c_node, mean_r_x);
        let margin = g.sub(m.mean_r_z, c_rx2);
        g.add(lik, margin)
    } else {
        // ascend on the margin = descend on C·mean r(X) − mean r(Z)
        let c_rx = g.mul(c_node, mean_r_x);
        g.sub(c_rx, m.mean_r_z)
    };

    let inv = if branches.1 {
        // −(mean log (1/r)(Z) − C·mean (1/r)(Z)) + (mean 1/r(X) − C·mean 1/r(Z))
        let c_invz = g.mul(c_node, mean_inv_r_z);
        let lik = g.add(m.mean_logr_z, c_invz);
        let c_invz2 = g.mul(c_node, mean_inv_r_z);
        let margin = g.sub(m.mean_inv_r_x, c_invz2);
        g.add(lik, margin)
    } else {
        let c_invz = g.mul(c_node, mean_inv_r_z);
        g.sub(c_invz, m.mean_inv_r_x)
    };

    combine(g, lambda, fwd, inv)
}

/// Ordinary-sampling UKL loss node: `−mean log r(X) + mean r(Z)`.
pub fn ukl_p_loss_node(g: &mut Graph, f: &ForwardNodes) -> NodeId {
    let mean_logr_x = g.mean(f.logr_x);
    let mean_r_z = g.mean(f.r_z);
    let neg = g.neg(mean_logr_x);
    g.add(neg, mean_r_z)
}

/// Inverse-ratio UKL loss node: `mean log r(Z) + mean 1/r(X)`.
pub fn ukl_q_loss_node(g: &mut Graph, f: &ForwardNodes) -> NodeId {
    let inv_r_x = g.recip(f.r_x);
    let mean_logr_z = g.mean(f.logr_z);
    let mean_inv = g.mean(inv_r_x);
    g.add(mean_logr_z, mean_inv)
}

/// `−K̂` built from the log-ratio nodes of an exponential model
/// (λ-weighted penalties).
pub fn stratified_exp_loss_node(g: &mut Graph, lambda: f64, f: &ForwardNodes) -> NodeId {
    let mean_g_x = g.mean(f.logr_x);
    let mean_g_z = g.mean(f.logr_z);
    let neg_g_x = g.neg(f.logr_x);
    let exp_neg_x = g.exp(neg_g_x);
    let exp_z = g.exp(f.logr_z);
    let mean_exp_neg_x = g.mean(exp_neg_x);
    let mean_exp_z = g.mean(exp_z);
    let neg_mean_g_x = g.neg(mean_g_x);
    let fwd = g.add(neg_mean_g_x, mean_exp_z);
    let inv = g.add(mean_g_z, mean_exp_neg_x);
    combine(g, lambda, fwd, inv)
}

/// Negated [`khat_exp_unweighted`] as a loss node.
pub fn stratified_exp_unweighted_loss_node(g: &mut Graph, lambda: f64, f: &ForwardNodes) -> NodeId {
    let mean_g_x = g.mean(f.logr_x);
    let mean_g_z = g.mean(f.logr_z);
    let neg_g_x = g.neg(f.logr_x);
    let exp_neg_x = g.exp(neg_g_x);
    let exp_z = g.exp(f.logr_z);
    let mean_exp_neg_x = g.mean(exp_neg_x);
    let mean_exp_z = g.mean(exp_z);
    let lam = g.scalar_const(lambda);
    let lam1 = g.scalar_const(1.0 - lambda);
    let neg_mean_g_x = g.neg(mean_g_x);
    let t1 = g.mul(lam, neg_mean_g_x);
    let t2 = g.mul(lam1, mean_g_z);
    let t12 = g.add(t1, t2);
    let t123 = g.add(t12, mean_exp_neg_x);
    g.add(t123, mean_exp_z)
}
