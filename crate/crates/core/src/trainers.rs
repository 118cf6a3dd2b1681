//! Minibatch training loops.
//!
//! [`train_dre`] runs stratified maximum-likelihood ascent (descent on the
//! negated objective) with Adam. For the corrected variant, every minibatch
//! evaluates the branch rule on raw sums and composes the gradient as the
//! four-way if/else: descend on the corrected objective when a margin is
//! non-negative, ascend on the violated margin otherwise. With `C = 0` the
//! corrected path constructs bitwise-identical arithmetic to the plain
//! stratified trainer, so the two produce identical parameter trajectories.
//!
//! Epochs are fixed-budget (no early stopping): each epoch permutes the two
//! sample sets independently and splits both into `N = ⌈min(n,m)/batch⌉`
//! near-equal chunks, so every sample is visited once per epoch and
//! asymmetric `n ≠ m` is first-class.
//!
//! [`train_kliep`] is projected gradient ascent on `mean log r(X)` for the
//! kernel model, re-imposing the empirical constraint `mean r(Z) = 1` by
//! rescaling after every step and clamping the weights non-negative.

use crate::autodiff::{AdamParams, AdamState, Graph, Tensor};
use crate::datasets::rng::{role, shuffled_indices, stream};
use crate::datasets::SamplePair;
use crate::models::{kernel_design_matrix, KernelRatioModel, MlpRatioModel, RatioModel};
use crate::objectives::{
    khat_exp, khat_exp_unweighted, khat_from_stats, nn_branch, nn_loss_node,
    stratified_exp_loss_node, stratified_exp_unweighted_loss_node, stratified_loss_node, ukl_loss,
    ukl_p_loss_node, ukl_q_loss_node, BatchStats, ForwardNodes, ObjectiveSpec, Variant,
};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamParams,
    pub seed: u64,
    pub spectral_norm: bool,
    pub spec: ObjectiveSpec,
    /// Record a history row every this many epochs (and at the last epoch).
    pub eval_every: usize,
}

impl TrainConfig {
    pub fn new(spec: ObjectiveSpec) -> TrainConfig {
        TrainConfig {
            epochs: 200,
            batch_size: 128,
            adam: AdamParams::default(),
            seed: 0,
            spectral_norm: true,
            spec,
            eval_every: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HistoryRow {
    pub epoch: usize,
    /// Training loss (the minimized objective) on the full data.
    pub objective: f64,
    pub l2_error: Option<f64>,
    /// Cumulative ascent steps taken on a violated forward margin.
    pub branch_fwd_ascends: u64,
    /// Cumulative ascent steps taken on a violated inverse margin.
    pub branch_inv_ascends: u64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub rows: Vec<HistoryRow>,
}

impl TrainHistory {
    /// CSV rows `epoch,objective,l2_error,branch_fwd_ascends,branch_inv_ascends`.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("epoch,objective,l2_error,branch_fwd_ascends,branch_inv_ascends\n");
        for r in &self.rows {
            let l2 = r.l2_error.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch, r.objective, l2, r.branch_fwd_ascends, r.branch_inv_ascends
            ));
        }
        out
    }
}

/// Rows `idx` of `t` as a new tensor.
fn gather_rows(t: &Tensor, idx: &[usize]) -> Tensor {
    let mut data = Vec::with_capacity(idx.len() * t.cols());
    for &i in idx {
        data.extend_from_slice(t.row_slice(i));
    }
    Tensor::new(idx.len(), t.cols(), data)
}

fn chunk_bounds(len: usize, chunks: usize, k: usize) -> (usize, usize) {
    (k * len / chunks, (k + 1) * len / chunks)
}

/// The minimized loss value of a variant on the given forward values.
pub fn objective_value(
    spec: &ObjectiveSpec,
    r_x: &[f64],
    logr_x: &[f64],
    r_z: &[f64],
    logr_z: &[f64],
) -> Result<f64> {
    let stats = BatchStats::from_values(r_x, logr_x, r_z, logr_z);
    match spec.variant {
        Variant::Stratified => Ok(-khat_from_stats(spec.lambda, &stats)),
        Variant::StratifiedExp => Ok(-khat_exp(spec.lambda, logr_x, logr_z)?),
        Variant::StratifiedExpUnweighted => Ok(-khat_exp_unweighted(spec.lambda, logr_x, logr_z)?),
        Variant::UklP => ukl_loss(r_x, r_z),
        Variant::UklQ => {
            let inv_z: Vec<f64> = r_z.iter().map(|v| 1.0 / v).collect();
            let inv_x: Vec<f64> = r_x.iter().map(|v| 1.0 / v).collect();
            ukl_loss(&inv_z, &inv_x)
        }
        Variant::NnStratified => {
            let sums = |v: &[f64]| v.iter().sum::<f64>();
            let inv_x: Vec<f64> = r_x.iter().map(|v| 1.0 / v).collect();
            let inv_z: Vec<f64> = r_z.iter().map(|v| 1.0 / v).collect();
            let (b_fwd, b_inv) = nn_branch(
                spec,
                sums(r_x),
                sums(r_z),
                sums(&inv_x),
                sums(&inv_z),
                r_x.len(),
                r_z.len(),
            );
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let fwd = if b_fwd {
                -(mean(logr_x) - spec.c * mean(r_x)) + (mean(r_z) - spec.c * mean(r_x))
            } else {
                spec.c * mean(r_x) - mean(r_z)
            };
            let inv = if b_inv {
                (mean(logr_z) + spec.c * mean(&inv_z)) + (mean(&inv_x) - spec.c * mean(&inv_z))
            } else {
                spec.c * mean(&inv_z) - mean(&inv_x)
            };
            Ok(spec.lambda * fwd + (1.0 - spec.lambda) * inv)
        }
    }
}

struct StepOutcome {
    fwd_ascended: bool,
    inv_ascended: bool,
}

fn minibatch_step(
    model: &mut MlpRatioModel,
    adam: &mut AdamState,
    spec: &ObjectiveSpec,
    xb: Tensor,
    zb: Tensor,
) -> Result<StepOutcome> {
    let mut g = Graph::new();
    let bound = model.bind(&mut g, true)?;
    let xn = g.constant(xb);
    let zn = g.constant(zb);
    let (r_x, logr_x) = model.forward_graph(&mut g, &bound, xn);
    let (r_z, logr_z) = model.forward_graph(&mut g, &bound, zn);
    let f = ForwardNodes {
        r_x,
        logr_x,
        r_z,
        logr_z,
    };

    let mut outcome = StepOutcome {
        fwd_ascended: false,
        inv_ascended: false,
    };
    let loss = match spec.variant {
        Variant::Stratified => stratified_loss_node(&mut g, spec.lambda, &f),
        Variant::StratifiedExp => stratified_exp_loss_node(&mut g, spec.lambda, &f),
        Variant::StratifiedExpUnweighted => {
            stratified_exp_unweighted_loss_node(&mut g, spec.lambda, &f)
        }
        Variant::UklP => ukl_p_loss_node(&mut g, &f),
        Variant::UklQ => ukl_q_loss_node(&mut g, &f),
        Variant::NnStratified => {
            let sum = |id| g.value(id).data().iter().sum::<f64>();
            let sum_r_x = sum(r_x);
            let sum_r_z = sum(r_z);
            let sum_inv_r_x = g.value(r_x).data().iter().map(|v| 1.0 / v).sum::<f64>();
            let sum_inv_r_z = g.value(r_z).data().iter().map(|v| 1.0 / v).sum::<f64>();
            let branches = nn_branch(
                spec,
                sum_r_x,
                sum_r_z,
                sum_inv_r_x,
                sum_inv_r_z,
                g.value(r_x).len(),
                g.value(r_z).len(),
            );
            outcome.fwd_ascended = !branches.0;
            outcome.inv_ascended = !branches.1;
            nn_loss_node(&mut g, spec.lambda, spec.c, branches, &f)
        }
    };

    let (_, grads) = g.evaluate_with_grad(loss)?;
    let mut tensors: Vec<Tensor> = model.core.param_tensors().into_iter().cloned().collect();
    let grad_refs: Vec<&Tensor> = bound.params.iter().map(|&id| grads.param(id)).collect();
    adam.step(&mut tensors, &grad_refs)?;
    model.core.set_params(tensors);
    Ok(outcome)
}

/// Train a ratio MLP on a sample pair. Deterministic given `cfg.seed`;
/// `epochs = 0` returns the model untouched with an empty history.
pub fn train_dre(
    model: &mut MlpRatioModel,
    data: &SamplePair,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    train_dre_with_eval(model, data, cfg, None)
}

/// [`train_dre`] with an optional per-eval hook, typically a held-out L²
/// error estimator; its value lands in the history rows.
pub fn train_dre_with_eval(
    model: &mut MlpRatioModel,
    data: &SamplePair,
    cfg: &TrainConfig,
    eval: Option<&dyn Fn(&MlpRatioModel) -> f64>,
) -> Result<TrainHistory> {
    cfg.spec.validate()?;
    if data.dim() != model.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "data dimension {} does not match model input {}",
            data.dim(),
            model.input_dim()
        )));
    }
    let mut history = TrainHistory::default();
    if cfg.epochs == 0 {
        return Ok(history);
    }
    model.spectral_norm = cfg.spectral_norm;

    let (n, m) = (data.x.rows(), data.z.rows());
    let n_batches = usize::max(1, n.min(m).div_ceil(cfg.batch_size));
    let mut shuffle_rng = stream(cfg.seed, role::SHUFFLE);
    let init_tensors: Vec<Tensor> = model.core.param_tensors().into_iter().cloned().collect();
    let mut adam = AdamState::new(cfg.adam, &init_tensors);
    let mut fwd_ascends = 0u64;
    let mut inv_ascends = 0u64;

    for epoch in 1..=cfg.epochs {
        let perm_x = shuffled_indices(&mut shuffle_rng, n);
        let perm_z = shuffled_indices(&mut shuffle_rng, m);
        for k in 0..n_batches {
            let (xs, xe) = chunk_bounds(n, n_batches, k);
            let (zs, ze) = chunk_bounds(m, n_batches, k);
            let xb = gather_rows(&data.x, &perm_x[xs..xe]);
            let zb = gather_rows(&data.z, &perm_z[zs..ze]);
            let out = minibatch_step(model, &mut adam, &cfg.spec, xb, zb)
                .map_err(|e| wrap_epoch(e, epoch))?;
            fwd_ascends += out.fwd_ascended as u64;
            inv_ascends += out.inv_ascended as u64;
        }
        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            let (r_x, logr_x) = model.forward(&data.x).map_err(|e| wrap_epoch(e, epoch))?;
            let (r_z, logr_z) = model.forward(&data.z).map_err(|e| wrap_epoch(e, epoch))?;
            let objective = objective_value(&cfg.spec, &r_x, &logr_x, &r_z, &logr_z)
                .map_err(|e| wrap_epoch(e, epoch))?;
            history.rows.push(HistoryRow {
                epoch,
                objective,
                l2_error: eval.map(|f| f(model)),
                branch_fwd_ascends: fwd_ascends,
                branch_inv_ascends: inv_ascends,
            });
        }
    }
    Ok(history)
}

fn wrap_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFiniteValue(ctx) => Error::NonFiniteValue(format!("epoch {epoch}: {ctx}")),
        other => other,
    }
}

/// Projected gradient ascent for KLIEP on a kernel model: maximize
/// `mean log r(X)` subject to `mean r(Z) = 1`, the constraint re-imposed by
/// rescaling θ after every step and θ clamped non-negative. Uses
/// `cfg.epochs` iterations and `cfg.adam.lr` as the step size; fully
/// deterministic (no minibatching).
pub fn train_kliep(
    model: &mut KernelRatioModel,
    data: &SamplePair,
    cfg: &TrainConfig,
) -> Result<()> {
    if data.dim() != model.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "data dimension {} does not match model input {}",
            data.dim(),
            model.input_dim()
        )));
    }
    let phi_x = kernel_design_matrix(&data.x, &model.centers, model.sigma);
    let phi_z = kernel_design_matrix(&data.z, &model.centers, model.sigma);
    let (n, m, b) = (phi_x.rows(), phi_z.rows(), model.centers.rows());

    let project = |theta: &mut [f64]| -> Result<()> {
        for t in theta.iter_mut() {
            if *t < 0.0 {
                *t = 0.0;
            }
        }
        let mut mean_rz = 0.0;
        for j in 0..m {
            let row = phi_z.row_slice(j);
            mean_rz += row
                .iter()
                .zip(theta.iter())
                .map(|(&p, &t)| p * t)
                .sum::<f64>();
        }
        mean_rz /= m as f64;
        if mean_rz <= 0.0 {
            return Err(Error::DegenerateConstraint);
        }
        for t in theta.iter_mut() {
            *t /= mean_rz;
        }
        Ok(())
    };

    project(&mut model.weights)?;
    for _ in 0..cfg.epochs {
        // ∇θ mean log r(X) = mean_i φ(xᵢ)/r(xᵢ)
        let mut grad = vec![0.0; b];
        for i in 0..n {
            let row = phi_x.row_slice(i);
            let r: f64 = row.iter().zip(&model.weights).map(|(&p, &t)| p * t).sum();
            if r.is_nan() || r <= 0.0 {
                return Err(Error::NonPositiveRatio("kliep r(X)".to_string()));
            }
            for (gj, &p) in grad.iter_mut().zip(row) {
                *gj += p / r;
            }
        }
        for gj in grad.iter_mut() {
            *gj /= n as f64;
        }
        for (t, gj) in model.weights.iter_mut().zip(&grad) {
            *t += cfg.adam.lr * gj;
        }
        project(&mut model.weights)?;
    }
    Ok(())
}
