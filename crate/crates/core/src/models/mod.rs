//! Ratio hypotheses: positive functions `r: ℝᵈ → (0, ∞)`.
//!
//! Two families live here. The MLP models the log-ratio `g` and exposes
//! `r = exp(g)` (exponential mode, the default — it keeps `r` positive by
//! construction and makes the stratified objective the exponential-model
//! one) or `r = softplus(g)` clamped into range (kept for ablations). The
//! kernel model is linear in its parameters over Gaussian features and backs
//! the closed-form baselines and KLIEP.
//!
//! Both clip into `[1/R̄, R̄]`: the bound that makes the hypothesis class
//! proper. For the MLP the clamp acts on `g` at `±ln R̄` before
//! exponentiation, with zero gradient outside the clamp.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};

use crate::autodiff::{power_iterate, sigma_readout, Graph, NodeId, SpectralState, Tensor};
use crate::datasets::rng::{role, stream, uniform01};
use crate::exec::{fill_chunks, Jobs};
use crate::{Error, Result};

/// Default clip bound: effectively unconstrained while still guarding the
/// log and reciprocal against overflow.
pub const DEFAULT_RBAR: f64 = 1e6;

/// Floor applied to kernel-model outputs to keep them positive.
pub const KERNEL_FLOOR: f64 = 1e-12;

/// Anything that maps a batch of points to positive ratio values.
pub trait RatioModel {
    fn input_dim(&self) -> usize;

    /// Returns `(r values, log-r values)` for an n×d batch.
    fn forward(&self, x: &Tensor) -> Result<(Vec<f64>, Vec<f64>)>;
}

/// How the MLP head turns the unconstrained network output into a ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputMode {
    /// `r = exp(clamp(g, ±ln R̄))`; `log r` is the clamped `g` exactly.
    Exponential,
    /// `r = clamp(softplus(g), 1/R̄, R̄)`; ablation only.
    ClippedSoftplus,
}

impl OutputMode {
    pub fn name(&self) -> &'static str {
        match self {
            OutputMode::Exponential => "exponential",
            OutputMode::ClippedSoftplus => "clipped_softplus",
        }
    }

    pub fn parse(s: &str) -> Result<OutputMode> {
        match s {
            "exponential" => Ok(OutputMode::Exponential),
            "clipped_softplus" => Ok(OutputMode::ClippedSoftplus),
            other => Err(Error::Range {
                key: "output_mode".to_string(),
                msg: format!("unknown mode `{other}`"),
            }),
        }
    }
}

/// Plain fully connected core: weights `dims[i] × dims[i+1]`, biases
/// `1 × dims[i+1]`, ReLU between layers, linear last layer.
#[derive(Debug, Clone)]
pub struct MlpCore {
    pub dims: Vec<usize>,
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

impl MlpCore {
    /// Zero-mean uniform fan-in init, biases zero. Deterministic given seed
    /// and RNG role.
    pub fn init(dims: &[usize], seed: u64, rng_role: u64) -> MlpCore {
        assert!(dims.len() >= 2);
        let mut rng = stream(seed, rng_role);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for win in dims.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let scale = 1.0 / (fan_in as f64).sqrt();
            let data: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| (2.0 * uniform01(&mut rng) - 1.0) * scale)
                .collect();
            weights.push(Tensor::new(fan_in, fan_out, data));
            biases.push(Tensor::zeros(1, fan_out));
        }
        MlpCore {
            dims: dims.to_vec(),
            weights,
            biases,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Tensor::len).sum::<usize>()
            + self.biases.iter().map(Tensor::len).sum::<usize>()
    }

    /// Parameters in the fixed order `[w0, b0, w1, b1, ...]` used everywhere
    /// (optimizer state, checkpoints, gradient collection).
    pub fn param_tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for i in 0..self.weights.len() {
            out.push(&self.weights[i]);
            out.push(&self.biases[i]);
        }
        out
    }

    pub fn set_params(&mut self, tensors: Vec<Tensor>) {
        assert_eq!(tensors.len(), 2 * self.weights.len());
        for (i, t) in tensors.into_iter().enumerate() {
            if i % 2 == 0 {
                self.weights[i / 2] = t;
            } else {
                self.biases[i / 2] = t;
            }
        }
    }

    /// Forward pass on values, with externally supplied (possibly
    /// normalized) weights.
    pub fn forward_values(&self, eff_weights: &[Tensor], x: &Tensor) -> Tensor {
        let mut h = x.clone();
        let last = eff_weights.len() - 1;
        for (i, w) in eff_weights.iter().enumerate() {
            let mut out = h.matmul(w);
            for r in 0..out.rows() {
                for c in 0..out.cols() {
                    let v = out.get(r, c) + self.biases[i].get(0, c);
                    out.set(r, c, if i < last { v.max(0.0) } else { v });
                }
            }
            h = out;
        }
        h
    }
}

/// Graph forward through an MLP given bound weight/bias nodes.
pub fn mlp_graph_forward(
    g: &mut Graph,
    weights: &[NodeId],
    biases: &[NodeId],
    x: NodeId,
) -> NodeId {
    let mut h = x;
    let last = weights.len() - 1;
    for i in 0..weights.len() {
        let wx = g.matmul(h, weights[i]);
        h = g.add_row(wx, biases[i]);
        if i < last {
            h = g.relu(h);
        }
    }
    h
}

/// Parameter node ids of an MLP bound into a graph, plus the effective
/// (spectrally normalized) weight nodes to run forward passes through.
pub struct BoundMlp {
    /// `[w0, b0, w1, b1, ...]` leaves, matching `MlpCore::param_tensors`.
    pub params: Vec<NodeId>,
    pub eff_weights: Vec<NodeId>,
    pub bias_nodes: Vec<NodeId>,
}

/// The 3-layer perceptron ratio model: input d → hidden → hidden → 1.
#[derive(Debug, Clone)]
pub struct MlpRatioModel {
    pub core: MlpCore,
    pub mode: OutputMode,
    pub rbar: f64,
    pub spectral_norm: bool,
    pub sn_states: Vec<SpectralState>,
}

impl MlpRatioModel {
    pub fn init(
        d: usize,
        hidden: usize,
        seed: u64,
        mode: OutputMode,
        rbar: f64,
        spectral_norm: bool,
    ) -> MlpRatioModel {
        assert!(d >= 1 && hidden >= 1);
        assert!(rbar > 1.0, "clip bound must exceed 1");
        let core = MlpCore::init(&[d, hidden, hidden, 1], seed, role::MODEL_INIT);
        let sn_states = core
            .weights
            .iter()
            .map(|w| SpectralState::new(w.rows(), 1))
            .collect();
        MlpRatioModel {
            core,
            mode,
            rbar,
            spectral_norm,
            sn_states,
        }
    }

    pub fn param_count(&self) -> usize {
        self.core.param_count()
    }

    pub fn log_rbar(&self) -> f64 {
        self.rbar.ln()
    }

    /// Weights as the model evaluates them: spectrally normalized via a
    /// non-mutating readout when normalization is on, raw otherwise.
    pub fn effective_weights(&self) -> Result<Vec<Tensor>> {
        if !self.spectral_norm {
            return Ok(self.core.weights.clone());
        }
        self.core
            .weights
            .iter()
            .zip(&self.sn_states)
            .map(|(w, st)| {
                let (_, sigma) = sigma_readout(w, st)?;
                Ok(w.map(|x| x / sigma))
            })
            .collect()
    }

    /// Per-layer sigma estimates from the stored power-iteration state.
    pub fn layer_sigmas(&self) -> Result<Vec<f64>> {
        self.core
            .weights
            .iter()
            .zip(&self.sn_states)
            .map(|(w, st)| sigma_readout(w, st).map(|(_, s)| s))
            .collect()
    }

    fn head_values(&self, gvals: &Tensor) -> (Vec<f64>, Vec<f64>) {
        let lb = self.log_rbar();
        let mut r = Vec::with_capacity(gvals.len());
        let mut logr = Vec::with_capacity(gvals.len());
        match self.mode {
            OutputMode::Exponential => {
                for &gv in gvals.data() {
                    let lr = gv.clamp(-lb, lb);
                    // exp(ln R̄) can overshoot R̄ by an ulp; clamp it back.
                    r.push(lr.exp().clamp(1.0 / self.rbar, self.rbar));
                    logr.push(lr);
                }
            }
            OutputMode::ClippedSoftplus => {
                for &gv in gvals.data() {
                    let sp = (gv.min(700.0).exp() + 1.0).ln();
                    let rv = sp.clamp(1.0 / self.rbar, self.rbar);
                    r.push(rv);
                    logr.push(rv.ln());
                }
            }
        }
        (r, logr)
    }

    /// Bind parameters into a graph. With spectral normalization on,
    /// `advance_sn` selects between one persisted power iteration (training)
    /// and a non-mutating readout (evaluation); `u` and `v` enter the graph
    /// as constants so sigma is differentiable only through `uᵀWv`.
    pub fn bind(&mut self, g: &mut Graph, advance_sn: bool) -> Result<BoundMlp> {
        let mut params = Vec::new();
        let mut weight_nodes = Vec::new();
        let mut bias_nodes = Vec::new();
        for i in 0..self.core.weights.len() {
            let w = g.param(self.core.weights[i].clone());
            let b = g.param(self.core.biases[i].clone());
            params.push(w);
            params.push(b);
            weight_nodes.push(w);
            bias_nodes.push(b);
        }
        let eff_weights = if self.spectral_norm {
            let mut eff = Vec::new();
            for i in 0..weight_nodes.len() {
                let (v, _) = if advance_sn {
                    power_iterate(&self.core.weights[i], &mut self.sn_states[i], 1)?
                } else {
                    sigma_readout(&self.core.weights[i], &self.sn_states[i])?
                };
                let u_node = g.constant(Tensor::row(&self.sn_states[i].u));
                let v_node = g.constant(Tensor::col(&v));
                let uw = g.matmul(u_node, weight_nodes[i]);
                let sigma = g.matmul(uw, v_node);
                let inv_sigma = g.recip(sigma);
                eff.push(g.mul(weight_nodes[i], inv_sigma));
            }
            eff
        } else {
            weight_nodes
        };
        Ok(BoundMlp {
            params,
            eff_weights,
            bias_nodes,
        })
    }

    /// Graph forward producing `(r, log r)` nodes for a bound model.
    pub fn forward_graph(&self, g: &mut Graph, bound: &BoundMlp, x: NodeId) -> (NodeId, NodeId) {
        let gv = mlp_graph_forward(g, &bound.eff_weights, &bound.bias_nodes, x);
        let lb = self.log_rbar();
        match self.mode {
            OutputMode::Exponential => {
                let logr = g.clamp(gv, -lb, lb);
                let r = g.exp(logr);
                (r, logr)
            }
            OutputMode::ClippedSoftplus => {
                let capped = g.clamp(gv, f64::NEG_INFINITY, 700.0);
                let e = g.exp(capped);
                let one = g.constant(Tensor::new(
                    g.value(e).rows(),
                    g.value(e).cols(),
                    vec![1.0; g.value(e).len()],
                ));
                let sp_in = g.add(e, one);
                let sp = g.log(sp_in);
                let r = g.clamp(sp, 1.0 / self.rbar, self.rbar);
                let logr = g.log(r);
                (r, logr)
            }
        }
    }
}

impl RatioModel for MlpRatioModel {
    fn input_dim(&self) -> usize {
        self.core.dims[0]
    }

    fn forward(&self, x: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
        x.check_finite("ratio_forward input")?;
        if x.cols() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} columns, model expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let eff = self.effective_weights()?;
        let gvals = self.core.forward_values(&eff, x);
        gvals.check_finite("ratio_forward output")?;
        Ok(self.head_values(&gvals))
    }
}

/// Linear-in-parameter model over Gaussian kernel features:
/// `r(x) = max(Σⱼ θⱼ·exp(−‖x−cⱼ‖²/(2σ²)), floor)`.
#[derive(Debug, Clone)]
pub struct KernelRatioModel {
    pub centers: Tensor,
    pub weights: Vec<f64>,
    pub sigma: f64,
    pub floor: f64,
}

impl KernelRatioModel {
    pub fn new(centers: Tensor, weights: Vec<f64>, sigma: f64) -> KernelRatioModel {
        assert_eq!(centers.rows(), weights.len());
        assert!(sigma > 0.0);
        KernelRatioModel {
            centers,
            weights,
            sigma,
            floor: KERNEL_FLOOR,
        }
    }

    /// `θᵀφ(x)` per row, without the positivity floor.
    pub fn raw_values(&self, x: &Tensor) -> Vec<f64> {
        let phi = kernel_design_matrix(x, &self.centers, self.sigma);
        (0..x.rows())
            .map(|i| {
                phi.row_slice(i)
                    .iter()
                    .zip(&self.weights)
                    .map(|(&p, &t)| t * p)
                    .sum()
            })
            .collect()
    }
}

impl RatioModel for KernelRatioModel {
    fn input_dim(&self) -> usize {
        self.centers.cols()
    }

    fn forward(&self, x: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
        x.check_finite("ratio_forward input")?;
        if x.cols() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} columns, model expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let raw = self.raw_values(x);
        let r: Vec<f64> = raw.iter().map(|&v| v.max(self.floor)).collect();
        let logr = r.iter().map(|&v| v.ln()).collect();
        Ok((r, logr))
    }
}

/// Feature matrix `(i, j) ↦ exp(−‖xᵢ − cⱼ‖²/(2σ²))`; entries in (0, 1].
pub fn kernel_design_matrix(points: &Tensor, centers: &Tensor, sigma: f64) -> Tensor {
    kernel_design_matrix_jobs(points, centers, sigma, Jobs::Sequential)
}

/// Parallel variant; rows are independent so results are identical.
pub fn kernel_design_matrix_jobs(
    points: &Tensor,
    centers: &Tensor,
    sigma: f64,
    jobs: Jobs,
) -> Tensor {
    assert!(sigma > 0.0, "bandwidth must be positive");
    assert_eq!(points.cols(), centers.cols(), "dimension mismatch");
    let (n, b) = (points.rows(), centers.rows());
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut data = vec![0.0; n * b];
    fill_chunks(jobs, &mut data, b.max(1), |i, row| {
        let p = points.row_slice(i);
        for (j, slot) in row.iter_mut().enumerate() {
            let c = centers.row_slice(j);
            let d2: f64 = p.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            *slot = (-d2 * inv).exp();
        }
    });
    Tensor::new(n, b, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_final_layer(m: &mut MlpRatioModel) {
        let k = m.core.weights.len() - 1;
        m.core.weights[k] = Tensor::zeros(m.core.weights[k].rows(), 1);
        m.core.biases[k] = Tensor::zeros(1, 1);
    }

    #[test]
    fn init_is_deterministic() {
        let a = MlpRatioModel::init(2, 32, 7, OutputMode::Exponential, DEFAULT_RBAR, false);
        let b = MlpRatioModel::init(2, 32, 7, OutputMode::Exponential, DEFAULT_RBAR, false);
        for (ta, tb) in a.core.param_tensors().iter().zip(b.core.param_tensors()) {
            assert_eq!(ta.to_bits(), tb.to_bits());
        }
    }

    #[test]
    fn param_count_matches_layer_arithmetic() {
        let m = MlpRatioModel::init(10, 32, 0, OutputMode::Exponential, DEFAULT_RBAR, false);
        assert_eq!(m.param_count(), 10 * 32 + 32 + 32 * 32 + 32 + 32 + 1);
        assert_eq!(m.param_count(), 1441);
    }

    #[test]
    fn zeroed_final_layer_gives_unit_ratio() {
        let mut m = MlpRatioModel::init(3, 8, 1, OutputMode::Exponential, DEFAULT_RBAR, false);
        zero_final_layer(&mut m);
        let x = Tensor::new(4, 3, vec![0.3; 12]);
        let (r, logr) = m.forward(&x).unwrap();
        assert!(r.iter().all(|&v| v == 1.0));
        assert!(logr.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn clipping_caps_log_ratio() {
        // Force g(x) = 100 via the final bias with R̄ = 50.
        let mut m = MlpRatioModel::init(2, 4, 1, OutputMode::Exponential, 50.0, false);
        zero_final_layer(&mut m);
        m.core.biases[2] = Tensor::scalar(100.0);
        let x = Tensor::new(1, 2, vec![0.0, 0.0]);
        let (r, logr) = m.forward(&x).unwrap();
        assert!((r[0] - 50.0).abs() < 1e-9);
        assert!((logr[0] - 50.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn exponential_mode_is_consistent() {
        let m = MlpRatioModel::init(2, 16, 3, OutputMode::Exponential, DEFAULT_RBAR, false);
        let x = Tensor::new(8, 2, (0..16).map(|i| (i as f64) / 7.0 - 1.0).collect());
        let (r, logr) = m.forward(&x).unwrap();
        for (rv, lv) in r.iter().zip(&logr) {
            assert!((lv.exp() - rv).abs() < 1e-12);
        }
    }

    #[test]
    fn graph_and_value_forwards_agree() {
        // Bound without advancing the SN state, both paths use the same
        // sigma readout, so they agree to rounding.
        let mut m = MlpRatioModel::init(2, 8, 5, OutputMode::Exponential, DEFAULT_RBAR, true);
        let x = Tensor::new(5, 2, (0..10).map(|i| (i as f64) * 0.2 - 1.0).collect());
        let mut g = Graph::new();
        let bound = m.bind(&mut g, false).unwrap();
        let xn = g.constant(x.clone());
        let (r_node, _) = m.forward_graph(&mut g, &bound, xn);
        let graph_r = g.value(r_node).data().to_vec();
        let (val_r, _) = m.forward(&x).unwrap();
        for (a, b) in graph_r.iter().zip(&val_r) {
            assert!((a - b).abs() < 1e-12, "graph {a} vs value {b}");
        }
    }

    #[test]
    fn kernel_model_at_own_center() {
        let centers = Tensor::new(1, 2, vec![0.5, -0.5]);
        let m = KernelRatioModel::new(centers, vec![2.0], 1.0);
        let x = Tensor::new(1, 2, vec![0.5, -0.5]);
        let (r, _) = m.forward(&x).unwrap();
        assert!((r[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn design_matrix_matches_scalar_loop() {
        let pts = Tensor::new(2, 3, vec![0.1, 0.2, 0.3, -0.5, 0.4, 0.0]);
        let ctr = Tensor::new(3, 3, vec![0.0, 0.0, 0.0, 1.0, -1.0, 0.5, 0.2, 0.2, 0.2]);
        let sigma = 0.8;
        let k = kernel_design_matrix(&pts, &ctr, sigma);
        assert_eq!(k.shape(), (2, 3));
        for i in 0..2 {
            for j in 0..3 {
                let mut d2 = 0.0;
                for t in 0..3 {
                    let diff = pts.get(i, t) - ctr.get(j, t);
                    d2 += diff * diff;
                }
                let want = (-d2 / (2.0 * sigma * sigma)).exp();
                assert!((k.get(i, j) - want).abs() < 1e-14);
            }
        }
        let par = kernel_design_matrix_jobs(&pts, &ctr, sigma, Jobs::Auto);
        assert_eq!(k.to_bits(), par.to_bits());
    }

    #[test]
    fn design_matrix_diagonal_is_one_on_centers() {
        let pts = Tensor::new(2, 2, vec![0.3, 0.4, -1.0, 2.0]);
        let k = kernel_design_matrix(&pts, &pts, 1.3);
        assert_eq!(k.get(0, 0), 1.0);
        assert_eq!(k.get(1, 1), 1.0);
        // unit exponent: ‖x−c‖² = 2σ² ⇒ e⁻¹
        let c = Tensor::new(1, 2, vec![0.3 + (2.0f64).sqrt() * 1.3, 0.4]);
        let k2 = kernel_design_matrix(&pts, &c, 1.3);
        assert!((k2.get(0, 0) - (-1.0f64).exp()).abs() < 1e-12);
    }
}
