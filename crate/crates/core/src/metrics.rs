//! Evaluation quantities: analytic Gaussian oracles, Monte-Carlo L² error,
//! divergence estimates on held-out data, MMD, and KDE log-likelihood.

use crate::autodiff::Tensor;
use crate::exec::{fill_chunks, Jobs};
use crate::models::RatioModel;
use crate::objectives::{khat, ObjectiveSpec};
use crate::Result;

/// A pair of d-dimensional Gaussians with identity covariance.
#[derive(Debug, Clone)]
pub struct GaussianPairSpec {
    pub d: usize,
    pub mu_p: Vec<f64>,
    pub mu_q: Vec<f64>,
}

impl GaussianPairSpec {
    pub fn new(mu_p: Vec<f64>, mu_q: Vec<f64>) -> GaussianPairSpec {
        assert_eq!(mu_p.len(), mu_q.len());
        assert!(!mu_p.is_empty());
        GaussianPairSpec {
            d: mu_p.len(),
            mu_p,
            mu_q,
        }
    }

    /// μ_p = 0, μ_q = e₁: the standard benchmark pair.
    pub fn unit_shift(d: usize) -> GaussianPairSpec {
        let mut mu_q = vec![0.0; d];
        mu_q[0] = 1.0;
        GaussianPairSpec::new(vec![0.0; d], mu_q)
    }

    /// μ_p = shift·e₁ toward μ_q = 0 (or any first-coordinate pair).
    pub fn first_coordinate(d: usize, mu_p1: f64, mu_q1: f64) -> GaussianPairSpec {
        let mut mu_p = vec![0.0; d];
        let mut mu_q = vec![0.0; d];
        mu_p[0] = mu_p1;
        mu_q[0] = mu_q1;
        GaussianPairSpec::new(mu_p, mu_q)
    }
}

/// True ratio `p(x)/q(x) = exp(−‖x−μ_p‖²/2 + ‖x−μ_q‖²/2)`.
pub fn gaussian_true_ratio(x: &[f64], spec: &GaussianPairSpec) -> f64 {
    debug_assert_eq!(x.len(), spec.d);
    let mut e = 0.0;
    for i in 0..spec.d {
        let dp = x[i] - spec.mu_p[i];
        let dq = x[i] - spec.mu_q[i];
        e += -0.5 * dp * dp + 0.5 * dq * dq;
    }
    e.exp()
}

/// KL(P‖Q) for identity covariances: `‖μ_p − μ_q‖²/2`. Symmetric in the
/// arguments for this family.
pub fn gaussian_kl(spec: &GaussianPairSpec) -> f64 {
    spec.mu_p
        .iter()
        .zip(&spec.mu_q)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / 2.0
}

/// The analytic ratio wrapped as a model, for oracle baselines.
#[derive(Debug, Clone)]
pub struct GaussianOracleRatio {
    pub spec: GaussianPairSpec,
}

impl RatioModel for GaussianOracleRatio {
    fn input_dim(&self) -> usize {
        self.spec.d
    }

    fn forward(&self, x: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
        let r: Vec<f64> = (0..x.rows())
            .map(|i| gaussian_true_ratio(x.row_slice(i), &self.spec))
            .collect();
        let logr = r.iter().map(|v| v.ln()).collect();
        Ok((r, logr))
    }
}

/// Which norm the Monte-Carlo error estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorSide {
    /// `mean (r̂(z) − r*(z))²` over points drawn from Q.
    Forward,
    /// `mean (1/r̂(x) − 1/r*(x))²` over points drawn from P.
    Inverse,
}

/// Monte-Carlo squared-L² error of a model against the analytic ratio.
/// `eval_points` must come from Q for the forward side and from P for the
/// inverse side, disjoint from the training data.
pub fn l2_error(
    model: &dyn RatioModel,
    spec: &GaussianPairSpec,
    eval_points: &Tensor,
    side: ErrorSide,
) -> Result<f64> {
    let (r_hat, _) = model.forward(eval_points)?;
    let mut acc = 0.0;
    for (i, rh) in r_hat.iter().enumerate() {
        let rstar = gaussian_true_ratio(eval_points.row_slice(i), spec);
        let diff = match side {
            ErrorSide::Forward => rh - rstar,
            ErrorSide::Inverse => 1.0 / rh - 1.0 / rstar,
        };
        acc += diff * diff;
    }
    Ok(acc / r_hat.len() as f64)
}

/// Divergence estimate of a trained model on held-out data, in both
/// reporting conventions.
#[derive(Debug, Clone, Copy)]
pub struct DrmEstimate {
    /// `λ·mean log r̂(X) − (1−λ)·mean log r̂(Z)`: converges to
    /// `λ·KL(P‖Q) + (1−λ)·KL(Q‖P)` at a self-normalized optimum.
    pub likelihood_part: f64,
    /// The full empirical objective `K̂`; equals `likelihood_part − 1` at a
    /// self-normalized optimum.
    pub khat: f64,
}

/// Evaluate (never optimize) the divergence value of `model` on held-out
/// `x_eval`/`z_eval`.
pub fn drm_estimate(
    model: &dyn RatioModel,
    lambda: f64,
    x_eval: &Tensor,
    z_eval: &Tensor,
) -> Result<DrmEstimate> {
    let (r_x, logr_x) = model.forward(x_eval)?;
    let (r_z, logr_z) = model.forward(z_eval)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let likelihood_part = lambda * mean(&logr_x) - (1.0 - lambda) * mean(&logr_z);
    let spec = ObjectiveSpec::stratified(lambda);
    let k = khat(&spec, &r_x, &logr_x, &r_z, &logr_z)?;
    Ok(DrmEstimate {
        likelihood_part,
        khat: k,
    })
}

fn gaussian_kernel_mean(a: &Tensor, b: &Tensor, inv_two_sigma2: f64, jobs: Jobs) -> f64 {
    let mut row_sums = vec![0.0; a.rows()];
    fill_chunks(jobs, &mut row_sums, 1, |i, out| {
        let ra = a.row_slice(i);
        let mut s = 0.0;
        for j in 0..b.rows() {
            let rb = b.row_slice(j);
            let d2: f64 = ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)).sum();
            s += (-d2 * inv_two_sigma2).exp();
        }
        out[0] = s;
    });
    row_sums.iter().sum::<f64>() / (a.rows() * b.rows()) as f64
}

/// Squared MMD, biased V-statistic with the Gaussian kernel:
/// `mean k(A,A) + mean k(B,B) − 2·mean k(A,B)`. Non-negative up to
/// floating-point noise.
pub fn mmd2(a: &Tensor, b: &Tensor, sigma: f64) -> f64 {
    mmd2_jobs(a, b, sigma, Jobs::Sequential)
}

/// Parallel variant of [`mmd2`]; identical output.
pub fn mmd2_jobs(a: &Tensor, b: &Tensor, sigma: f64, jobs: Jobs) -> f64 {
    assert!(sigma > 0.0);
    assert_eq!(a.cols(), b.cols());
    let inv = 1.0 / (2.0 * sigma * sigma);
    let kaa = gaussian_kernel_mean(a, a, inv, jobs);
    let kbb = gaussian_kernel_mean(b, b, inv, jobs);
    let kab = gaussian_kernel_mean(a, b, inv, jobs);
    kaa + kbb - 2.0 * kab
}

/// Median of pairwise distances, the standard bandwidth heuristic. Uses all
/// pairs up to a 2000-point subsample cap to stay quadratic-safe.
pub fn median_heuristic(points: &Tensor) -> f64 {
    let n = points.rows().min(2000);
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = points
                .row_slice(i)
                .iter()
                .zip(points.row_slice(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dists.push(d2.sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(f64::total_cmp);
    let mid = dists.len() / 2;
    let med = if dists.len() % 2 == 0 {
        0.5 * (dists[mid - 1] + dists[mid])
    } else {
        dists[mid]
    };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// Scott's rule per-dimension bandwidths: `σ̂ⱼ · n^(−1/(d+4))`.
pub fn scott_bandwidths(points: &Tensor) -> Vec<f64> {
    let (n, d) = points.shape();
    let factor = (n as f64).powf(-1.0 / (d as f64 + 4.0));
    (0..d)
        .map(|j| {
            let mean: f64 = (0..n).map(|i| points.get(i, j)).sum::<f64>() / n as f64;
            let var: f64 = (0..n)
                .map(|i| (points.get(i, j) - mean).powi(2))
                .sum::<f64>()
                / n as f64;
            let sd = var.sqrt();
            (if sd > 0.0 { sd } else { 1.0 }) * factor
        })
        .collect()
}

/// Negative log-likelihood of `validation` under a Gaussian KDE fitted on
/// `generated`. `bandwidth = Some(h)` uses an isotropic bandwidth; `None`
/// applies Scott's rule per dimension. Per-point densities are floored at
/// 1e-300 before the logarithm.
pub fn kde_nll(generated: &Tensor, validation: &Tensor, bandwidth: Option<f64>) -> Result<f64> {
    assert_eq!(generated.cols(), validation.cols());
    assert!(generated.rows() > 0 && validation.rows() > 0);
    if let Some(h) = bandwidth {
        assert!(h > 0.0, "bandwidth must be positive");
    }
    let d = generated.cols();
    let hs: Vec<f64> = match bandwidth {
        Some(h) => vec![h; d],
        None => scott_bandwidths(generated),
    };
    let log_norm: f64 = hs
        .iter()
        .map(|h| (h * (2.0 * std::f64::consts::PI).sqrt()).ln())
        .sum::<f64>()
        + (generated.rows() as f64).ln();
    let mut nll = 0.0;
    for v in 0..validation.rows() {
        let vp = validation.row_slice(v);
        let mut dens = 0.0;
        for gidx in 0..generated.rows() {
            let gp = generated.row_slice(gidx);
            let mut e = 0.0;
            for j in 0..d {
                let z = (vp[j] - gp[j]) / hs[j];
                e += z * z;
            }
            dens += (-0.5 * e).exp();
        }
        let log_dens = (dens.max(1e-300)).ln() - log_norm;
        nll -= log_dens;
    }
    Ok(nll / validation.rows() as f64)
}

/// Mean, median, std (population) of a set of per-trial values.
pub fn summarize(values: &[f64]) -> (f64, f64, f64) {
    assert!(!values.is_empty());
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 0 {
        0.5 * (sorted[mid - 1] + sorted[mid])
    } else {
        sorted[mid]
    };
    (mean, median, var.sqrt())
}

/// Summary of squared errors across trials plus attached metric values.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub drm: Option<f64>,
    pub mmd: Option<f64>,
    pub nll: Option<f64>,
}

impl EvalReport {
    pub fn from_errors(errors: &[f64]) -> EvalReport {
        let (mean, median, std) = summarize(errors);
        EvalReport {
            mean,
            median,
            std,
            drm: None,
            mmd: None,
            nll: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_is_one_on_the_midplane() {
        let spec = GaussianPairSpec::unit_shift(3);
        // x with x₁ = 0.5 is equidistant from both means.
        let r = gaussian_true_ratio(&[0.5, -2.0, 7.0], &spec);
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ratio_at_origin_for_unit_shift() {
        let spec = GaussianPairSpec::unit_shift(2);
        let r = gaussian_true_ratio(&[0.0, 0.0], &spec);
        assert!((r - 0.5f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn reciprocal_identity() {
        let spec = GaussianPairSpec::unit_shift(4);
        let flipped = GaussianPairSpec::new(spec.mu_q.clone(), spec.mu_p.clone());
        for k in 0..50 {
            let x: Vec<f64> = (0..4)
                .map(|j| ((k * 4 + j) as f64 * 0.37).sin() * 2.0)
                .collect();
            let prod = gaussian_true_ratio(&x, &spec) * gaussian_true_ratio(&x, &flipped);
            assert!((prod - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn kl_closed_form() {
        assert_eq!(
            gaussian_kl(&GaussianPairSpec::new(vec![0.3], vec![0.3])),
            0.0
        );
        let unit = GaussianPairSpec::unit_shift(5);
        assert!((gaussian_kl(&unit) - 0.5).abs() < 1e-15);
        let swapped = GaussianPairSpec::new(unit.mu_q.clone(), unit.mu_p.clone());
        assert_eq!(gaussian_kl(&unit), gaussian_kl(&swapped));
    }

    #[test]
    fn oracle_model_has_zero_l2_error() {
        let spec = GaussianPairSpec::unit_shift(2);
        let oracle = GaussianOracleRatio { spec: spec.clone() };
        let pts = Tensor::new(10, 2, (0..20).map(|i| (i as f64) * 0.1 - 1.0).collect());
        let err = l2_error(&oracle, &spec, &pts, ErrorSide::Forward).unwrap();
        assert_eq!(err, 0.0);
        let err_inv = l2_error(&oracle, &spec, &pts, ErrorSide::Inverse).unwrap();
        assert_eq!(err_inv, 0.0);
    }

    struct UnitRatio;
    impl RatioModel for UnitRatio {
        fn input_dim(&self) -> usize {
            2
        }
        fn forward(&self, x: &Tensor) -> crate::Result<(Vec<f64>, Vec<f64>)> {
            Ok((vec![1.0; x.rows()], vec![0.0; x.rows()]))
        }
    }

    #[test]
    fn l2_error_of_unit_model_matches_monte_carlo_oracle() {
        // r̂ ≡ 1 against the unit shift: the estimate must agree with an
        // independent 1e6-sample brute-force oracle of E_Q[(1 − r*(Z))²]
        // within 3 standard errors of the smaller estimate.
        use crate::datasets::rng::{role, stream, NormalSource};
        use crate::datasets::sample_gaussian;
        let spec = GaussianPairSpec::unit_shift(2);
        let mut src = NormalSource::new(stream(77, role::EVAL_Z));
        let pts = sample_gaussian(&spec.mu_q, 10_000, &mut src);
        let est = l2_error(&UnitRatio, &spec, &pts, ErrorSide::Forward).unwrap();
        // oracle: fresh stream, ten times the points, explicit loop
        let mut oracle_src = NormalSource::new(stream(78, role::TEST));
        let big = sample_gaussian(&spec.mu_q, 1_000_000, &mut oracle_src);
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for i in 0..big.rows() {
            let v = (1.0 - gaussian_true_ratio(big.row_slice(i), &spec)).powi(2);
            s1 += v;
            s2 += v * v;
        }
        let oracle = s1 / big.rows() as f64;
        let var = s2 / big.rows() as f64 - oracle * oracle;
        // dominant noise is the 1e4-point estimate
        let se = (var / 10_000.0).sqrt();
        assert!(
            (est - oracle).abs() <= 3.0 * se,
            "estimate {est} vs oracle {oracle} (3se = {})",
            3.0 * se
        );
    }

    #[test]
    fn drm_estimate_conventions_on_equal_distributions() {
        // with r ≡ 1: the full objective sits at −1, the likelihood part
        // at 0, for any λ.
        let x = Tensor::new(50, 2, (0..100).map(|i| (i as f64 * 0.31).sin()).collect());
        let z = Tensor::new(40, 2, (0..80).map(|i| (i as f64 * 0.17).cos()).collect());
        for lambda in [0.0, 0.3, 1.0] {
            let est = drm_estimate(&UnitRatio, lambda, &x, &z).unwrap();
            assert!((est.khat + 1.0).abs() < 1e-12);
            assert!(est.likelihood_part.abs() < 1e-12);
        }
    }

    #[test]
    fn mmd_identical_samples_is_zero() {
        let a = Tensor::new(20, 2, (0..40).map(|i| (i as f64 * 0.7).sin()).collect());
        let v = mmd2(&a, &a.clone(), 1.0);
        assert!(v.abs() < 1e-12, "{v}");
    }

    #[test]
    fn mmd_single_points_closed_form() {
        let a = Tensor::new(1, 2, vec![0.0, 0.0]);
        let b = Tensor::new(1, 2, vec![1.0, 2.0]);
        let sigma = 0.9;
        let want = 2.0 - 2.0 * (-5.0f64 / (2.0 * sigma * sigma)).exp();
        assert!((mmd2(&a, &b, sigma) - want).abs() < 1e-14);
    }

    #[test]
    fn mmd_parallel_matches_sequential() {
        let a = Tensor::new(50, 2, (0..100).map(|i| (i as f64 * 0.13).cos()).collect());
        let b = Tensor::new(40, 2, (0..80).map(|i| (i as f64 * 0.31).sin()).collect());
        let s = mmd2(&a, &b, 1.2);
        let p = mmd2_jobs(&a, &b, 1.2, Jobs::Auto);
        assert_eq!(s.to_bits(), p.to_bits());
    }

    #[test]
    fn kde_single_point_closed_form() {
        // One generated point at 0, one validation point at 0, bandwidth h:
        // NLL = log(√(2π)·h).
        let g = Tensor::new(1, 1, vec![0.0]);
        let v = Tensor::new(1, 1, vec![0.0]);
        let h = 0.37;
        let nll = kde_nll(&g, &v, Some(h)).unwrap();
        let want = ((2.0 * std::f64::consts::PI).sqrt() * h).ln();
        assert!((nll - want).abs() < 1e-12);
    }

    #[test]
    fn kde_is_finite_and_tightens_with_concentration() {
        let spread = Tensor::new(4, 2, vec![0.0, 0.0, 2.0, 0.0, 0.0, 2.0, 2.0, 2.0]);
        let tight = Tensor::new(4, 2, vec![0.0, 0.0, 0.1, 0.0, 0.0, 0.1, 0.1, 0.1]);
        let val = Tensor::new(2, 2, vec![0.05, 0.05, 0.0, 0.1]);
        let a = kde_nll(&spread, &val, Some(0.3)).unwrap();
        let b = kde_nll(&tight, &val, Some(0.3)).unwrap();
        assert!(a.is_finite() && b.is_finite());
        assert!(b < a, "concentrated sample should fit better: {b} vs {a}");
    }

    #[test]
    fn summarize_even_and_odd() {
        let (mean, med, std) = summarize(&[1.0, 2.0, 3.0, 4.0]);
        assert!((mean - 2.5).abs() < 1e-15);
        assert!((med - 2.5).abs() < 1e-15);
        assert!((std - (1.25f64).sqrt()).abs() < 1e-15);
        let (_, med_odd, _) = summarize(&[5.0, 1.0, 3.0]);
        assert_eq!(med_odd, 3.0);
    }
}
