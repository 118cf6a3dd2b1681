//! Seeded multi-trial experiment execution: the benchmark sweep, single
//! estimation runs, divergence reports, and the GAN pipeline. The CLI is a
//! thin wrapper over these.
//!
//! Per-trial randomness derives from the master seed by a documented split:
//! data and evaluation streams address `(master, trial, role)` directly,
//! and each trial's model/init/shuffle seed is the first word of the
//! `(master, trial, MODEL_INIT)` stream. Methods sharing a trial index see
//! the same data, so method comparisons are paired. Trials run in parallel
//! under `--jobs`, but records are collected in plan order — the CSV bytes
//! are independent of scheduling.

use crate::autodiff::Tensor;
use crate::baselines;
use crate::config::Config;
use crate::datasets::rng::{role, trial_stream, NormalSource};
use crate::datasets::{sample_gaussian, sample_gaussian_pair_for_trial, SamplePair};
use crate::exec::{map_indexed, Jobs};
use crate::metrics::{drm_estimate, l2_error, ErrorSide, EvalReport, GaussianPairSpec};
use crate::models::{Checkpoint, KernelRatioModel, MlpRatioModel, RatioModel};
use crate::objectives::ObjectiveSpec;
use crate::slogan::{train_slogan, GanConfig, GanHistory, Generator};
use crate::trainers::{train_dre, train_dre_with_eval, train_kliep, TrainConfig, TrainHistory};
use crate::{Error, Result};
use rand_core::RngCore;
use std::time::Instant;

/// One row of the benchmark CSV.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub method: String,
    pub lambda: Option<f64>,
    pub d: usize,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub sq_error_fwd: Option<f64>,
    pub sq_error_inv: Option<f64>,
    pub drm_estimate_likelihood: Option<f64>,
    pub drm_estimate_khat: Option<f64>,
    pub wall_time_s: Option<f64>,
    pub error: Option<String>,
}

fn opt(v: &Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Fixed CSV header; the wall-time column is optional so reruns can be
/// compared byte for byte.
pub fn csv_header(with_walltime: bool) -> String {
    let mut h = String::from(
        "method,lambda,d,n,m,seed,sq_error_fwd,sq_error_inv,drm_estimate_likelihood,drm_estimate_khat",
    );
    if with_walltime {
        h.push_str(",wall_time_s");
    }
    h.push_str(",error\n");
    h
}

pub fn csv_row(r: &RunRecord, with_walltime: bool) -> String {
    let mut row = format!(
        "{},{},{},{},{},{},{},{},{},{}",
        r.method,
        opt(&r.lambda),
        r.d,
        r.n,
        r.m,
        r.seed,
        opt(&r.sq_error_fwd),
        opt(&r.sq_error_inv),
        opt(&r.drm_estimate_likelihood),
        opt(&r.drm_estimate_khat),
    );
    if with_walltime {
        row.push(',');
        row.push_str(&opt(&r.wall_time_s));
    }
    row.push(',');
    if let Some(e) = &r.error {
        row.push_str(&e.replace(',', ";").replace('\n', " "));
    }
    row.push('\n');
    row
}

pub fn records_to_csv(records: &[RunRecord], with_walltime: bool) -> String {
    let mut out = csv_header(with_walltime);
    for r in records {
        out.push_str(&csv_row(r, with_walltime));
    }
    out
}

/// Per-trial sub-seed: the first word of the trial's MODEL_INIT stream.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    trial_stream(master, trial, role::MODEL_INIT).next_u64()
}

fn gaussian_spec(cfg: &Config, d: usize) -> GaussianPairSpec {
    GaussianPairSpec::first_coordinate(d, cfg.dataset.mu_p1, cfg.dataset.mu_q1)
}

/// Evaluation draws for a trial: X-eval from P, Z-eval from Q, on streams
/// disjoint from the training data.
pub fn eval_points(
    spec: &GaussianPairSpec,
    count: usize,
    master: u64,
    trial: u64,
) -> (Tensor, Tensor) {
    let mut src_x = NormalSource::new(trial_stream(master, trial, role::EVAL_X));
    let mut src_z = NormalSource::new(trial_stream(master, trial, role::EVAL_Z));
    let x = sample_gaussian(&spec.mu_p, count, &mut src_x);
    let z = sample_gaussian(&spec.mu_q, count, &mut src_z);
    (x, z)
}

fn train_config_for_trial(cfg: &Config, spec: ObjectiveSpec, trial: u64) -> TrainConfig {
    TrainConfig {
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        adam: crate::autodiff::AdamParams {
            lr: cfg.train.lr,
            beta1: cfg.train.beta1,
            beta2: cfg.train.beta2,
            eps: cfg.train.eps,
        },
        seed: trial_seed(cfg.train.seed, trial),
        spectral_norm: cfg.train.spectral_norm,
        spec,
        eval_every: cfg.train.eval_every,
    }
}

/// Train one DRM model for a trial and return it with its metrics.
pub fn drm_trial_model(cfg: &Config, d: usize, lambda: f64, trial: u64) -> Result<MlpRatioModel> {
    let gspec = gaussian_spec(cfg, d);
    let pair =
        sample_gaussian_pair_for_trial(&gspec, cfg.dataset.n, cfg.dataset.m, cfg.train.seed, trial);
    let spec = ObjectiveSpec {
        lambda,
        ..cfg.objective_spec()
    };
    let tc = train_config_for_trial(cfg, spec, trial);
    let mut model = MlpRatioModel::init(
        d,
        cfg.model.hidden,
        tc.seed,
        cfg.model.output_mode,
        cfg.model.rbar,
        cfg.train.spectral_norm,
    );
    train_dre(&mut model, &pair, &tc)?;
    Ok(model)
}

fn kernel_sigma(cfg: &Config, x: &Tensor, z: &Tensor) -> f64 {
    if cfg.model.kernel_sigma > 0.0 {
        cfg.model.kernel_sigma
    } else {
        let mut pooled = Vec::with_capacity((x.rows() + z.rows()) * x.cols());
        pooled.extend_from_slice(x.data());
        pooled.extend_from_slice(z.data());
        crate::metrics::median_heuristic(&Tensor::new(x.rows() + z.rows(), x.cols(), pooled))
    }
}

fn run_trial(cfg: &Config, method: &str, lambda: Option<f64>, d: usize, trial: u64) -> RunRecord {
    let start = Instant::now();
    let gspec = gaussian_spec(cfg, d);
    let mut rec = RunRecord {
        method: method.to_string(),
        lambda,
        d,
        n: cfg.dataset.n,
        m: cfg.dataset.m,
        seed: trial,
        sq_error_fwd: None,
        sq_error_inv: None,
        drm_estimate_likelihood: None,
        drm_estimate_khat: None,
        wall_time_s: None,
        error: None,
    };

    let outcome: Result<()> = (|| {
        let (x_eval, z_eval) =
            eval_points(&gspec, cfg.benchmark.eval_points, cfg.train.seed, trial);
        let model: Box<dyn RatioModel> = match method {
            "drm" => {
                let lam = lambda.expect("drm trials carry a lambda");
                let model = drm_trial_model(cfg, d, lam, trial)?;
                let est = drm_estimate(&model, lam, &x_eval, &z_eval)?;
                rec.drm_estimate_likelihood = Some(est.likelihood_part);
                rec.drm_estimate_khat = Some(est.khat);
                Box::new(model)
            }
            "ulsif" | "rulsif" => {
                let alpha = if method == "rulsif" {
                    cfg.benchmark.rulsif_alpha
                } else {
                    0.0
                };
                let pair = sample_gaussian_pair_for_trial(
                    &gspec,
                    cfg.dataset.n,
                    cfg.dataset.m,
                    cfg.train.seed,
                    trial,
                );
                let sol = baselines::fit_with_cv(
                    &pair.x,
                    &pair.z,
                    alpha,
                    cfg.model.kernel_centers,
                    cfg.benchmark.cv_folds,
                    cfg.train.seed,
                    trial,
                )?;
                Box::new(sol.to_model())
            }
            "kliep" => {
                let pair = sample_gaussian_pair_for_trial(
                    &gspec,
                    cfg.dataset.n,
                    cfg.dataset.m,
                    cfg.train.seed,
                    trial,
                );
                let centers = baselines::subsample_centers(
                    &pair.x,
                    cfg.model.kernel_centers,
                    cfg.train.seed,
                    trial,
                );
                let sigma = kernel_sigma(cfg, &pair.x, &pair.z);
                let b = centers.rows();
                let mut model = KernelRatioModel::new(centers, vec![1.0; b], sigma);
                let tc = TrainConfig {
                    epochs: cfg.benchmark.kliep_iters,
                    adam: crate::autodiff::AdamParams {
                        lr: cfg.benchmark.kliep_lr,
                        ..Default::default()
                    },
                    ..train_config_for_trial(cfg, cfg.objective_spec(), trial)
                };
                train_kliep(&mut model, &pair, &tc)?;
                Box::new(model)
            }
            other => {
                return Err(Error::Range {
                    key: "methods".to_string(),
                    msg: format!("unknown method `{other}`"),
                })
            }
        };
        rec.sq_error_fwd = Some(l2_error(
            model.as_ref(),
            &gspec,
            &z_eval,
            ErrorSide::Forward,
        )?);
        rec.sq_error_inv = Some(l2_error(
            model.as_ref(),
            &gspec,
            &x_eval,
            ErrorSide::Inverse,
        )?);
        Ok(())
    })();

    if let Err(e) = outcome {
        rec.error = Some(e.to_string());
    }
    rec.wall_time_s = Some(start.elapsed().as_secs_f64());
    rec
}

#[derive(Debug, Clone)]
struct TrialPlan {
    method: String,
    lambda: Option<f64>,
    d: usize,
    trial: u64,
}

#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub method: String,
    pub lambda: Option<f64>,
    pub d: usize,
    pub report: EvalReport,
    pub trials: usize,
}

/// Group records by (d, method, λ) and summarize the forward squared
/// errors; errored trials are excluded from the statistics. For cells that
/// carry divergence estimates, the report's `drm` field holds their mean.
pub fn summarize_records(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = Vec::new();
    for r in records {
        if rows
            .iter()
            .any(|s| s.method == r.method && s.lambda == r.lambda && s.d == r.d)
        {
            continue;
        }
        let cell: Vec<&RunRecord> = records
            .iter()
            .filter(|q| q.method == r.method && q.lambda == r.lambda && q.d == r.d)
            .collect();
        let errs: Vec<f64> = cell.iter().filter_map(|q| q.sq_error_fwd).collect();
        if errs.is_empty() {
            continue;
        }
        let mut report = EvalReport::from_errors(&errs);
        let drms: Vec<f64> = cell
            .iter()
            .filter_map(|q| q.drm_estimate_likelihood)
            .collect();
        if !drms.is_empty() {
            report.drm = Some(drms.iter().sum::<f64>() / drms.len() as f64);
        }
        rows.push(SummaryRow {
            method: r.method.clone(),
            lambda: r.lambda,
            d: r.d,
            report,
            trials: errs.len(),
        });
    }
    rows
}

pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut out = String::from("   d  method             mean       med       std  trials\n");
    for s in rows {
        let name = match s.lambda {
            Some(l) => format!("{} (lambda={})", s.method, l),
            None => s.method.clone(),
        };
        out.push_str(&format!(
            "{:>4}  {:<16} {:>8.3} {:>9.3} {:>9.3} {:>7}\n",
            s.d, name, s.report.mean, s.report.median, s.report.std, s.trials
        ));
    }
    out
}

#[derive(Debug)]
pub struct BenchmarkOutcome {
    pub records: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
    pub failed: usize,
}

/// The full sweep: every (d, method, λ, trial) cell of the config. Records
/// come back in plan order regardless of `jobs`.
pub fn run_benchmark(cfg: &Config, jobs: Jobs) -> BenchmarkOutcome {
    let mut plan: Vec<TrialPlan> = Vec::new();
    for &d in &cfg.benchmark.dims {
        for method in &cfg.benchmark.methods {
            let lambdas: Vec<Option<f64>> = if method == "drm" {
                cfg.benchmark.lambdas.iter().map(|&l| Some(l)).collect()
            } else {
                vec![None]
            };
            for lambda in lambdas {
                for trial in 0..cfg.benchmark.seeds {
                    plan.push(TrialPlan {
                        method: method.clone(),
                        lambda,
                        d,
                        trial: trial as u64,
                    });
                }
            }
        }
    }
    let records = map_indexed(jobs, plan.len(), |i| {
        let p = &plan[i];
        run_trial(cfg, &p.method, p.lambda, p.d, p.trial)
    });
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    let summary = summarize_records(&records);
    BenchmarkOutcome {
        records,
        summary,
        failed,
    }
}

#[derive(Debug)]
pub struct EstimateOutcome {
    pub model: MlpRatioModel,
    pub history: TrainHistory,
    pub report: String,
    pub pair: SamplePair,
}

/// One seeded estimation run on the configured Gaussian pair, with held-out
/// L² tracking in the history.
pub fn run_estimate(cfg: &Config) -> Result<EstimateOutcome> {
    let d = cfg.dataset.d;
    let gspec = gaussian_spec(cfg, d);
    let pair =
        sample_gaussian_pair_for_trial(&gspec, cfg.dataset.n, cfg.dataset.m, cfg.train.seed, 0);
    let (x_eval, z_eval) = eval_points(&gspec, cfg.benchmark.eval_points, cfg.train.seed, 0);
    let tc = train_config_for_trial(cfg, cfg.objective_spec(), 0);
    let mut model = MlpRatioModel::init(
        d,
        cfg.model.hidden,
        tc.seed,
        cfg.model.output_mode,
        cfg.model.rbar,
        cfg.train.spectral_norm,
    );
    let gspec_for_eval = gspec.clone();
    let z_eval_for_hook = z_eval.clone();
    let hook = move |m: &MlpRatioModel| {
        l2_error(m, &gspec_for_eval, &z_eval_for_hook, ErrorSide::Forward).unwrap_or(f64::NAN)
    };
    let history = train_dre_with_eval(&mut model, &pair, &tc, Some(&hook))?;
    let fwd = l2_error(&model, &gspec, &z_eval, ErrorSide::Forward)?;
    let inv = l2_error(&model, &gspec, &x_eval, ErrorSide::Inverse)?;
    let est = drm_estimate(&model, cfg.objective.lambda, &x_eval, &z_eval)?;
    let (r_z, _) = model.forward(&z_eval)?;
    let mean_rz = r_z.iter().sum::<f64>() / r_z.len() as f64;
    let report = format!(
        "method = drm (variant {})\nd = {}, n = {}, m = {}, lambda = {}\n\
         sq_error_fwd = {}\nsq_error_inv = {}\n\
         drm_estimate_likelihood = {}\ndrm_estimate_khat = {}\n\
         mean r(Z_eval) = {} (self-normalization check)\n",
        cfg.objective.variant.name(),
        d,
        cfg.dataset.n,
        cfg.dataset.m,
        cfg.objective.lambda,
        fwd,
        inv,
        est.likelihood_part,
        est.khat,
        mean_rz,
    );
    Ok(EstimateOutcome {
        model,
        history,
        report,
        pair,
    })
}

/// Train an estimator and report the divergence estimate between the two
/// configured distributions, in both conventions, next to the closed form.
pub fn run_drm_report(cfg: &Config) -> Result<String> {
    let est = run_estimate(cfg)?;
    let gspec = gaussian_spec(cfg, cfg.dataset.d);
    let kl = crate::metrics::gaussian_kl(&gspec);
    let lambda = cfg.objective.lambda;
    let (x_eval, z_eval) = eval_points(&gspec, cfg.benchmark.eval_points, cfg.train.seed, 0);
    let e = drm_estimate(&est.model, lambda, &x_eval, &z_eval)?;
    Ok(format!(
        "drm_estimate (likelihood part) = {}\ndrm_estimate (khat) = {}\n\
         closed-form lambda*KL + (1-lambda)*inverse-KL = {}\n",
        e.likelihood_part,
        e.khat,
        lambda * kl + (1.0 - lambda) * kl,
    ))
}

#[derive(Debug)]
pub struct GanOutcome {
    pub generator: Generator,
    pub discriminator: MlpRatioModel,
    pub history: GanHistory,
    pub samples: Tensor,
    pub initial_mmd: f64,
    pub final_mmd: f64,
}

pub fn gan_config(cfg: &Config) -> GanConfig {
    GanConfig {
        shape: cfg.gan.shape,
        lambda: cfg.objective.lambda,
        disc_steps: cfg.gan.disc_steps,
        epochs: cfg.gan.epochs,
        batch: cfg.gan.batch,
        seed: cfg.train.seed,
        real_n: cfg.gan.real_n,
        val_n: cfg.gan.val_n,
        eval_samples: cfg.gan.eval_samples,
        eval_every: cfg.gan.eval_every,
        noise_dim: cfg.gan.noise_dim,
        gen_hidden: cfg.gan.gen_hidden,
        disc_hidden: cfg.gan.disc_hidden,
        rbar: cfg.model.rbar,
        spectral_norm: cfg.train.spectral_norm,
        adam_disc: crate::autodiff::AdamParams {
            lr: cfg.gan.lr_disc,
            beta1: cfg.train.beta1,
            beta2: cfg.train.beta2,
            eps: cfg.train.eps,
        },
        adam_gen: crate::autodiff::AdamParams {
            lr: cfg.gan.lr_gen,
            beta1: cfg.train.beta1,
            beta2: cfg.train.beta2,
            eps: cfg.train.eps,
        },
    }
}

/// Run the GAN pipeline: training, the final sample dump, and the
/// improvement-over-initialization comparison.
pub fn run_gan(cfg: &Config) -> Result<GanOutcome> {
    let gc = gan_config(cfg);
    let (generator, discriminator, history) = train_slogan(&gc)?;
    let mut src = NormalSource::new(trial_stream(gc.seed, u32::MAX as u64, role::EVAL_NOISE));
    let noise = Tensor::new(
        gc.eval_samples,
        gc.noise_dim,
        (0..gc.eval_samples * gc.noise_dim)
            .map(|_| src.next())
            .collect(),
    );
    let samples = generator.forward(&noise)?;
    let initial_mmd = history.rows.first().map(|r| r.mmd).unwrap_or(f64::NAN);
    let final_mmd = history.rows.last().map(|r| r.mmd).unwrap_or(f64::NAN);
    Ok(GanOutcome {
        generator,
        discriminator,
        history,
        samples,
        initial_mmd,
        final_mmd,
    })
}

/// Point cloud CSV `x,y` for external plotting.
pub fn samples_to_csv(samples: &Tensor) -> String {
    let mut out = String::from("x,y\n");
    for r in 0..samples.rows() {
        out.push_str(&format!("{},{}\n", samples.get(r, 0), samples.get(r, 1)));
    }
    out
}

/// Save the estimate-run model as a checkpoint value.
pub fn estimate_checkpoint(outcome: &EstimateOutcome) -> Checkpoint {
    Checkpoint::Mlp(outcome.model.clone())
}
