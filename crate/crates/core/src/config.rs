//! Experiment configuration: a sectioned `key = value` text format.
//!
//! ```text
//! # comments start with '#'
//! [dataset]
//! d = 2
//! n = 1000
//!
//! [objective]
//! lambda = 0.5
//! ```
//!
//! Unknown sections or keys are hard errors with the offending line number;
//! values are validated on parse (`lambda = 1.5` names the key in its range
//! error). [`Config::print`] emits the canonical form with every default
//! filled in, and `parse(print(cfg))` reproduces `cfg` exactly.

use crate::datasets::Shape2D;
use crate::models::OutputMode;
use crate::objectives::{ObjectiveSpec, Variant};
use crate::{Error, Result};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSection {
    pub d: usize,
    pub n: usize,
    pub m: usize,
    /// First coordinate of μ_p; remaining coordinates are zero.
    pub mu_p1: f64,
    /// First coordinate of μ_q; remaining coordinates are zero.
    pub mu_q1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub hidden: usize,
    pub rbar: f64,
    pub output_mode: OutputMode,
    /// Center cap for kernel methods.
    pub kernel_centers: usize,
    /// Kernel bandwidth; 0 means the median heuristic.
    pub kernel_sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSection {
    pub lambda: f64,
    pub variant: Variant,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub spectral_norm: bool,
    pub eval_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSection {
    /// Any of: drm, ulsif, rulsif, kliep.
    pub methods: Vec<String>,
    pub dims: Vec<usize>,
    /// λ values swept for the drm method.
    pub lambdas: Vec<f64>,
    /// Trials per cell.
    pub seeds: usize,
    /// Held-out Monte-Carlo points per error estimate.
    pub eval_points: usize,
    pub rulsif_alpha: f64,
    pub cv_folds: usize,
    pub kliep_iters: usize,
    pub kliep_lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanSection {
    pub shape: Shape2D,
    pub epochs: usize,
    pub batch: usize,
    pub disc_steps: usize,
    pub noise_dim: usize,
    pub gen_hidden: usize,
    pub disc_hidden: usize,
    pub real_n: usize,
    pub val_n: usize,
    pub eval_samples: usize,
    pub eval_every: usize,
    pub lr_gen: f64,
    pub lr_disc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub objective: ObjectiveSection,
    pub train: TrainSection,
    pub benchmark: BenchmarkSection,
    pub gan: GanSection,
}

impl Default for Config {
    fn default() -> Config {
        Config {
            dataset: DatasetSection {
                d: 2,
                n: 1000,
                m: 1000,
                mu_p1: 0.0,
                mu_q1: 1.0,
            },
            model: ModelSection {
                hidden: 32,
                rbar: 1e6,
                output_mode: OutputMode::Exponential,
                kernel_centers: 100,
                kernel_sigma: 0.0,
            },
            objective: ObjectiveSection {
                lambda: 0.5,
                variant: Variant::Stratified,
                c: 0.0,
            },
            train: TrainSection {
                epochs: 200,
                batch_size: 128,
                lr: 1e-3,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                seed: 0,
                spectral_norm: true,
                eval_every: 10,
            },
            benchmark: BenchmarkSection {
                methods: vec!["drm".into(), "ulsif".into()],
                dims: vec![2],
                lambdas: vec![0.1, 0.5],
                seeds: 10,
                eval_points: 10_000,
                rulsif_alpha: 0.1,
                cv_folds: 5,
                kliep_iters: 300,
                kliep_lr: 0.1,
            },
            gan: GanSection {
                shape: Shape2D::MoG,
                epochs: 2000,
                batch: 256,
                disc_steps: 2,
                noise_dim: 8,
                gen_hidden: 64,
                disc_hidden: 32,
                real_n: 20_000,
                val_n: 5_000,
                eval_samples: 5_000,
                eval_every: 100,
                lr_gen: 2e-4,
                lr_disc: 5e-4,
            },
        }
    }
}

impl Config {
    /// The objective spec assembled from `[objective]` and `[model]`.
    pub fn objective_spec(&self) -> ObjectiveSpec {
        ObjectiveSpec {
            lambda: self.objective.lambda,
            variant: self.objective.variant,
            c: self.objective.c,
            rbar: self.model.rbar,
        }
    }

    /// Canonical text form with every key present.
    pub fn print(&self) -> String {
        let d = &self.dataset;
        let m = &self.model;
        let o = &self.objective;
        let t = &self.train;
        let b = &self.benchmark;
        let g = &self.gan;
        let join_f = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let join_u = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "[dataset]\n\
             d = {}\nn = {}\nm = {}\nmu_p1 = {}\nmu_q1 = {}\n\
             \n[model]\n\
             hidden = {}\nrbar = {}\noutput_mode = {}\nkernel_centers = {}\nkernel_sigma = {}\n\
             \n[objective]\n\
             lambda = {}\nvariant = {}\nc = {}\n\
             \n[train]\n\
             epochs = {}\nbatch_size = {}\nlr = {}\nbeta1 = {}\nbeta2 = {}\neps = {}\nseed = {}\nspectral_norm = {}\neval_every = {}\n\
             \n[benchmark]\n\
             methods = {}\ndims = {}\nlambdas = {}\nseeds = {}\neval_points = {}\nrulsif_alpha = {}\ncv_folds = {}\nkliep_iters = {}\nkliep_lr = {}\n\
             \n[gan]\n\
             shape = {}\nepochs = {}\nbatch = {}\ndisc_steps = {}\nnoise_dim = {}\ngen_hidden = {}\ndisc_hidden = {}\nreal_n = {}\nval_n = {}\neval_samples = {}\neval_every = {}\nlr_gen = {}\nlr_disc = {}\n",
            d.d, d.n, d.m, d.mu_p1, d.mu_q1,
            m.hidden, m.rbar, m.output_mode.name(), m.kernel_centers, m.kernel_sigma,
            o.lambda, o.variant.name(), o.c,
            t.epochs, t.batch_size, t.lr, t.beta1, t.beta2, t.eps, t.seed, t.spectral_norm, t.eval_every,
            b.methods.join(","), join_u(&b.dims), join_f(&b.lambdas), b.seeds, b.eval_points,
            b.rulsif_alpha, b.cv_folds, b.kliep_iters, b.kliep_lr,
            g.shape.name(), g.epochs, g.batch, g.disc_steps, g.noise_dim, g.gen_hidden,
            g.disc_hidden, g.real_n, g.val_n, g.eval_samples, g.eval_every, g.lr_gen, g.lr_disc,
        )
    }
}

fn range_err(key: &str, msg: impl Into<String>) -> Error {
    Error::Range {
        key: key.to_string(),
        msg: msg.into(),
    }
}

struct KeyValue<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
}

impl<'a> KeyValue<'a> {
    fn parse<T: std::str::FromStr>(&self) -> Result<T> {
        self.value.parse().map_err(|_| Error::Parse {
            line: self.line,
            msg: format!("cannot parse value `{}` for key `{}`", self.value, self.key),
        })
    }

    fn parse_bool(&self) -> Result<bool> {
        match self.value {
            "true" | "1" => Ok(true),
            "false" | "0" => Ok(false),
            _ => Err(Error::Parse {
                line: self.line,
                msg: format!("expected true/false for `{}`", self.key),
            }),
        }
    }

    fn parse_list<T: std::str::FromStr>(&self) -> Result<Vec<T>> {
        self.value
            .split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| Error::Parse {
                    line: self.line,
                    msg: format!(
                        "cannot parse list entry `{}` for key `{}`",
                        s.trim(),
                        self.key
                    ),
                })
            })
            .collect()
    }

    fn positive_f64(&self) -> Result<f64> {
        let v: f64 = self.parse()?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(range_err(self.key, format!("{v} must be positive")))
        }
    }

    fn unit_interval(&self) -> Result<f64> {
        let v: f64 = self.parse()?;
        if (0.0..=1.0).contains(&v) {
            Ok(v)
        } else {
            Err(range_err(self.key, format!("{v} is outside [0, 1]")))
        }
    }

    fn at_least(&self, min: usize) -> Result<usize> {
        let v: usize = self.parse()?;
        if v >= min {
            Ok(v)
        } else {
            Err(range_err(self.key, format!("{v} must be at least {min}")))
        }
    }
}

const METHODS: [&str; 4] = ["drm", "ulsif", "rulsif", "kliep"];

/// Parse a config with defaults filled in for absent keys. An empty string
/// yields `Config::default()`. Selecting `variant = nn_stratified` without
/// an explicit `c` defaults the correction constant to `1/rbar`.
pub fn parse_config_str(text: &str) -> Result<Config> {
    let mut cfg = Config::default();
    let mut c_explicit = false;
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or(Error::Parse {
                line: line_no,
                msg: "unterminated section header".to_string(),
            })?;
            if !["dataset", "model", "objective", "train", "benchmark", "gan"].contains(&name) {
                return Err(Error::UnknownKey {
                    key: format!("[{name}]"),
                    line: line_no,
                });
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(Error::Parse {
            line: line_no,
            msg: format!("expected `key = value`, found `{line}`"),
        })?;
        let kv = KeyValue {
            line: line_no,
            key: key.trim(),
            value: value.trim(),
        };
        if section == "objective" && kv.key == "c" {
            c_explicit = true;
        }
        apply_key(&mut cfg, &section, &kv)?;
    }
    if cfg.objective.variant == Variant::NnStratified && !c_explicit {
        cfg.objective.c = 1.0 / cfg.model.rbar;
    }
    // cross-field checks
    if cfg.model.rbar <= 1.0 {
        return Err(range_err("rbar", "clip bound must exceed 1"));
    }
    for m in &cfg.benchmark.methods {
        if !METHODS.contains(&m.as_str()) {
            return Err(range_err("methods", format!("unknown method `{m}`")));
        }
    }
    for l in &cfg.benchmark.lambdas {
        if !(0.0..=1.0).contains(l) {
            return Err(range_err("lambdas", format!("{l} is outside [0, 1]")));
        }
    }
    Ok(cfg)
}

fn apply_key(cfg: &mut Config, section: &str, kv: &KeyValue<'_>) -> Result<()> {
    let unknown = || {
        Err(Error::UnknownKey {
            key: if section.is_empty() {
                kv.key.to_string()
            } else {
                format!("{section}.{}", kv.key)
            },
            line: kv.line,
        })
    };
    match section {
        "dataset" => match kv.key {
            "d" => cfg.dataset.d = kv.at_least(1)?,
            "n" => cfg.dataset.n = kv.at_least(1)?,
            "m" => cfg.dataset.m = kv.at_least(1)?,
            "mu_p1" => cfg.dataset.mu_p1 = kv.parse()?,
            "mu_q1" => cfg.dataset.mu_q1 = kv.parse()?,
            _ => return unknown(),
        },
        "model" => match kv.key {
            "hidden" => cfg.model.hidden = kv.at_least(1)?,
            "rbar" => cfg.model.rbar = kv.positive_f64()?,
            "output_mode" => cfg.model.output_mode = OutputMode::parse(kv.value)?,
            "kernel_centers" => cfg.model.kernel_centers = kv.at_least(1)?,
            "kernel_sigma" => {
                let v: f64 = kv.parse()?;
                if v < 0.0 {
                    return Err(range_err("kernel_sigma", "must be 0 (median) or positive"));
                }
                cfg.model.kernel_sigma = v;
            }
            _ => return unknown(),
        },
        "objective" => match kv.key {
            "lambda" => cfg.objective.lambda = kv.unit_interval()?,
            "variant" => cfg.objective.variant = Variant::parse(kv.value)?,
            "c" => {
                let v: f64 = kv.parse()?;
                if v < 0.0 {
                    return Err(range_err("c", format!("{v} is negative")));
                }
                cfg.objective.c = v;
            }
            _ => return unknown(),
        },
        "train" => match kv.key {
            "epochs" => cfg.train.epochs = kv.parse()?,
            "batch_size" => cfg.train.batch_size = kv.at_least(1)?,
            "lr" => cfg.train.lr = kv.positive_f64()?,
            "beta1" => cfg.train.beta1 = kv.unit_interval()?,
            "beta2" => cfg.train.beta2 = kv.unit_interval()?,
            "eps" => cfg.train.eps = kv.positive_f64()?,
            "seed" => cfg.train.seed = kv.parse()?,
            "spectral_norm" => cfg.train.spectral_norm = kv.parse_bool()?,
            "eval_every" => cfg.train.eval_every = kv.at_least(1)?,
            _ => return unknown(),
        },
        "benchmark" => match kv.key {
            "methods" => cfg.benchmark.methods = kv.parse_list()?,
            "dims" => cfg.benchmark.dims = kv.parse_list()?,
            "lambdas" => cfg.benchmark.lambdas = kv.parse_list()?,
            "seeds" => cfg.benchmark.seeds = kv.at_least(1)?,
            "eval_points" => cfg.benchmark.eval_points = kv.at_least(1)?,
            "rulsif_alpha" => {
                let v: f64 = kv.parse()?;
                if !(0.0..1.0).contains(&v) {
                    return Err(range_err("rulsif_alpha", format!("{v} is outside [0, 1)")));
                }
                cfg.benchmark.rulsif_alpha = v;
            }
            "cv_folds" => cfg.benchmark.cv_folds = kv.at_least(2)?,
            "kliep_iters" => cfg.benchmark.kliep_iters = kv.at_least(1)?,
            "kliep_lr" => cfg.benchmark.kliep_lr = kv.positive_f64()?,
            _ => return unknown(),
        },
        "gan" => match kv.key {
            "shape" => cfg.gan.shape = Shape2D::parse(kv.value)?,
            "epochs" => cfg.gan.epochs = kv.parse()?,
            "batch" => cfg.gan.batch = kv.at_least(1)?,
            "disc_steps" => cfg.gan.disc_steps = kv.at_least(1)?,
            "noise_dim" => cfg.gan.noise_dim = kv.at_least(1)?,
            "gen_hidden" => cfg.gan.gen_hidden = kv.at_least(1)?,
            "disc_hidden" => cfg.gan.disc_hidden = kv.at_least(1)?,
            "real_n" => cfg.gan.real_n = kv.at_least(1)?,
            "val_n" => cfg.gan.val_n = kv.at_least(1)?,
            "eval_samples" => cfg.gan.eval_samples = kv.at_least(1)?,
            "eval_every" => cfg.gan.eval_every = kv.at_least(1)?,
            "lr_gen" => cfg.gan.lr_gen = kv.positive_f64()?,
            "lr_disc" => cfg.gan.lr_disc = kv.positive_f64()?,
            _ => return unknown(),
        },
        "" => return unknown(),
        _ => unreachable!("section names are validated at the header"),
    }
    Ok(())
}

pub fn parse_config(path: &Path) -> Result<Config> {
    parse_config_str(&std::fs::read_to_string(path)?)
}
