//! `drekit` — batch harness for density-ratio estimation experiments.
//!
//! Subcommands:
//! - `estimate` — train one ratio model on the configured Gaussian pair and
//!   report its errors, divergence estimates, history CSV and checkpoint
//! - `benchmark` — the multi-trial sweep (methods × dims × lambdas × seeds):
//!   runs.csv, a summary table, and boxplot SVGs
//! - `drm` — train and report the divergence estimate between the two
//!   configured distributions
//! - `gan` — train the 2-D shape GAN: history CSV, sample dump, curve SVG,
//!   and an improvement-over-initialization line
//!
//! Exit code is non-zero if any benchmark trial recorded an error.

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use drekit::config::{parse_config, Config};
use drekit::exec::Jobs;
use drekit::harness;
use drekit::models::save_checkpoint;
use drekit::plot;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "drekit", about = "density-ratio estimation toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file (sectioned key = value); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV/SVG/checkpoint files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Print the fully resolved config and exit.
    #[arg(long)]
    print_config: bool,
    /// Suppress the wall_time_s column so reruns are byte-identical.
    #[arg(long)]
    no_walltime: bool,
    /// Worker threads for trial-level parallelism (0 = all cores).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Single estimation run.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Also dump the sampled training data as CSV.
        #[arg(long)]
        dump_data: bool,
    },
    /// Multi-trial benchmark sweep.
    Benchmark {
        #[command(flatten)]
        common: Common,
    },
    /// Divergence estimate between the configured distributions.
    Drm {
        #[command(flatten)]
        common: Common,
    },
    /// Train the 2-D shape GAN.
    Gan {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(path) => parse_config(path).with_context(|| format!("reading {}", path.display()))?,
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Estimate { common, dump_data } => cmd_estimate(&common, dump_data)?,
        Command::Benchmark { common } => cmd_benchmark(&common)?,
        Command::Drm { common } => cmd_drm(&common)?,
        Command::Gan { common } => cmd_gan(&common)?,
    };
    std::process::exit(code);
}

fn cmd_estimate(common: &Common, dump_data: bool) -> Result<i32> {
    let cfg = load_config(common)?;
    if common.print_config {
        print!("{}", cfg.print());
        return Ok(0);
    }
    let outcome = harness::run_estimate(&cfg)?;
    write(&common.out.join("history.csv"), &outcome.history.to_csv())?;
    save_checkpoint(
        &common.out.join("model.ckpt"),
        &harness::estimate_checkpoint(&outcome),
    )?;
    if dump_data {
        write(
            &common.out.join("data.csv"),
            &drekit::datasets::dump_csv(&outcome.pair),
        )?;
    }
    let curve: Vec<(f64, f64)> = outcome
        .history
        .rows
        .iter()
        .filter_map(|r| r.l2_error.map(|e| (r.epoch as f64, e)))
        .collect();
    write(
        &common.out.join("history.svg"),
        &plot::curve_svg("held-out squared error", &[("l2_error".into(), curve)]),
    )?;
    print!("{}", outcome.report);
    println!("wrote {}", common.out.display());
    Ok(0)
}

fn cmd_benchmark(common: &Common) -> Result<i32> {
    let cfg = load_config(common)?;
    if common.print_config {
        print!("{}", cfg.print());
        return Ok(0);
    }
    let outcome = harness::run_benchmark(&cfg, Jobs::from_flag(common.jobs));
    let csv = harness::records_to_csv(&outcome.records, !common.no_walltime);
    write(&common.out.join("runs.csv"), &csv)?;
    let summary = harness::format_summary(&outcome.summary);
    write(&common.out.join("summary.txt"), &summary)?;
    for &d in &cfg.benchmark.dims {
        let groups: Vec<(String, Vec<f64>)> = outcome
            .summary
            .iter()
            .filter(|s| s.d == d)
            .map(|s| {
                let label = match s.lambda {
                    Some(l) => format!("{}({})", s.method, l),
                    None => s.method.clone(),
                };
                let vals: Vec<f64> = outcome
                    .records
                    .iter()
                    .filter(|r| r.d == d && r.method == s.method && r.lambda == s.lambda)
                    .filter_map(|r| r.sq_error_fwd)
                    .collect();
                (label, vals)
            })
            .collect();
        write(
            &common.out.join(format!("boxplot_d{d}.svg")),
            &plot::boxplot_svg(&format!("squared error, d = {d}"), &groups),
        )?;
    }
    print!("{summary}");
    if outcome.failed > 0 {
        eprintln!("{} trial(s) recorded errors", outcome.failed);
        return Ok(1);
    }
    println!("wrote {}", common.out.display());
    Ok(0)
}

fn cmd_drm(common: &Common) -> Result<i32> {
    let cfg = load_config(common)?;
    if common.print_config {
        print!("{}", cfg.print());
        return Ok(0);
    }
    let report = harness::run_drm_report(&cfg)?;
    print!("{report}");
    Ok(0)
}

fn cmd_gan(common: &Common) -> Result<i32> {
    let cfg = load_config(common)?;
    if common.print_config {
        print!("{}", cfg.print());
        return Ok(0);
    }
    let outcome = harness::run_gan(&cfg)?;
    write(
        &common.out.join("gan_history.csv"),
        &outcome.history.to_csv(),
    )?;
    write(
        &common.out.join("gan_samples.csv"),
        &harness::samples_to_csv(&outcome.samples),
    )?;
    let mmd_curve: Vec<(f64, f64)> = outcome
        .history
        .rows
        .iter()
        .map(|r| (r.epoch as f64, r.mmd))
        .collect();
    let drm_values: Vec<f64> = outcome
        .history
        .rows
        .iter()
        .map(|r| r.drm_estimate)
        .collect();
    let smoothed = drekit::slogan::smooth_window(&drm_values, 10);
    let drm_curve: Vec<(f64, f64)> = outcome
        .history
        .rows
        .iter()
        .zip(&smoothed)
        .map(|(r, &v)| (r.epoch as f64, v))
        .collect();
    write(
        &common.out.join("gan_curves.svg"),
        &plot::curve_svg(
            "training metrics",
            &[
                ("mmd".into(), mmd_curve),
                ("drm_estimate (window 10)".into(), drm_curve),
            ],
        ),
    )?;
    let improvement = format!(
        "improvement: initial_mmd = {} final_mmd = {} improved = {}\n",
        outcome.initial_mmd,
        outcome.final_mmd,
        outcome.final_mmd < outcome.initial_mmd
    );
    write(&common.out.join("gan_improvement.txt"), &improvement)?;
    print!("{improvement}");
    println!("wrote {}", common.out.display());
    Ok(0)
}
