use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use c2st::checks;
use c2st::harness::{self, GridConfig, RunOptions};
use c2st::hdgm::{build_dataset, sample_hdgm, write_jsonl, DatasetHeader, HdgmSpec};
use c2st::rng::{substream, Stream};
use c2st::stats::{null_threshold, objective_j, theoretical_power, PowerInputs};
use c2st::{ExperimentConfig, Hypothesis, Level, Method, PowerEstimate, TestOutcome};

#[derive(Parser)]
#[command(name = "c2st", version, about = "Classifier two-sample tests on Gaussian mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample P and Q and write them as labeled JSONL.
    Gen {
        #[arg(long, value_enum, default_value = "hard")]
        level: Level,
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long, value_enum, default_value = "h1")]
        hypothesis: Hypothesis,
        /// Points per mixture component per distribution.
        #[arg(long, default_value_t = 500)]
        n_per_cluster: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when absent.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run every trial of one cell and print the estimate and outcomes as JSON.
    Run(RunArgs),
    /// Run a grid of cells, appending one CSV row per cell.
    Sweep {
        /// Grid JSON file.
        grid: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Asymptotic power of the accuracy test.
    Theory {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        n_te: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Gradient, oracle and uniformity self-checks.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct ExecArgs {
    /// Worker threads for trials within a cell.
    #[arg(long)]
    jobs: Option<usize>,
    /// Abort a cell once this many seconds have elapsed.
    #[arg(long)]
    max_seconds: Option<f64>,
}

impl ExecArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            jobs: self.jobs,
            max_seconds: self.max_seconds,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Base configuration JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    #[arg(long, value_enum)]
    level: Option<Level>,
    #[arg(long, value_enum)]
    hypothesis: Option<Hypothesis>,
    #[arg(long)]
    d: Option<usize>,
    /// Total sample size N across both distributions.
    #[arg(long = "n")]
    n_total: Option<usize>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    n_perm: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    unlabeled_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    exec: ExecArgs,
}

impl RunArgs {
    fn config(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg: ExperimentConfig = match &self.config {
            Some(path) => {
                serde_json::from_reader(File::open(path).with_context(|| format!("opening {}", path.display()))?)
                    .with_context(|| format!("parsing {}", path.display()))?
            }
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:expr),*) => {$(if let Some(v) = self.$field { $target = v; })*};
        }
        set!(method => cfg.method, level => cfg.level, hypothesis => cfg.hypothesis, d => cfg.d,
             n_total => cfg.n_total, trials => cfg.trials, n_perm => cfg.n_perm, alpha => cfg.alpha,
             unlabeled_fraction => cfg.train.unlabeled_fraction, seed => cfg.seed);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Serialize)]
struct RunReport<'a> {
    config: &'a ExperimentConfig,
    estimate: PowerEstimate,
    runtime_s: f64,
    outcomes: Vec<TestOutcome>,
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    serde_json::to_writer_pretty(&mut lock, value)?;
    writeln!(lock)?;
    Ok(())
}

fn gen(
    level: Level,
    d: usize,
    hypothesis: Hypothesis,
    n: usize,
    seed: u64,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let p = HdgmSpec::p(d, level);
    let q = match hypothesis {
        Hypothesis::H0 => HdgmSpec::q_null(d, level),
        Hypothesis::H1 => HdgmSpec::q_alt(d, level),
    };
    let sp = sample_hdgm(&p, n, substream(seed, Stream::SampleP))?;
    let sq = sample_hdgm(&q, n, substream(seed, Stream::SampleQ))?;
    let ds = build_dataset(&sp, &sq)?;
    let header = DatasetHeader {
        p,
        q,
        n_per_cluster: n,
        seed,
    };
    match out {
        Some(path) => {
            let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(file);
            write_jsonl(&mut w, Some(&header), &ds)?;
            w.flush()?;
        }
        None => write_jsonl(io::stdout().lock(), Some(&header), &ds)?,
    }
    Ok(())
}

fn check(seed: u64) -> anyhow::Result<bool> {
    let mut ok = true;
    let mut line = |name: &str, pass: bool, detail: String| {
        ok &= pass;
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    };

    let g = checks::gradient_check(10, seed)?;
    line(
        "gradients",
        g.max_relative_error < 1e-5,
        format!("{} params, max rel err {:.2e}", g.parameters, g.max_relative_error),
    );

    let cells = checks::power_check(&[0.3, 0.4, 0.45], &[100, 400], 0.05, 100_000, seed)?;
    let worst = cells.iter().map(|c| (c.theory - c.simulated).abs()).fold(0.0, f64::max);
    line(
        "power formula vs simulation",
        worst <= 0.02,
        format!("max |gap| {worst:.4}"),
    );

    let pb = checks::poisson_binomial_check(200, 0.7)?;
    line(
        "poisson-binomial",
        pb.mass_error < 1e-12 && pb.binomial_error < 1e-12 && pb.normal_distance < 0.05,
        format!(
            "mass {:.1e}, vs binomial {:.1e}, normal sup {:.4}",
            pb.mass_error, pb.binomial_error, pb.normal_distance
        ),
    );

    let null = checks::null_calibration(500, 30, 99, 0.05, seed)?;
    line(
        "permutation null calibration",
        (0.01..=0.10).contains(&null.rejection_rate) && null.ks_distance < 0.10,
        format!("rejection rate {:.3}, KS {:.3}", null.rejection_rate, null.ks_distance),
    );
    Ok(ok)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> anyhow::Result<bool> {
    match Cli::parse().command {
        Command::Gen {
            level,
            d,
            hypothesis,
            n_per_cluster,
            seed,
            out,
        } => gen(level, d, hypothesis, n_per_cluster, seed, out).map(|_| true),
        Command::Run(args) => {
            let cfg = args.config()?;
            let res = harness::run_cell(&cfg, &args.exec.options())?;
            print_json(&RunReport {
                config: &cfg,
                estimate: res.estimate,
                runtime_s: res.runtime_s,
                outcomes: res.outcomes,
            })?;
            Ok(true)
        }
        Command::Sweep { grid, out, exec } => {
            let grid: GridConfig =
                serde_json::from_reader(File::open(&grid).with_context(|| format!("opening {}", grid.display()))?)
                    .context("parsing grid")?;
            let summary = harness::sweep(&grid, &out, &exec.options())?;
            eprintln!(
                "wrote {} rows ({} skipped, {} timed out) to {}",
                summary.written.len(),
                summary.skipped,
                summary.timed_out,
                out.display()
            );
            Ok(summary.timed_out == 0)
        }
        Command::Theory { eps, n_te, alpha } => {
            let inputs = PowerInputs {
                epsilon: eps,
                n_te,
                alpha,
            };
            let power = theoretical_power(&inputs)?;
            if !(0.0..=1.0).contains(&power) {
                bail!("power out of range: {power}");
            }
            print_json(&serde_json::json!({
                "epsilon": eps,
                "n_te": n_te,
                "alpha": alpha,
                "power": power,
                "threshold": null_threshold(n_te, alpha),
                "objective_j": objective_j(eps)?,
            }))?;
            Ok(true)
        }
        Command::Check { seed } => check(seed),
    }
}
