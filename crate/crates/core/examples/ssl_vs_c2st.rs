//! Power of the four methods on HDGM-Hard with a handful of trials.
//!
//! Usage: `ssl_vs_c2st [N] [trials]` (defaults 4000 and 10).
use c2st::harness::{run_cell, RunOptions};
use c2st::{ExperimentConfig, Method};

fn main() -> c2st::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_total = args.next().map_or(4000, |a| a.parse().expect("N"));
    let trials = args.next().map_or(10, |a| a.parse().expect("trials"));
    for method in [Method::C2st, Method::SslC2st, Method::C2stM, Method::SslC2stM] {
        let cfg = ExperimentConfig {
            method,
            n_total,
            trials,
            ..ExperimentConfig::default()
        };
        let res = run_cell(&cfg, &RunOptions::default())?;
        println!(
            "{:<11} N={n_total} power {:.2} ± {:.2}  ({:.1}s)",
            method.name(),
            res.estimate.rate,
            res.estimate.stderr,
            res.runtime_s
        );
    }
    Ok(())
}
