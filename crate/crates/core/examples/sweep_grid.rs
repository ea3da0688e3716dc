//! A tiny resumable sweep written to a CSV file in the temp directory.
use c2st::harness::{read_csv, sweep, GridConfig, RunOptions};
use c2st::{ExperimentConfig, Hypothesis, Level, Method, TrainConfig};

fn main() -> c2st::Result<()> {
    let grid = GridConfig {
        base: ExperimentConfig {
            level: Level::Easy,
            trials: 5,
            train: TrainConfig {
                epochs_autoencoder: 20,
                epochs_classifier: 20,
                ..TrainConfig::default()
            },
            ..ExperimentConfig::default()
        },
        methods: vec![Method::C2st, Method::SslC2st],
        hypotheses: vec![Hypothesis::H0, Hypothesis::H1],
        n_totals: vec![100, 200],
        ..GridConfig::default()
    };
    let out = std::env::temp_dir().join("c2st_sweep_example.csv");
    let _ = std::fs::remove_file(&out);
    let first = sweep(&grid, &out, &RunOptions::default())?;
    let again = sweep(&grid, &out, &RunOptions::default())?;
    println!(
        "wrote {} rows, second pass skipped {}",
        first.written.len(),
        again.skipped
    );
    for row in read_csv(&out)? {
        println!(
            "{:<9} {:<10} {} N={:<4} rate {}",
            row.method, row.dataset, row.hypothesis, row.n, row.rate
        );
    }
    Ok(())
}
