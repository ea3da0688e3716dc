//! Asymptotic power of the accuracy test across inability and test-set size,
//! with a Monte-Carlo column for comparison.
use c2st::checks::simulate_threshold_power;
use c2st::stats::{objective_j, theoretical_power, PowerInputs};

fn main() -> c2st::Result<()> {
    println!("{:>5} {:>5} {:>7} {:>7} {:>7}", "eps", "n_te", "J", "theory", "sim");
    for epsilon in [0.3, 0.4, 0.45, 0.49] {
        for n_te in [100, 400, 1600] {
            let theory = theoretical_power(&PowerInputs {
                epsilon,
                n_te,
                alpha: 0.05,
            })?;
            let sim = simulate_threshold_power(epsilon, n_te, 0.05, 20_000, 1);
            println!(
                "{epsilon:>5} {n_te:>5} {:>7.4} {theory:>7.4} {sim:>7.4}",
                objective_j(epsilon)?
            );
        }
    }
    Ok(())
}
