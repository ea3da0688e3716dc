//! Exact law of the number of correct test predictions when each point has
//! its own probability of being classified correctly.
use c2st::stats::distribution::{cumulative, normal_approximation_distance, poisson_binomial_pmf};

fn main() -> c2st::Result<()> {
    let probs: Vec<f64> = (0..200).map(|i| 0.5 + 0.4 * (i as f64 / 199.0)).collect();
    let pmf = poisson_binomial_pmf(&probs)?;
    let cdf = cumulative(&pmf);
    let mean: f64 = probs.iter().sum();
    let median = cdf.iter().position(|&c| c >= 0.5).unwrap();
    println!("mean {mean:.1}, median {median}, mass {:.15}", pmf.iter().sum::<f64>());
    println!("sup |F - normal| = {:.4}", normal_approximation_distance(&probs)?);
    Ok(())
}
