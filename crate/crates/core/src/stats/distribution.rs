//! Exact laws of the accuracy count.
//!
//! Under the null the number of correct test predictions is
//! `Binomial(n_te, 1/2)`. Under the alternative each test point has its own
//! success probability, so the count is Poisson-binomial.

use crate::error::{Error, Result};
use crate::stats::normal;

/// Exact pmf of a sum of independent Bernoulli(`p_i`) variables, indexed `0..=n`.
pub fn poisson_binomial_pmf(probs: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Domain {
            name: "bernoulli probability",
            value: *bad,
            domain: "[0, 1]",
        });
    }
    let mut pmf = Vec::with_capacity(probs.len() + 1);
    pmf.push(1.0);
    for &p in probs {
        pmf.push(0.0);
        for k in (1..pmf.len()).rev() {
            pmf[k] = pmf[k] * (1.0 - p) + pmf[k - 1] * p;
        }
        pmf[0] *= 1.0 - p;
    }
    Ok(pmf)
}

/// Running sums of a pmf.
pub fn cumulative(pmf: &[f64]) -> Vec<f64> {
    pmf.iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

/// Kolmogorov distance `sup_x |F(x) - Φ((x - μ)/σ)|` between the exact
/// Poisson-binomial CDF and its moment-matched normal approximation.
pub fn normal_approximation_distance(probs: &[f64]) -> Result<f64> {
    let pmf = poisson_binomial_pmf(probs)?;
    let mean: f64 = probs.iter().sum();
    let var: f64 = probs.iter().map(|p| p * (1.0 - p)).sum();
    if var <= 0.0 {
        return Err(Error::InvalidInput(
            "degenerate Poisson-binomial has no normal approximation".into(),
        ));
    }
    let sd = var.sqrt();
    let cdf = cumulative(&pmf);
    // The step CDF jumps at each integer k: compare Φ(k) to both sides of the jump.
    let mut below = 0.0;
    let mut worst: f64 = 0.0;
    for (k, &at) in cdf.iter().enumerate() {
        let phi = normal::cdf((k as f64 - mean) / sd);
        worst = worst.max((at - phi).abs()).max((below - phi).abs());
        below = at;
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fair_coins_give_binomial() {
        let pmf = poisson_binomial_pmf(&[0.5; 4]).unwrap();
        let expected = [1.0, 4.0, 6.0, 4.0, 1.0].map(|c| c / 16.0);
        for (a, b) in pmf.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_and_hand_convolution() {
        assert_eq!(poisson_binomial_pmf(&[1.0, 0.0]).unwrap(), vec![0.0, 1.0, 0.0]);
        let pmf = poisson_binomial_pmf(&[0.3, 0.7]).unwrap();
        for (a, b) in pmf.iter().zip([0.21, 0.58, 0.21]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(poisson_binomial_pmf(&[]).unwrap(), vec![1.0]);
        assert!(poisson_binomial_pmf(&[1.2]).is_err());
    }

    #[test]
    fn normal_distance_shrinks_with_n() {
        let small = normal_approximation_distance(&[0.7; 20]).unwrap();
        let large = normal_approximation_distance(&[0.7; 2000]).unwrap();
        assert!(large < small);
    }
}
