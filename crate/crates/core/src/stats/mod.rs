//! Test statistics, analytic power and the permutation test.

pub mod distribution;
pub mod normal;
pub mod permutation;

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::hdgm::LabeledDataset;
use crate::nn::Matrix;
use crate::pipeline::TrainedTest;

pub use distribution::{normal_approximation_distance, poisson_binomial_pmf};
pub use permutation::{
    exact_permutation_p_value, permutation_test, permutation_test_by, PermutationConfig, TestOutcome, TieRule,
};

/// Fraction of predictions equal to their labels.
pub fn accuracy(predictions: &[u8], labels: &[u8]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(shape_err("accuracy operands", labels.len(), predictions.len()));
    }
    if labels.is_empty() {
        return Err(Error::InvalidInput("accuracy of an empty set".into()));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Accuracy when every item of `x` carries label 0 and every item of `y` label 1,
/// given the classifier's predicted labels. This is the form the permutation
/// test recomputes after relabeling.
pub fn two_sample_accuracy(x_predictions: &[u8], y_predictions: &[u8]) -> f64 {
    let hits = x_predictions.iter().filter(|&&p| p == 0).count() + y_predictions.iter().filter(|&&p| p == 1).count();
    hits as f64 / (x_predictions.len() + y_predictions.len()) as f64
}

/// Held-out accuracy `t̂` of a trained classifier on a labeled set.
pub fn accuracy_statistic(test: &TrainedTest, data: &LabeledDataset) -> Result<f64> {
    let predictions = test.predict_labels(&data.points)?;
    accuracy(&predictions, &data.labels)
}

/// Empirical inability `ε̂ = (1 - t̂) / 2`, half the misclassification rate.
pub fn epsilon_hat(test: &TrainedTest, data: &LabeledDataset) -> Result<f64> {
    Ok(((1.0 - accuracy_statistic(test, data)?) / 2.0).clamp(0.0, 0.5))
}

/// Norm applied to the difference of mean embeddings.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingNorm {
    /// `‖mean(X) - mean(Y)‖²`.
    #[default]
    SquaredL2,
    /// `|mean(X) - mean(Y)|` for one-dimensional features.
    Abs1d,
}

/// Linear-kernel MMD between two feature samples.
pub fn embedding_statistic(features_x: &Matrix, features_y: &Matrix, norm: EmbeddingNorm) -> Result<f64> {
    if features_x.ncols() != features_y.ncols() {
        return Err(shape_err("feature widths", features_x.ncols(), features_y.ncols()));
    }
    if norm == EmbeddingNorm::Abs1d && features_x.ncols() != 1 {
        return Err(shape_err("abs_1d feature width", 1, features_x.ncols()));
    }
    let (Some(mx), Some(my)) = (features_x.mean_axis(Axis(0)), features_y.mean_axis(Axis(0))) else {
        return Err(Error::InvalidInput("embedding statistic of an empty sample".into()));
    };
    let diff = mx - my;
    Ok(match norm {
        EmbeddingNorm::SquaredL2 => diff.dot(&diff),
        EmbeddingNorm::Abs1d => diff[0].abs(),
    })
}

/// Inputs of the asymptotic power formula.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerInputs {
    /// Inability `ε ∈ (0, 1/2)`: half the classifier's expected error rate.
    pub epsilon: f64,
    pub n_te: usize,
    pub alpha: f64,
}

impl PowerInputs {
    pub fn validate(&self) -> Result<()> {
        check_epsilon(self.epsilon)?;
        if self.n_te == 0 {
            return Err(Error::InvalidInput("n_te must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Domain {
                name: "alpha",
                value: self.alpha,
                domain: "(0, 1)",
            });
        }
        Ok(())
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 0.5 {
        Ok(())
    } else {
        Err(Error::Domain {
            name: "epsilon",
            value: epsilon,
            domain: "(0, 1/2)",
        })
    }
}

/// Asymptotic power of the accuracy test:
/// `Φ(((1/2 - ε)√n_te - Φ⁻¹(1 - α)/2) / √(ε - ε²))`.
pub fn theoretical_power(inputs: &PowerInputs) -> Result<f64> {
    inputs.validate()?;
    let PowerInputs { epsilon, n_te, alpha } = *inputs;
    let z = normal::inverse_cdf(1.0 - alpha);
    let numerator = (0.5 - epsilon) * (n_te as f64).sqrt() - z / 2.0;
    Ok(normal::cdf(numerator / (epsilon - epsilon * epsilon).sqrt()))
}

/// Rejection threshold for `t̂` from its null law `N(1/2, 1/(4 n_te))`.
pub fn null_threshold(n_te: usize, alpha: f64) -> f64 {
    0.5 + normal::inverse_cdf(1.0 - alpha) / (4.0 * n_te as f64).sqrt()
}

/// `Pr(T > t_α)` for `T ~ N(1/2, 1/(4 n_te))`; equals `alpha` by construction.
pub fn normal_null_rejection_rate(n_te: usize, alpha: f64) -> f64 {
    let sd = 1.0 / (4.0 * n_te as f64).sqrt();
    let z = (null_threshold(n_te, alpha) - 0.5) / sd;
    normal::cdf(-z)
}

/// Power surrogate `ε / (1 - ε)`; smaller is more powerful.
pub fn objective_j(epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    Ok(epsilon / (1.0 - epsilon))
}
