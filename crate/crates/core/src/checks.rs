//! Numerical self-checks: gradients against finite differences, the power
//! formula against simulation, the Poisson-binomial DP against the binomial
//! and normal laws, and the permutation test's null calibration.

use ndarray::Array1;
use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::nn::{Activation, Matrix, Mlp, Target};
use crate::rng::{derive_seed, fill_standard_normal, rng_from_seed};
use crate::stats::{
    distribution, null_threshold, permutation_test_by, theoretical_power, PermutationConfig, PowerInputs, TieRule,
};

/// Largest relative error between backprop and central differences.
#[derive(Clone, Debug, Serialize)]
pub struct GradientReport {
    pub networks: usize,
    pub parameters: usize,
    pub max_relative_error: f64,
}

/// Random small network (1 to 3 layers, widths up to 8) and a matching loss target.
pub fn random_network(seed: u64) -> Result<(Mlp, Matrix, LossKind)> {
    let mut rng = rng_from_seed(seed);
    let depth = rng.random_range(1..=3);
    let classify = rng.random_bool(0.5);
    let mut widths: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=8)).collect();
    if classify {
        *widths.last_mut().unwrap() = 2;
    }
    let acts = [Activation::Relu, Activation::Sigmoid, Activation::Identity];
    let mut net = Mlp::with_topology(&widths, Activation::Relu, Activation::Identity, derive_seed(seed, 1))?;
    for layer in net.layers_mut() {
        layer.activation = acts[rng.random_range(0..acts.len())];
        layer.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    let batch = rng.random_range(1..=5);
    let mut x = Matrix::zeros((batch, widths[0]));
    fill_standard_normal(&mut rng, x.as_slice_mut().unwrap());
    let kind = if classify {
        LossKind::Labels((0..batch).map(|_| rng.random_range(0..=1u8)).collect())
    } else {
        let mut t = Matrix::zeros((batch, *widths.last().unwrap()));
        fill_standard_normal(&mut rng, t.as_slice_mut().unwrap());
        LossKind::Reconstruction(t)
    };
    Ok((net, x, kind))
}

/// Owned loss target.
#[derive(Clone, Debug)]
pub enum LossKind {
    Reconstruction(Matrix),
    Labels(Vec<u8>),
}

impl LossKind {
    pub fn target(&self) -> Target<'_> {
        match self {
            LossKind::Reconstruction(m) => Target::Reconstruction(m),
            LossKind::Labels(l) => Target::Labels(l),
        }
    }
}

/// Relative error with a floor so that near-zero gradients compare absolutely.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn gradient_check(networks: usize, seed: u64) -> Result<GradientReport> {
    const STEP: f64 = 1e-5;
    let mut worst: f64 = 0.0;
    let mut parameters = 0;
    for i in 0..networks {
        let (net, x, kind) = random_network(derive_seed(seed, i as u64))?;
        let (_, cache) = net.forward(&x)?;
        let (_, grads) = net.backward(&cache, kind.target())?;
        let analytic = grads.flatten();
        let mut numeric = Vec::with_capacity(analytic.len());
        for l in 0..net.layers().len() {
            let count = net.layers()[l].weight.len() + net.layers()[l].bias.len();
            for k in 0..count {
                let eval = |delta: f64| -> Result<f64> {
                    let mut probe = net.clone();
                    let layer = &mut probe.layers_mut()[l];
                    let wlen = layer.weight.len();
                    if k < wlen {
                        layer.weight.as_slice_mut().unwrap()[k] += delta;
                    } else {
                        layer.bias[k - wlen] += delta;
                    }
                    probe.loss(&x, kind.target())
                };
                numeric.push((eval(STEP)? - eval(-STEP)?) / (2.0 * STEP));
            }
        }
        parameters += analytic.len();
        for (a, n) in analytic.iter().zip(&numeric) {
            worst = worst.max(relative_error(*a, *n));
        }
    }
    Ok(GradientReport {
        networks,
        parameters,
        max_relative_error: worst,
    })
}

/// Rejection rate of the normal-threshold accuracy test when the accuracy count is
/// `Binomial(n_te, 1 - ε)`.
pub fn simulate_threshold_power(epsilon: f64, n_te: usize, alpha: f64, sims: usize, seed: u64) -> f64 {
    let threshold = null_threshold(n_te, alpha);
    let mut rng = rng_from_seed(seed);
    let hits = (0..sims)
        .filter(|_| {
            let correct = (0..n_te).filter(|_| rng.random::<f64>() < 1.0 - epsilon).count();
            correct as f64 / n_te as f64 > threshold
        })
        .count();
    hits as f64 / sims as f64
}

#[derive(Clone, Debug, Serialize)]
pub struct PowerCell {
    pub epsilon: f64,
    pub n_te: usize,
    pub theory: f64,
    pub simulated: f64,
}

pub fn power_check(epsilons: &[f64], n_tes: &[usize], alpha: f64, sims: usize, seed: u64) -> Result<Vec<PowerCell>> {
    let mut cells = Vec::new();
    for (i, &epsilon) in epsilons.iter().enumerate() {
        for (j, &n_te) in n_tes.iter().enumerate() {
            let theory = theoretical_power(&PowerInputs { epsilon, n_te, alpha })?;
            let simulated =
                simulate_threshold_power(epsilon, n_te, alpha, sims, derive_seed(seed, (i * 1000 + j) as u64));
            cells.push(PowerCell {
                epsilon,
                n_te,
                theory,
                simulated,
            });
        }
    }
    Ok(cells)
}

/// One-sample Kolmogorov-Smirnov distance of `values` from Uniform(0, 1).
pub fn ks_uniform_distance(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - x).max(x - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct NullCalibration {
    pub trials: usize,
    pub rejection_rate: f64,
    pub ks_distance: f64,
}

/// Permutation p-values of a squared mean difference between two equal-law
/// Gaussian samples of size `n`, over independent trials.
pub fn null_calibration(trials: usize, n: usize, n_perm: usize, alpha: f64, seed: u64) -> Result<NullCalibration> {
    let mut p_values = Vec::with_capacity(trials);
    let mut rejections = 0;
    for t in 0..trials {
        let mut rng = rng_from_seed(derive_seed(seed, t as u64));
        let mut x = vec![0.0; n];
        let mut y = vec![0.0; n];
        fill_standard_normal(&mut rng, &mut x);
        fill_standard_normal(&mut rng, &mut y);
        let cfg = PermutationConfig {
            n_perm,
            alpha,
            tie_rule: TieRule::PlusOne,
            seed: derive_seed(seed ^ 0xA5A5, t as u64),
        };
        let out = permutation_test_by(
            |a: &[f64], b: &[f64]| {
                let ma = a.iter().sum::<f64>() / a.len() as f64;
                let mb = b.iter().sum::<f64>() / b.len() as f64;
                Ok((ma - mb).powi(2))
            },
            &x,
            &y,
            &cfg,
        )?;
        rejections += usize::from(out.reject);
        p_values.push(out.p_value);
    }
    Ok(NullCalibration {
        trials,
        rejection_rate: rejections as f64 / trials as f64,
        ks_distance: ks_uniform_distance(&p_values),
    })
}

/// `Binomial(n, p)` pmf by the ratio recurrence `f(k+1) = f(k) (n-k)/(k+1) p/(1-p)`.
pub fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    if p >= 1.0 {
        let mut pmf = vec![0.0; n + 1];
        pmf[n] = 1.0;
        return pmf;
    }
    let odds = p / (1.0 - p);
    let mut pmf = Vec::with_capacity(n + 1);
    let mut f = (1.0 - p).powi(n as i32);
    for k in 0..=n {
        pmf.push(f);
        f *= (n - k) as f64 / (k + 1) as f64 * odds;
    }
    pmf
}

#[derive(Clone, Debug, Serialize)]
pub struct PoissonBinomialReport {
    pub mass_error: f64,
    pub binomial_error: f64,
    pub normal_distance: f64,
}

/// DP pmf checks: total mass, agreement with `Binomial(n, p)` for constant `p`,
/// and the normal approximation distance at `n` copies of `p`.
pub fn poisson_binomial_check(n: usize, p: f64) -> Result<PoissonBinomialReport> {
    let probs = vec![p; n];
    let pmf = distribution::poisson_binomial_pmf(&probs)?;
    let mass_error = (pmf.iter().sum::<f64>() - 1.0).abs();
    let binomial_error = pmf
        .iter()
        .zip(binomial_pmf(n, p))
        .map(|(&m, b)| (m - b).abs())
        .fold(0.0, f64::max);
    // heterogeneous probabilities with the same mean, for the normal approximation
    let spread: Array1<f64> = Array1::linspace(p - 0.2, p + 0.2, n).mapv(|q| q.clamp(0.0, 1.0));
    let normal_distance = distribution::normal_approximation_distance(spread.as_slice().unwrap())?
        .max(distribution::normal_approximation_distance(&probs)?);
    Ok(PoissonBinomialReport {
        mass_error,
        binomial_error,
        normal_distance,
    })
}
