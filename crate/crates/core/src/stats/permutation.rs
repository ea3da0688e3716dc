//! Permutation calibration of two-sample statistics.

use itertools::Itertools;
use ndarray::Axis;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng::{derive_seed, rng_from_seed};

/// How permuted statistics equal to the observed one are counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// `p = #{perm > observed} / n_perm`. Ties never count against the observed value.
    PaperStrict,
    /// `p = (1 + #{perm >= observed}) / (n_perm + 1)`. Valid at finite sample size.
    #[default]
    PlusOne,
}

impl TieRule {
    pub fn p_value(self, observed: f64, perms: &[f64]) -> f64 {
        match self {
            TieRule::PaperStrict => {
                let above = perms.iter().filter(|&&s| s > observed).count();
                above as f64 / perms.len() as f64
            }
            TieRule::PlusOne => {
                let at_least = perms.iter().filter(|&&s| s >= observed).count();
                (1 + at_least) as f64 / (perms.len() + 1) as f64
            }
        }
    }
}

/// Result of one calibrated test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub observed: f64,
    #[serde(skip)]
    pub perms: Vec<f64>,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub n_perm: usize,
    pub tie_rule: TieRule,
    pub seed: u64,
}

impl TestOutcome {
    pub fn new(observed: f64, perms: Vec<f64>, alpha: f64, tie_rule: TieRule, seed: u64) -> Self {
        let p_value = tie_rule.p_value(observed, &perms);
        Self {
            observed,
            n_perm: perms.len(),
            perms,
            p_value,
            reject: p_value <= alpha,
            alpha,
            tie_rule,
            seed,
        }
    }
}

/// Number of permutations, level, tie rule and seed of a permutation test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermutationConfig {
    pub n_perm: usize,
    pub alpha: f64,
    pub tie_rule: TieRule,
    pub seed: u64,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        Self {
            n_perm: 100,
            alpha: 0.05,
            tie_rule: TieRule::PlusOne,
            seed: 0,
        }
    }
}

impl PermutationConfig {
    fn validate(&self) -> Result<()> {
        if self.n_perm == 0 {
            return Err(Error::InvalidInput("n_perm must be >= 1".into()));
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

/// Permutation test over arbitrary sample items.
///
/// Permutation `i` pools `x` and `y`, shuffles with a seed derived from
/// `(cfg.seed, i)` and reassigns the first `x.len()` items to `X`, so the
/// original sample sizes are preserved.
pub fn permutation_test_by<T, F>(mut stat: F, x: &[T], y: &[T], cfg: &PermutationConfig) -> Result<TestOutcome>
where
    T: Clone,
    F: FnMut(&[T], &[T]) -> Result<f64>,
{
    cfg.validate()?;
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidInput("both samples must be nonempty".into()));
    }
    let observed = stat(x, y)?;
    let mut pooled: Vec<T> = x.iter().chain(y).cloned().collect();
    let mut perms = Vec::with_capacity(cfg.n_perm);
    for i in 0..cfg.n_perm {
        let mut rng = rng_from_seed(derive_seed(cfg.seed, i as u64));
        pooled.shuffle(&mut rng);
        let (px, py) = pooled.split_at(x.len());
        perms.push(stat(px, py)?);
    }
    Ok(TestOutcome::new(observed, perms, cfg.alpha, cfg.tie_rule, cfg.seed))
}

/// Permutation test whose statistic consumes the two samples as matrices.
pub fn permutation_test<F>(mut stat: F, x: &Matrix, y: &Matrix, cfg: &PermutationConfig) -> Result<TestOutcome>
where
    F: FnMut(&Matrix, &Matrix) -> Result<f64>,
{
    if x.ncols() != y.ncols() {
        return Err(crate::error::shape_err("permutation samples", x.ncols(), y.ncols()));
    }
    let pooled = ndarray::concatenate(Axis(0), &[x.view(), y.view()]).expect("widths checked");
    let ix: Vec<usize> = (0..x.nrows()).collect();
    let iy: Vec<usize> = (x.nrows()..pooled.nrows()).collect();
    permutation_test_by(
        |a: &[usize], b: &[usize]| stat(&pooled.select(Axis(0), a), &pooled.select(Axis(0), b)),
        &ix,
        &iy,
        cfg,
    )
}

/// Exact permutation p-value over every equal-size relabeling, using `>=` counting
/// (the identity split included). Feasible only for small pools.
pub fn exact_permutation_p_value<T, F>(mut stat: F, x: &[T], y: &[T]) -> Result<f64>
where
    T: Clone,
    F: FnMut(&[T], &[T]) -> Result<f64>,
{
    const MAX_SPLITS: u128 = 5_000_000;
    let n = x.len() + y.len();
    let splits = binomial_coefficient(n as u64, x.len() as u64);
    if splits > MAX_SPLITS {
        return Err(Error::InvalidInput(format!(
            "{splits} relabelings is too many to enumerate"
        )));
    }
    let observed = stat(x, y)?;
    let pooled: Vec<T> = x.iter().chain(y).cloned().collect();
    let mut at_least = 0u64;
    let mut total = 0u64;
    for chosen in (0..n).combinations(x.len()) {
        let mut in_x = vec![false; n];
        chosen.iter().for_each(|&i| in_x[i] = true);
        let px: Vec<T> = chosen.iter().map(|&i| pooled[i].clone()).collect();
        let py: Vec<T> = (0..n).filter(|&i| !in_x[i]).map(|i| pooled[i].clone()).collect();
        if stat(&px, &py)? >= observed {
            at_least += 1;
        }
        total += 1;
    }
    Ok(at_least as f64 / total as f64)
}

fn binomial_coefficient(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * u128::from(n - i) / u128::from(i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_diff_sq(a: &[f64], b: &[f64]) -> Result<f64> {
        let ma = a.iter().sum::<f64>() / a.len() as f64;
        let mb = b.iter().sum::<f64>() / b.len() as f64;
        Ok((ma - mb).powi(2))
    }

    #[test]
    fn constant_statistic_never_rejects() {
        let cfg = PermutationConfig {
            n_perm: 50,
            ..Default::default()
        };
        let out = permutation_test_by(|_: &[f64], _: &[f64]| Ok(3.0), &[1.0, 2.0], &[3.0], &cfg).unwrap();
        assert_eq!(out.p_value, 1.0);
        assert!(!out.reject);
        let strict = PermutationConfig {
            tie_rule: TieRule::PaperStrict,
            ..cfg
        };
        let out = permutation_test_by(|_: &[f64], _: &[f64]| Ok(3.0), &[1.0, 2.0], &[3.0], &strict).unwrap();
        // all ties count for the observed value under the strict rule
        assert_eq!(out.p_value, 0.0);
        assert!(out.reject);
    }

    #[test]
    fn exact_worked_example() {
        let p = exact_permutation_p_value(mean_diff_sq, &[0.0, 1.0], &[10.0, 11.0]).unwrap();
        assert_eq!(p, 2.0 / 6.0);
    }

    #[test]
    fn separated_samples_reject() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let y: Vec<f64> = (0..30).map(|i| 100.0 + f64::from(i)).collect();
        let out = permutation_test_by(mean_diff_sq, &x, &y, &PermutationConfig::default()).unwrap();
        assert_eq!(out.p_value, 1.0 / 101.0);
        assert!(out.reject);
    }

    #[test]
    fn deterministic_given_seed_and_sizes_preserved() {
        let x = [0.1, 0.5, 0.9];
        let y = [0.2, 0.4, 0.6, 0.8, 1.0];
        let cfg = PermutationConfig {
            n_perm: 20,
            seed: 5,
            ..Default::default()
        };
        let mut sizes = Vec::new();
        let a = permutation_test_by(
            |a: &[f64], b: &[f64]| {
                sizes.push((a.len(), b.len()));
                mean_diff_sq(a, b)
            },
            &x,
            &y,
            &cfg,
        )
        .unwrap();
        assert!(sizes.iter().all(|&s| s == (3, 5)));
        let b = permutation_test_by(mean_diff_sq, &x, &y, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn statistic_errors_propagate() {
        let r = permutation_test_by(
            |_: &[f64], _: &[f64]| Err(Error::Statistic("boom".into())),
            &[1.0],
            &[2.0],
            &PermutationConfig::default(),
        );
        assert!(matches!(r, Err(Error::Statistic(_))));
    }

    #[test]
    fn bad_config_rejected() {
        let zero = PermutationConfig {
            n_perm: 0,
            ..Default::default()
        };
        assert!(permutation_test_by(mean_diff_sq, &[1.0], &[2.0], &zero).is_err());
        assert!(permutation_test_by(mean_diff_sq, &[], &[2.0], &PermutationConfig::default()).is_err());
    }

    #[test]
    fn outcome_json_fields() {
        let out = TestOutcome::new(0.6, vec![0.5, 0.7], 0.05, TieRule::PlusOne, 3);
        let v = serde_json::to_value(&out).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys.len(), 7);
        for k in ["observed", "p_value", "reject", "alpha", "n_perm", "tie_rule", "seed"] {
            assert!(keys.contains(&k), "{k}");
        }
        assert_eq!(v["tie_rule"], "plus_one");
        assert_eq!(out.p_value, 2.0 / 3.0);
    }
}
