use c2st::stats::{exact_permutation_p_value, permutation_test_by, PermutationConfig};
use c2st::TieRule;
use itertools::Itertools;

fn sq_mean_diff(a: &[f64], b: &[f64]) -> c2st::Result<f64> {
    let m = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Ok((m(a) - m(b)).powi(2))
}

#[test]
fn worked_example_is_two_of_six() {
    let p = exact_permutation_p_value(sq_mean_diff, &[0.0, 1.0], &[10.0, 11.0]).unwrap();
    assert_eq!(p, 2.0 / 6.0);
}

// hand-rolled enumeration over subsets, for comparison with the library
fn brute_force(x: &[f64], y: &[f64]) -> f64 {
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let observed = sq_mean_diff(x, y).unwrap();
    let n = pooled.len();
    let (mut hits, mut total) = (0usize, 0usize);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != x.len() {
            continue;
        }
        let (a, b): (Vec<f64>, Vec<f64>) = (0..n).partition_map(|i| {
            if mask >> i & 1 == 1 {
                itertools::Either::Left(pooled[i])
            } else {
                itertools::Either::Right(pooled[i])
            }
        });
        total += 1;
        hits += usize::from(sq_mean_diff(&a, &b).unwrap() >= observed);
    }
    hits as f64 / total as f64
}

#[test]
fn exact_matches_bitmask_enumeration() {
    let cases: [(&[f64], &[f64]); 3] = [
        (&[0.3, -1.2, 2.0], &[0.5, 0.7, 4.0]),
        (&[1.0, 2.0, 3.0, 4.0], &[1.5, 2.5]),
        (&[0.0, 0.0, 1.0], &[0.0, 1.0, 1.0, 1.0]),
    ];
    for (x, y) in cases {
        let lib = exact_permutation_p_value(sq_mean_diff, x, y).unwrap();
        assert!((lib - brute_force(x, y)).abs() < 1e-15);
    }
}

#[test]
fn monte_carlo_approaches_exact() {
    let x = [0.1, 0.9, 1.4, 2.2, 0.4];
    let y = [1.1, 2.4, 1.9, 3.0, 2.6];
    let exact = exact_permutation_p_value(sq_mean_diff, &x, &y).unwrap();
    let cfg = PermutationConfig {
        n_perm: 20_000,
        tie_rule: TieRule::PaperStrict,
        seed: 3,
        ..PermutationConfig::default()
    };
    let mc = permutation_test_by(sq_mean_diff, &x, &y, &cfg).unwrap();
    assert!((mc.p_value - exact).abs() < 0.01, "{} vs {exact}", mc.p_value);
}

#[test]
fn plus_one_is_never_zero() {
    let x: Vec<f64> = (0..20).map(f64::from).collect();
    let y: Vec<f64> = (100..120).map(f64::from).collect();
    let cfg = PermutationConfig {
        n_perm: 99,
        ..PermutationConfig::default()
    };
    let out = permutation_test_by(sq_mean_diff, &x, &y, &cfg).unwrap();
    assert_eq!(out.p_value, 0.01);
    assert!(out.reject);
}
