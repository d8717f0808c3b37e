use lsmcmc_harness::{rmse, rmse_at};
use rand::{Rng, SeedableRng};

/// Two-pass oracle: squared differences first, then a plain sum.
fn oracle(a: &[f64], b: &[f64]) -> f64 {
    let sq: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).collect();
    let mut total = 0.0;
    for s in &sq {
        total += s;
    }
    (total / sq.len() as f64).sqrt()
}

#[test]
fn random_pairs_match_two_pass_oracle() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(11);
    for _ in 0..50 {
        let a: Vec<f64> = (0..100).map(|_| rng.random_range(-5.0..5.0)).collect();
        let b: Vec<f64> = (0..100).map(|_| rng.random_range(-5.0..5.0)).collect();
        let got = rmse(&a, &b).unwrap();
        assert!((got - oracle(&a, &b)).abs() <= 1e-14, "{got}");
        let idx: Vec<usize> = (0..100).step_by(3).collect();
        let sa: Vec<f64> = idx.iter().map(|&i| a[i]).collect();
        let sb: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
        assert!((rmse_at(&a, &b, &idx).unwrap() - oracle(&sa, &sb)).abs() <= 1e-14);
    }
}
