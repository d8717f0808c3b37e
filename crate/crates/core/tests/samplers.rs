use lsmcmc::model::{DiagonalCovariance, NoiseKind, NoiseModel, ObservationBatch, ObservationOperator, OperatorKind};
use lsmcmc::samplers::{mixture_from_forecast, mixture_sample, pcn_step, ChainState, Target};
use lsmcmc::{Stream, StreamKey};

/// Mean and Monte Carlo standard error of a possibly autocorrelated series,
/// by non-overlapping batch means.
fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let b = (n as f64).sqrt() as usize;
    let k = n / b;
    let mean = xs.iter().sum::<f64>() / n as f64;
    let bm: Vec<f64> = (0..k).map(|i| xs[i * b..(i + 1) * b].iter().sum::<f64>() / b as f64).collect();
    let bvar = bm.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    // never report less than the independent-draw error
    (mean, (bvar / k as f64).max(var / n as f64).sqrt())
}

fn column(xs: &[Vec<f64>], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    xs.iter().map(|x| f(x)).collect()
}

#[test]
fn pcn_with_flat_likelihood_keeps_the_prior() {
    let mu = vec![0.5, -1.0, 2.0];
    let means = vec![mu.clone()];
    let std = [0.3, 1.0, 2.5];
    let q = DiagonalCovariance::new(std.to_vec()).unwrap();
    let b = ObservationBatch::empty(0, OperatorKind::LinearSelect, NoiseKind::Gaussian);
    let t = Target::new(&means, &q, &b).unwrap();
    let mut c = ChainState::new(mu.clone(), 0, 0.5, &t).unwrap();
    let mut rng = StreamKey::new(41, Stream::Test).rng();
    let n = 100_000;
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            pcn_step(&mut c, &t, &mut rng).unwrap();
            c.z.clone()
        })
        .collect();
    assert_eq!(c.accepts, n);
    for i in 0..3 {
        let (m, se) = mean_se(&column(&xs, |x| x[i]));
        assert!((m - mu[i]).abs() < 4.0 * se, "mean {i}: {m} vs {} ± {se}", mu[i]);
        let (v, se) = mean_se(&column(&xs, |x| (x[i] - mu[i]).powi(2)));
        assert!((v - std[i] * std[i]).abs() < 4.0 * se, "var {i}: {v} vs {} ± {se}", std[i] * std[i]);
    }
}

#[test]
fn long_pcn_chain_agrees_with_direct_mixture_sampling() {
    let d = 5;
    let means = vec![
        vec![0.3, -0.2, 0.5, 0.0, 1.0],
        vec![-0.4, 0.1, 0.2, 0.6, 0.8],
        vec![0.1, 0.4, -0.3, 0.2, 1.3],
    ];
    let q = DiagonalCovariance::new(vec![0.5, 0.8, 0.4, 0.6, 0.3]).unwrap();
    let b = ObservationBatch::new(
        0,
        ObservationOperator::new(OperatorKind::LinearSelect, vec![0, 2, 3], d).unwrap(),
        vec![0.1, 0.35, 0.5],
        NoiseModel::new(NoiseKind::Gaussian, vec![0.3, 0.25, 0.2]).unwrap(),
    )
    .unwrap();

    let (comps, cov) = mixture_from_forecast(&means, &q, &b).unwrap();
    let mut rng = StreamKey::new(42, Stream::Test).rng();
    let direct = mixture_sample(&comps, &cov, 100_000, &mut rng);

    let t = Target::new(&means, &q, &b).unwrap();
    let mut c = ChainState::new(means[0].clone(), 0, 0.5, &t).unwrap();
    for _ in 0..5_000 {
        pcn_step(&mut c, &t, &mut rng).unwrap();
    }
    let chain: Vec<Vec<f64>> = (0..1_000_000)
        .map(|_| {
            pcn_step(&mut c, &t, &mut rng).unwrap();
            c.z.clone()
        })
        .collect();

    let mut stats: Vec<(String, Box<dyn Fn(&[f64]) -> f64>)> = Vec::new();
    for i in 0..d {
        stats.push((format!("E[x{i}]"), Box::new(move |x: &[f64]| x[i])));
        for j in i..d {
            stats.push((format!("E[x{i} x{j}]"), Box::new(move |x: &[f64]| x[i] * x[j])));
        }
    }
    for (name, f) in &stats {
        let (a, sa) = mean_se(&column(&direct, f));
        let (b, sb) = mean_se(&column(&chain, f));
        let se = (sa * sa + sb * sb).sqrt();
        assert!((a - b).abs() < 3.0 * se, "{name}: direct {a} vs pCN {b} (combined se {se})");
    }
}
