use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{DiagonalCovariance, ObservationBatch};
use crate::scalar::{normalize_log_weights, sample_cumulative, Real};

/// One Gaussian component `w^{(j)} N(m^{(j)}, Σ)` of the analysis mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureComponent<T> {
    pub mean: Vec<T>,
    /// Normalised weight.
    pub weight: T,
}

/// The diagonal posterior covariance shared by every component.
#[derive(Clone, Debug, PartialEq)]
pub struct SharedPosteriorCov<T> {
    pub diag_var: Vec<T>,
}

/// Closed-form analysis mixture for a selection operator with Gaussian noise.
///
/// Each coordinate is conditionally independent given the ancestor, so the
/// posterior precision is `1/q_i + Σ_o 1/r_o` over the observations sitting on
/// coordinate `i`, and the weight of ancestor `j` is the product of the
/// per-coordinate marginal likelihoods of those observations.
pub fn mixture_from_forecast<T: Real>(
    means: &[Vec<T>],
    q: &DiagonalCovariance<T>,
    batch: &ObservationBatch<T>,
) -> Result<(Vec<MixtureComponent<T>>, SharedPosteriorCov<T>)> {
    if !batch.is_linear_gaussian() {
        return Err(Error::Unsupported(
            "direct mixture sampling needs a linear selection operator with Gaussian noise".into(),
        ));
    }
    let n = q.len();
    if means.is_empty() {
        return Err(Error::Config("mixture needs at least one forecast mean".into()));
    }
    if let Some(m) = means.iter().find(|m| m.len() != n) {
        return Err(Error::Dimension {
            what: "forecast mean",
            expected: n,
            got: m.len(),
        });
    }
    batch.validate_for(n)?;

    // group observations by coordinate
    let mut offsets = vec![0usize; n + 1];
    for &i in &batch.operator.indices {
        offsets[i + 1] += 1;
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    let mut fill = offsets.clone();
    let mut by_coord = vec![0usize; batch.len()];
    for (o, &i) in batch.operator.indices.iter().enumerate() {
        by_coord[fill[i]] = o;
        fill[i] += 1;
    }

    let half_log_2pi = T::lit(0.5) * (T::lit(2.0) * T::PI()).ln();
    let mut diag_var = Vec::with_capacity(n);
    // precision-weighted observation sum per coordinate
    let mut obs_info = vec![T::zero(); n];
    let mut observed = Vec::new();
    let mut const_term = T::zero();
    for i in 0..n {
        let qi = q.var(i);
        if !(qi > T::zero()) {
            return Err(Error::ZeroStd(i));
        }
        let obs = &by_coord[offsets[i]..offsets[i + 1]];
        let mut prec = T::one() / qi;
        for &o in obs {
            let r = batch.noise.scales[o] * batch.noise.scales[o];
            prec = prec + T::one() / r;
            obs_info[i] = obs_info[i] + batch.values[o] / r;
            const_term = const_term - half_log_2pi - T::lit(0.5) * r.ln();
        }
        if obs.is_empty() {
            diag_var.push(qi);
        } else {
            const_term = const_term - T::lit(0.5) * (qi * prec).ln();
            observed.push(i);
            diag_var.push(T::one() / prec);
        }
    }

    let mut log_w = Vec::with_capacity(means.len());
    let mut components = Vec::with_capacity(means.len());
    for mu in means {
        let mut lw = const_term;
        for &i in &observed {
            // residual form: Σ d²/r − (Σ d/r)²/P with d = y − μ, stable for large μ
            let mut s1 = T::zero();
            let mut s2 = T::zero();
            for &o in &by_coord[offsets[i]..offsets[i + 1]] {
                let r = batch.noise.scales[o] * batch.noise.scales[o];
                let d = batch.values[o] - mu[i];
                s1 = s1 + d / r;
                s2 = s2 + d * d / r;
            }
            lw = lw - T::lit(0.5) * (s2 - s1 * s1 * diag_var[i]);
        }
        log_w.push(lw);
        let mut mean = mu.clone();
        for &i in &observed {
            mean[i] = diag_var[i] * (mu[i] / q.var(i) + obs_info[i]);
        }
        components.push(MixtureComponent { mean, weight: T::zero() });
    }
    for (c, w) in components.iter_mut().zip(normalize_log_weights(&log_w)) {
        c.weight = w;
    }
    Ok((components, SharedPosteriorCov { diag_var }))
}

/// Draws `n` exact samples: an ancestor from the weights, then a Gaussian
/// around that component's mean.
pub fn mixture_sample<T: Real, R: Rng + ?Sized>(
    components: &[MixtureComponent<T>],
    cov: &SharedPosteriorCov<T>,
    n: usize,
    rng: &mut R,
) -> Vec<Vec<T>> {
    let mut cumulative = Vec::with_capacity(components.len());
    let mut acc = T::zero();
    for c in components {
        acc = acc + c.weight;
        cumulative.push(acc);
    }
    let sd: Vec<T> = cov.diag_var.iter().map(|v| v.sqrt()).collect();
    (0..n)
        .map(|_| {
            let j = sample_cumulative(&cumulative, rng);
            components[j]
                .mean
                .iter()
                .zip(&sd)
                .map(|(&m, &s)| m + s * T::std_normal(rng))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NoiseKind, NoiseModel, ObservationOperator, OperatorKind};
    use crate::rng::{Stream, StreamKey};

    fn lg_batch(idx: Vec<usize>, y: Vec<f64>, s: f64, dim: usize) -> ObservationBatch<f64> {
        let n = idx.len();
        ObservationBatch::new(
            0,
            ObservationOperator::new(OperatorKind::LinearSelect, idx, dim).unwrap(),
            y,
            NoiseModel::new(NoiseKind::Gaussian, vec![s; n]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn scalar_hand_algebra() {
        let q = DiagonalCovariance::uniform(1, 0.05).unwrap();
        let b = lg_batch(vec![0], vec![0.1], 0.05, 1);
        let (c, cov) = mixture_from_forecast(&[vec![0.0]], &q, &b).unwrap();
        assert!((cov.diag_var[0] - 0.00125).abs() < 1e-15);
        assert!((c[0].mean[0] - 0.05).abs() < 1e-15);
        assert_eq!(c[0].weight, 1.0);
    }

    #[test]
    fn unobserved_coordinate_keeps_prior() {
        let q = DiagonalCovariance::new(vec![0.3, 0.2]).unwrap();
        let b = lg_batch(vec![0], vec![1.0], 0.1, 2);
        let means = vec![vec![0.0, 0.7], vec![0.5, -0.2]];
        let (c, cov) = mixture_from_forecast(&means, &q, &b).unwrap();
        assert_eq!(cov.diag_var[1], q.var(1));
        assert_eq!(c[0].mean[1], 0.7);
        assert!((c[0].mean[1] - 0.7).abs() < 1e-15);
        assert!((c[1].mean[1] + 0.2).abs() < 1e-15);
        assert!(cov.diag_var[0] <= 0.09);
    }

    #[test]
    fn equal_means_equal_weights() {
        let q = DiagonalCovariance::uniform(3, 0.1).unwrap();
        let b = lg_batch(vec![0, 2], vec![0.4, -0.1], 0.05, 3);
        let means = vec![vec![0.1, 0.2, 0.3]; 4];
        let (c, _) = mixture_from_forecast(&means, &q, &b).unwrap();
        assert!(c.iter().all(|c| (c.weight - 0.25).abs() < 1e-15));
    }

    #[test]
    fn weights_match_marginal_likelihood_oracle() {
        // y ~ N(μ_j, q + r) independently per observed coordinate
        let q = DiagonalCovariance::new(vec![0.2, 0.5]).unwrap();
        let b = lg_batch(vec![0, 1], vec![0.3, -0.4], 0.3, 2);
        let means = vec![vec![0.0, 0.0], vec![1.0, -1.0], vec![0.2, 0.1]];
        let (c, _) = mixture_from_forecast(&means, &q, &b).unwrap();
        let dens = |y: f64, m: f64, v: f64| (-(y - m).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        let raw: Vec<f64> = means
            .iter()
            .map(|m| dens(0.3, m[0], 0.04 + 0.09) * dens(-0.4, m[1], 0.25 + 0.09))
            .collect();
        let s: f64 = raw.iter().sum();
        for (ci, r) in c.iter().zip(&raw) {
            assert!((ci.weight - r / s).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_nonlinear_batch() {
        let q = DiagonalCovariance::uniform(1, 0.1).unwrap();
        let b = ObservationBatch::new(
            0,
            ObservationOperator::new(OperatorKind::ArctanSelect, vec![0], 1).unwrap(),
            vec![0.0],
            NoiseModel::new(NoiseKind::Gaussian, vec![0.1]).unwrap(),
        )
        .unwrap();
        assert!(matches!(mixture_from_forecast(&[vec![0.0]], &q, &b), Err(Error::Unsupported(_))));
    }

    #[test]
    fn zero_variance_coordinate_is_constant() {
        let comps = vec![MixtureComponent {
            mean: vec![1.5, 0.0],
            weight: 1.0,
        }];
        let cov = SharedPosteriorCov { diag_var: vec![0.0, 1.0] };
        let mut rng = StreamKey::new(0, Stream::Test).rng();
        let s = mixture_sample(&comps, &cov, 100, &mut rng);
        assert!(s.iter().all(|z| z[0] == 1.5));
    }

    #[test]
    fn component_frequencies() {
        let comps = vec![
            MixtureComponent { mean: vec![-10.0], weight: 0.8 },
            MixtureComponent { mean: vec![10.0], weight: 0.2 },
        ];
        let cov = SharedPosteriorCov { diag_var: vec![1.0] };
        let mut rng = StreamKey::new(4, Stream::Test).rng();
        let n = 100_000;
        let s = mixture_sample(&comps, &cov, n, &mut rng);
        let frac = s.iter().filter(|z| z[0] < 0.0).count() as f64 / n as f64;
        assert!((0.79..=0.81).contains(&frac), "{frac}");
        // analytic mixture moments
        let mean = 0.8 * -10.0 + 0.2 * 10.0;
        let var = 1.0 + 0.8 * 100.0 + 0.2 * 100.0 - mean * mean;
        let emp = s.iter().map(|z| z[0]).sum::<f64>() / n as f64;
        assert!((emp - mean).abs() < 4.0 * (var / n as f64).sqrt());
    }
}
