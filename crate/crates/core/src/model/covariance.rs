use rand::Rng;

use super::grid::{GridSpec, GridState};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Diagonal covariance stored as standard deviations (`Q_k`, `R_k`).
///
/// Entries are strictly positive unless the covariance was built with
/// [`DiagonalCovariance::masked`], where a zero marks a component that receives
/// no noise and is carried deterministically by the filters.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalCovariance<T> {
    std_devs: Vec<T>,
}

impl<T: Real> DiagonalCovariance<T> {
    pub fn new(std_devs: Vec<T>) -> Result<Self> {
        if let Some(i) = std_devs.iter().position(|&s| !(s > T::zero()) || !s.is_finite()) {
            return Err(Error::ZeroStd(i));
        }
        Ok(Self { std_devs })
    }

    pub fn uniform(dim: usize, std: T) -> Result<Self> {
        Self::new(vec![std; dim])
    }

    /// One standard deviation per grid variable, broadcast over cells.
    pub fn per_variable(spec: &GridSpec, stds: &[T]) -> Result<Self> {
        if stds.len() != spec.n_vars {
            return Err(Error::Dimension {
                what: "per-variable noise",
                expected: spec.n_vars,
                got: stds.len(),
            });
        }
        let n = spec.n_cells();
        Self::new(stds.iter().flat_map(|&s| std::iter::repeat_n(s, n)).collect())
    }

    /// Per-variable noise restricted to the variables flagged in `mask`;
    /// the remaining variables get zero noise.
    pub fn masked(spec: &GridSpec, stds: &[T], mask: &[bool]) -> Result<Self> {
        if stds.len() != spec.n_vars || mask.len() != spec.n_vars {
            return Err(Error::Dimension {
                what: "masked per-variable noise",
                expected: spec.n_vars,
                got: stds.len().min(mask.len()),
            });
        }
        let n = spec.n_cells();
        let mut out = Vec::with_capacity(spec.dim());
        for (v, (&s, &on)) in stds.iter().zip(mask).enumerate() {
            if on && !(s > T::zero()) {
                return Err(Error::ZeroStd(v * n));
            }
            out.extend(std::iter::repeat_n(if on { s } else { T::zero() }, n));
        }
        Ok(Self { std_devs: out })
    }

    /// All-zero covariance. Only meaningful for deterministic test paths.
    pub fn zeros(dim: usize) -> Self {
        Self {
            std_devs: vec![T::zero(); dim],
        }
    }

    pub fn len(&self) -> usize {
        self.std_devs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.std_devs.is_empty()
    }

    pub fn std_devs(&self) -> &[T] {
        &self.std_devs
    }

    #[inline]
    pub fn std(&self, i: usize) -> T {
        self.std_devs[i]
    }

    #[inline]
    pub fn var(&self, i: usize) -> T {
        self.std_devs[i] * self.std_devs[i]
    }

    /// Whether component `i` receives noise.
    #[inline]
    pub fn is_active(&self, i: usize) -> bool {
        self.std_devs[i] > T::zero()
    }

    /// Gathers the diagonal at `indices` (the `Q̃` extraction is index gathering).
    pub fn restrict(&self, indices: &[usize]) -> Self {
        Self {
            std_devs: indices.iter().map(|&i| self.std_devs[i]).collect(),
        }
    }
}

/// Gaussian log-density `log N(z; prev_mean, Q)` with diagonal `Q`, including
/// the normalising constant.
pub fn transition_logpdf<T: Real>(prev_mean: &[T], z: &[T], q: &DiagonalCovariance<T>) -> Result<T> {
    if prev_mean.len() != z.len() || q.len() != z.len() {
        return Err(Error::Dimension {
            what: "transition density",
            expected: z.len(),
            got: if prev_mean.len() != z.len() { prev_mean.len() } else { q.len() },
        });
    }
    let half_log_2pi = T::lit(0.5) * (T::lit(2.0) * T::PI()).ln();
    let mut acc = T::zero();
    for (i, (&m, &x)) in prev_mean.iter().zip(z).enumerate() {
        let s = q.std(i);
        if !(s > T::zero()) {
            return Err(Error::ZeroStd(i));
        }
        let r = (x - m) / s;
        acc = acc - half_log_2pi - s.ln() - T::lit(0.5) * r * r;
    }
    Ok(acc)
}

/// Returns `state + W`, `W ~ N(0, Q)`, leaving the input untouched.
pub fn add_process_noise<T: Real, R: Rng + ?Sized>(
    state: &GridState<T>,
    q: &DiagonalCovariance<T>,
    rng: &mut R,
) -> Result<GridState<T>> {
    let mut out = state.clone();
    add_process_noise_in_place(&mut out.values, q, rng)?;
    Ok(out)
}

pub fn add_process_noise_in_place<T: Real, R: Rng + ?Sized>(
    values: &mut [T],
    q: &DiagonalCovariance<T>,
    rng: &mut R,
) -> Result<()> {
    if q.len() != values.len() {
        return Err(Error::Dimension {
            what: "process noise",
            expected: values.len(),
            got: q.len(),
        });
    }
    for (v, &s) in values.iter_mut().zip(q.std_devs()) {
        // draw even when s == 0 so masked variables don't shift the stream
        let xi = T::std_normal(rng);
        *v = *v + s * xi;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Stream, StreamKey};
    use nalgebra::{DMatrix, DVector};
    use std::sync::Arc;

    #[test]
    fn zero_residual_gives_pure_normalisation() {
        let n = 7;
        let q = DiagonalCovariance::uniform(n, 1.0f64).unwrap();
        let mu = vec![0.3; n];
        let lp = transition_logpdf(&mu, &mu, &q).unwrap();
        let expected = -(n as f64 / 2.0) * (2.0 * std::f64::consts::PI).ln();
        assert!((lp - expected).abs() < 1e-12);
    }

    #[test]
    fn matches_dense_quadratic_form() {
        // dense oracle: -1/2 r^T Q^-1 r - 1/2 log det(2 pi Q)
        let r = [1.0f64, -1.0, 2.0];
        let s = [1.0f64, 2.0, 0.5];
        let qmat = DMatrix::from_diagonal(&DVector::from_iterator(3, s.iter().map(|x| x * x)));
        let rv = DVector::from_row_slice(&r);
        let quad = (rv.transpose() * qmat.clone().try_inverse().unwrap() * &rv)[(0, 0)];
        let logdet = (qmat * (2.0 * std::f64::consts::PI)).determinant().ln();
        let oracle = -0.5 * quad - 0.5 * logdet;

        let mu = [0.0f64; 3];
        let q = DiagonalCovariance::new(s.to_vec()).unwrap();
        let lp = transition_logpdf(&mu, &r, &q).unwrap();
        assert!((lp - oracle).abs() < 1e-12, "{lp} vs {oracle}");
        // hand value: -sum[log(s sqrt(2pi)) + r^2/(2 s^2)]
        let hand: f64 = -r
            .iter()
            .zip(&s)
            .map(|(r, s)| (s * (2.0 * std::f64::consts::PI).sqrt()).ln() + r * r / (2.0 * s * s))
            .sum::<f64>();
        assert!((lp - hand).abs() < 1e-12);
    }

    #[test]
    fn restriction_factorises() {
        let z = [0.1f64, 0.5, -0.3, 2.0, 1.0];
        let mu = [0.0f64, 0.4, 0.0, 1.5, 1.2];
        let q = DiagonalCovariance::new(vec![0.5, 1.0, 0.2, 0.7, 1.3]).unwrap();
        let full = transition_logpdf(&mu, &z, &q).unwrap();
        let sub = [0usize, 3];
        let comp = [1usize, 2, 4];
        let pick = |v: &[f64], ix: &[usize]| ix.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let a = transition_logpdf(&pick(&mu, &sub), &pick(&z, &sub), &q.restrict(&sub)).unwrap();
        let b = transition_logpdf(&pick(&mu, &comp), &pick(&z, &comp), &q.restrict(&comp)).unwrap();
        assert!((a - (full - b)).abs() < 1e-12);
    }

    #[test]
    fn symmetric_in_mean_and_point() {
        let a = [0.3f64, -1.0, 2.0];
        let b = [1.3f64, 0.5, -2.0];
        let q = DiagonalCovariance::new(vec![0.4, 1.1, 2.0]).unwrap();
        assert_eq!(
            transition_logpdf(&a, &b, &q).unwrap(),
            transition_logpdf(&b, &a, &q).unwrap()
        );
    }

    #[test]
    fn zero_std_is_an_error() {
        let q = DiagonalCovariance::<f64>::zeros(2);
        assert!(matches!(
            transition_logpdf(&[0.0, 0.0], &[0.0, 0.0], &q),
            Err(Error::ZeroStd(0))
        ));
        assert!(DiagonalCovariance::new(vec![1.0f64, 0.0]).is_err());
    }

    #[test]
    fn zero_noise_leaves_state_unchanged() {
        let spec = Arc::new(GridSpec::scalar(3, 3).unwrap());
        let state = GridState::filled(spec, 1.25f64);
        let mut rng = StreamKey::new(1, Stream::Test).rng();
        let out = add_process_noise(&state, &DiagonalCovariance::zeros(9), &mut rng).unwrap();
        assert_eq!(out.values, state.values);
    }

    #[test]
    fn noise_is_reproducible_and_has_the_right_spread() {
        let n = 100_000;
        let spec = Arc::new(GridSpec::scalar(n, 1).unwrap());
        let state = GridState::filled(spec, 0.0f64);
        let q = DiagonalCovariance::uniform(n, 0.05).unwrap();
        let key = StreamKey::new(42, Stream::ForecastNoise);
        let a = add_process_noise(&state, &q, &mut key.rng()).unwrap();
        let b = add_process_noise(&state, &q, &mut key.rng()).unwrap();
        assert_eq!(a.values, b.values);
        let mean = a.values.iter().sum::<f64>() / n as f64;
        let var = a.values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // sample sd of 1e5 normals has relative se ~ 1/sqrt(2n) = 0.22%
        let sd = var.sqrt();
        assert!((0.0495..=0.0505).contains(&sd), "{sd}");
    }

    #[test]
    fn masked_covariance_zeroes_inactive_variables() {
        let spec = GridSpec::new(2, 2, vec!["h", "u"], true).unwrap();
        let q = DiagonalCovariance::masked(&spec, &[0.5f64, 0.1], &[false, true]).unwrap();
        assert_eq!(q.std_devs(), &[0.0, 0.0, 0.0, 0.0, 0.1, 0.1, 0.1, 0.1]);
        assert!(!q.is_active(0) && q.is_active(5));
    }
}
