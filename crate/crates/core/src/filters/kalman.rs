use crate::error::{Error, Result};
use crate::model::{DiagonalCovariance, ForwardModel, ModelKind, ObservationBatch};
use crate::scalar::Real;

/// Exact filtering distribution `N(mean, diag(var))` for a scalar-AR model
/// with diagonal noise and a selection operator.
#[derive(Clone, Debug, PartialEq)]
pub struct KalmanState<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Real> KalmanState<T> {
    pub fn new(mean: Vec<T>, var: Vec<T>) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(Error::Dimension {
                what: "Kalman variance",
                expected: mean.len(),
                got: var.len(),
            });
        }
        Ok(Self { mean, var })
    }
}

/// One predict/update step. With `Φ(z) = a z`, diagonal `Q`, `R` and a
/// selection operator the covariance stays diagonal, so each coordinate is a
/// scalar Kalman filter; several observations of one coordinate are absorbed
/// sequentially.
pub fn kalman_cycle<T: Real>(
    state: &KalmanState<T>,
    batch: Option<&ObservationBatch<T>>,
    model: &ForwardModel<T>,
    q: &DiagonalCovariance<T>,
) -> Result<KalmanState<T>> {
    let ModelKind::LinearAr { a } = model.kind else {
        return Err(Error::Unsupported("the exact Kalman filter needs a linear_ar model".into()));
    };
    if q.len() != state.mean.len() {
        return Err(Error::Dimension {
            what: "Kalman process noise",
            expected: state.mean.len(),
            got: q.len(),
        });
    }
    let mut mean: Vec<T> = state.mean.iter().map(|&m| a * m).collect();
    let mut var: Vec<T> = state.var.iter().enumerate().map(|(i, &p)| a * a * p + q.var(i)).collect();
    if let Some(b) = batch {
        if !b.is_linear_gaussian() {
            return Err(Error::Unsupported(
                "the exact Kalman filter needs linear Gaussian observations".into(),
            ));
        }
        b.validate_for(mean.len())?;
        for ((&i, &y), &s) in b.operator.indices.iter().zip(&b.values).zip(&b.noise.scales) {
            let r = s * s;
            let gain = var[i] / (var[i] + r);
            mean[i] = mean[i] + gain * (y - mean[i]);
            var[i] = (T::one() - gain) * var[i];
        }
    }
    Ok(KalmanState { mean, var })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NoiseKind, NoiseModel, ObservationOperator, OperatorKind};
    use nalgebra::{DMatrix, DVector};

    fn batch(idx: Vec<usize>, y: Vec<f64>, s: f64, d: usize) -> ObservationBatch<f64> {
        let n = idx.len();
        ObservationBatch::new(
            0,
            ObservationOperator::new(OperatorKind::LinearSelect, idx, d).unwrap(),
            y,
            NoiseModel::new(NoiseKind::Gaussian, vec![s; n]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn predict_only() {
        let s = KalmanState::new(vec![2.0f64], vec![0.5]).unwrap();
        let q = DiagonalCovariance::uniform(1, 0.1).unwrap();
        let out = kalman_cycle(&s, None, &ForwardModel::linear_ar(0.25), &q).unwrap();
        assert_eq!(out.mean, vec![0.5]);
        assert!((out.var[0] - (0.0625 * 0.5 + q.var(0))).abs() < 1e-15);
    }

    #[test]
    fn equal_variances_split_the_difference() {
        // after prediction with a = 1 and p0 = 0, p = q = r
        let s = KalmanState::new(vec![0.0f64], vec![0.0]).unwrap();
        let q = DiagonalCovariance::uniform(1, 0.3).unwrap();
        let out = kalman_cycle(&s, Some(&batch(vec![0], vec![1.0], 0.3, 1)), &ForwardModel::linear_ar(1.0), &q).unwrap();
        assert!((out.mean[0] - 0.5).abs() < 1e-15);
        assert!((out.var[0] - 0.045).abs() < 1e-15);
    }

    #[test]
    fn matches_dense_kalman_filter() {
        let d = 3;
        let a = 0.25;
        let qs = [0.05, 0.1, 0.2];
        let q = DiagonalCovariance::new(qs.to_vec()).unwrap();
        let model = ForwardModel::linear_ar(a);
        let batches = [
            batch(vec![0, 2], vec![0.1, -0.2], 0.05, d),
            batch(vec![1], vec![0.3], 0.05, d),
            batch(vec![0, 1, 2], vec![0.0, 0.05, 0.4], 0.05, d),
        ];
        let mut s = KalmanState::new(vec![0.2, -0.1, 0.0], vec![0.01, 0.0, 0.02]).unwrap();

        let mut m = DVector::from_vec(s.mean.clone());
        let mut p = DMatrix::from_diagonal(&DVector::from_vec(s.var.clone()));
        let qm = DMatrix::from_diagonal(&DVector::from_iterator(d, qs.iter().map(|x| x * x)));
        let phi = DMatrix::<f64>::identity(d, d) * a;
        for b in &batches {
            s = kalman_cycle(&s, Some(b), &model, &q).unwrap();

            m = &phi * m;
            p = &phi * p * phi.transpose() + &qm;
            let h = DMatrix::from_fn(b.len(), d, |r, c| if b.operator.indices[r] == c { 1.0 } else { 0.0 });
            let r = DMatrix::<f64>::identity(b.len(), b.len()) * 0.05f64.powi(2);
            let y = DVector::from_vec(b.values.clone());
            let s_mat = &h * &p * h.transpose() + r;
            let k = &p * h.transpose() * s_mat.try_inverse().unwrap();
            m = &m + &k * (y - &h * &m);
            p = (DMatrix::identity(d, d) - &k * &h) * p;

            for i in 0..d {
                assert!((s.mean[i] - m[i]).abs() < 1e-12);
                assert!((s.var[i] - p[(i, i)]).abs() < 1e-12);
                for j in 0..d {
                    if i != j {
                        assert!(p[(i, j)].abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_nonlinear_models() {
        let s = KalmanState::new(vec![0.0f64; 3], vec![0.0; 3]).unwrap();
        let q = DiagonalCovariance::uniform(3, 0.1).unwrap();
        let model = ForwardModel::shallow_water(Default::default(), 1, 1.0);
        assert!(matches!(kalman_cycle(&s, None, &model, &q), Err(Error::Unsupported(_))));
    }
}
