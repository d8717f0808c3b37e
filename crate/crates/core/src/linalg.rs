//! Small dense kernels built on nalgebra, evaluated in double precision.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Ensemble-space transform of the local ensemble transform Kalman filter.
///
/// Inputs are the local observation-space perturbations `y` (one row per
/// observation, one column per member), the localized inverse observation
/// variances, the innovation `y_obs − ȳ`, and the multiplicative covariance
/// inflation `rho`. Returns `(w̄, W)` with
/// `P̃ = [(K−1)/ρ I + Yᵀ R⁻¹ Y]⁻¹`, `w̄ = P̃ Yᵀ R⁻¹ d` and
/// `W = [(K−1) P̃]^{1/2}`, or `None` when `P̃` is numerically singular.
pub fn ensemble_transform(y: &DMatrix<f64>, r_inv: &[f64], innovation: &[f64], rho: f64) -> Option<(DVector<f64>, DMatrix<f64>)> {
    if !y.iter().chain(r_inv).chain(innovation).all(|x| x.is_finite()) || !(rho > 0.0) {
        return None;
    }
    if y.nrows() < y.ncols() {
        observation_space_transform(y, r_inv, innovation, rho)
    } else {
        ensemble_space_transform(y, r_inv, innovation, rho)
    }
}

/// Direct `K × K` eigendecomposition of `P̃⁻¹`.
fn ensemble_space_transform(y: &DMatrix<f64>, r_inv: &[f64], innovation: &[f64], rho: f64) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let k = y.ncols();
    let km1 = (k - 1) as f64;
    // C = Yᵀ R⁻¹
    let mut c = y.transpose();
    for (j, &w) in r_inv.iter().enumerate() {
        c.column_mut(j).scale_mut(w);
    }
    let a = DMatrix::<f64>::identity(k, k) * (km1 / rho) + &c * y;
    let eig = SymmetricEigen::new(a);
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    if !max.is_finite() || eig.eigenvalues.iter().any(|&l| !l.is_finite() || l <= 1e-12 * max) {
        return None;
    }
    let v = &eig.eigenvectors;
    let inv = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
    let sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| (km1 / l).sqrt()));
    let p_tilde = v * inv * v.transpose();
    let w_mean = &p_tilde * (c * DVector::from_column_slice(innovation));
    let w = v * sqrt * v.transpose();
    Some((w_mean, w))
}

/// Same transform through the `m × m` matrix `B Bᵀ`, `B = R^{-1/2} Y`, for
/// `m < K`. With `B Bᵀ = U Λ Uᵀ` and `V = Bᵀ U Λ^{-1/2}`,
/// `P̃⁻¹ = a I + V Λ Vᵀ` where `a = (K−1)/ρ`, so inverse and square root
/// only rescale the `V` directions.
fn observation_space_transform(y: &DMatrix<f64>, r_inv: &[f64], innovation: &[f64], rho: f64) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let k = y.ncols();
    let km1 = (k - 1) as f64;
    let a = km1 / rho;
    let mut b = y.clone();
    for (j, &w) in r_inv.iter().enumerate() {
        b.row_mut(j).scale_mut(w.sqrt());
    }
    let eig = SymmetricEigen::new(&b * b.transpose());
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    if !max.is_finite() {
        return None;
    }
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > 1e-12 * max.max(a))
        .collect();
    let lambda: Vec<f64> = keep.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut v = b.transpose() * eig.eigenvectors.select_columns(&keep);
    for (col, &l) in lambda.iter().enumerate() {
        v.column_mut(col).scale_mut(1.0 / l.sqrt());
    }
    // Yᵀ R⁻¹ d = Bᵀ R^{-1/2} d
    let scaled: Vec<f64> = innovation.iter().zip(r_inv).map(|(d, w)| d * w.sqrt()).collect();
    let rhs = b.transpose() * DVector::from_vec(scaled);
    let shrink = DVector::from_iterator(lambda.len(), lambda.iter().map(|l| l / (a + l)));
    let w_mean = (&rhs - &v * shrink.component_mul(&(v.transpose() * &rhs))) / a;
    let root = DVector::from_iterator(lambda.len(), lambda.iter().map(|l| (a / (a + l)).sqrt() - 1.0));
    let mut vr = v.clone();
    for (col, &r) in root.iter().enumerate() {
        vr.column_mut(col).scale_mut(r);
    }
    let w = (DMatrix::<f64>::identity(k, k) + vr * v.transpose()) * (km1 / a).sqrt();
    Some((w_mean, w))
}
