use rand::Rng;

use super::grid::GridSpec;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    LinearSelect,
    /// Selection followed by elementwise `arctan`.
    ArctanSelect,
}

/// Selection operator `C` (optionally composed with `arctan`).
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationOperator {
    pub kind: OperatorKind,
    /// Observed state-vector indices, one per observation.
    pub indices: Vec<usize>,
}

impl ObservationOperator {
    /// Builds an operator, checking indices are unique and inside `[0, dim)`.
    pub fn new(kind: OperatorKind, indices: Vec<usize>, dim: usize) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= dim) {
            return Err(Error::Config(format!("observed index {bad} outside state of size {dim}")));
        }
        let mut seen = vec![false; dim];
        for &i in &indices {
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Config(format!("observed index {i} appears twice")));
            }
        }
        Ok(Self { kind, indices })
    }

    /// Skips validation; used for local operators whose index sets are
    /// derived from an already-validated batch.
    pub(crate) fn new_unchecked(kind: OperatorKind, indices: Vec<usize>) -> Self {
        Self { kind, indices }
    }

    #[inline]
    pub fn map<T: Real>(&self, x: T) -> T {
        match self.kind {
            OperatorKind::LinearSelect => x,
            OperatorKind::ArctanSelect => x.atan(),
        }
    }

    #[inline]
    pub fn derivative<T: Real>(&self, x: T) -> T {
        match self.kind {
            OperatorKind::LinearSelect => T::one(),
            OperatorKind::ArctanSelect => T::one() / (T::one() + x * x),
        }
    }

    pub fn apply<T: Real>(&self, z: &[T]) -> Vec<T> {
        self.indices.iter().map(|&i| self.map(z[i])).collect()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    Gaussian,
    Cauchy,
}

/// Observation error law `V_k` with per-observation scales.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel<T> {
    pub kind: NoiseKind,
    pub scales: Vec<T>,
}

impl<T: Real> NoiseModel<T> {
    /// Scales must be finite and non-negative. Zero scales are accepted so
    /// that noise-free synthetic observations can be generated, but such a
    /// batch cannot be assimilated.
    pub fn new(kind: NoiseKind, scales: Vec<T>) -> Result<Self> {
        if let Some(i) = scales.iter().position(|&s| !(s >= T::zero()) || !s.is_finite()) {
            return Err(Error::ZeroStd(i));
        }
        Ok(Self { kind, scales })
    }

    /// Log-density of a single residual `r = y − O(z)` with scale `s`.
    #[inline]
    pub fn logpdf(&self, r: T, s: T) -> T {
        match self.kind {
            NoiseKind::Gaussian => {
                let half_log_2pi = T::lit(0.5) * (T::lit(2.0) * T::PI()).ln();
                let t = r / s;
                -half_log_2pi - s.ln() - T::lit(0.5) * t * t
            }
            NoiseKind::Cauchy => {
                let t = r / s;
                -(T::PI() * s).ln() - (T::one() + t * t).ln()
            }
        }
    }

    /// Derivative of [`Self::logpdf`] with respect to the predicted value
    /// `O(z)` (so the sign is that of the residual).
    #[inline]
    pub fn dlogpdf_dpred(&self, r: T, s: T) -> T {
        match self.kind {
            NoiseKind::Gaussian => r / (s * s),
            NoiseKind::Cauchy => T::lit(2.0) * r / (s * s + r * r),
        }
    }

    /// Draws one noise value with scale `s`.
    pub fn sample<R: Rng + ?Sized>(&self, s: T, rng: &mut R) -> T {
        match self.kind {
            NoiseKind::Gaussian => s * T::std_normal(rng),
            NoiseKind::Cauchy => {
                // inverse CDF; uniform() is in [0,1) so shift off the pole at 0
                let mut u = T::uniform(rng);
                while u == T::zero() {
                    u = T::uniform(rng);
                }
                s * (T::PI() * (u - T::lit(0.5))).tan()
            }
        }
    }
}

/// Observations available at one assimilation time.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationBatch<T> {
    pub cycle: usize,
    pub operator: ObservationOperator,
    pub values: Vec<T>,
    pub noise: NoiseModel<T>,
}

impl<T: Real> ObservationBatch<T> {
    pub fn new(cycle: usize, operator: ObservationOperator, values: Vec<T>, noise: NoiseModel<T>) -> Result<Self> {
        if values.len() != operator.len() {
            return Err(Error::Dimension {
                what: "observation values",
                expected: operator.len(),
                got: values.len(),
            });
        }
        if noise.scales.len() != operator.len() {
            return Err(Error::Dimension {
                what: "observation scales",
                expected: operator.len(),
                got: noise.scales.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "observation values",
                index,
            });
        }
        Ok(Self {
            cycle,
            operator,
            values,
            noise,
        })
    }

    pub fn empty(cycle: usize, kind: OperatorKind, noise: NoiseKind) -> Self {
        Self {
            cycle,
            operator: ObservationOperator::new_unchecked(kind, Vec::new()),
            values: Vec::new(),
            noise: NoiseModel {
                kind: noise,
                scales: Vec::new(),
            },
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The case where the analysis posterior is an exact Gaussian mixture.
    pub fn is_linear_gaussian(&self) -> bool {
        self.operator.kind == OperatorKind::LinearSelect && self.noise.kind == NoiseKind::Gaussian
    }

    /// Grid cell of every observation.
    pub fn cells(&self, spec: &GridSpec) -> Vec<usize> {
        self.operator.indices.iter().map(|&i| spec.var_cell(i).1).collect()
    }

    /// Local batch built from the observations at positions `obs`, with state
    /// indices translated by `local_index` and scales replaced by `scales`.
    pub fn localize(&self, obs: &[usize], local_index: impl Fn(usize) -> usize, scales: Vec<T>) -> Self {
        debug_assert_eq!(obs.len(), scales.len());
        Self {
            cycle: self.cycle,
            operator: ObservationOperator::new_unchecked(
                self.operator.kind,
                obs.iter().map(|&j| local_index(self.operator.indices[j])).collect(),
            ),
            values: obs.iter().map(|&j| self.values[j]).collect(),
            noise: NoiseModel {
                kind: self.noise.kind,
                scales,
            },
        }
    }

    /// Checks the batch can be assimilated: positive scales, indices in range.
    pub fn validate_for(&self, dim: usize) -> Result<()> {
        if let Some(i) = self.noise.scales.iter().position(|&s| !(s > T::zero())) {
            return Err(Error::ZeroStd(i));
        }
        if let Some(&bad) = self.operator.indices.iter().find(|&&i| i >= dim) {
            return Err(Error::Config(format!("observed index {bad} outside state of size {dim}")));
        }
        Ok(())
    }
}

/// `log g(y | z)`, normalising constants included.
pub fn likelihood_logpdf<T: Real>(z: &[T], batch: &ObservationBatch<T>) -> T {
    let op = &batch.operator;
    let mut acc = T::zero();
    for ((&i, &y), &s) in op.indices.iter().zip(&batch.values).zip(&batch.noise.scales) {
        acc = acc + batch.noise.logpdf(y - op.map(z[i]), s);
    }
    acc
}

/// Gradient of [`likelihood_logpdf`] with respect to `z`.
pub fn likelihood_grad<T: Real>(z: &[T], batch: &ObservationBatch<T>) -> Vec<T> {
    let mut out = vec![T::zero(); z.len()];
    likelihood_grad_into(z, batch, &mut out);
    out
}

/// Writes the gradient into `out`, overwriting it.
pub fn likelihood_grad_into<T: Real>(z: &[T], batch: &ObservationBatch<T>, out: &mut [T]) {
    out.fill(T::zero());
    let op = &batch.operator;
    for ((&i, &y), &s) in op.indices.iter().zip(&batch.values).zip(&batch.noise.scales) {
        let x = z[i];
        let r = y - op.map(x);
        out[i] = out[i] + batch.noise.dlogpdf_dpred(r, s) * op.derivative(x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Stream, StreamKey};

    fn batch(kind: OperatorKind, noise: NoiseKind, idx: Vec<usize>, y: Vec<f64>, s: Vec<f64>, dim: usize) -> ObservationBatch<f64> {
        ObservationBatch::new(
            0,
            ObservationOperator::new(kind, idx, dim).unwrap(),
            y,
            NoiseModel::new(noise, s).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn gaussian_zero_residuals() {
        let b = batch(OperatorKind::LinearSelect, NoiseKind::Gaussian, vec![0, 1, 2, 3], vec![0.0; 4], vec![1.0; 4], 4);
        let lp = likelihood_logpdf(&[0.0; 4], &b);
        assert!((lp + 2.0 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn cauchy_at_one_scale() {
        let s = 0.3;
        let b = batch(OperatorKind::LinearSelect, NoiseKind::Cauchy, vec![0], vec![s], vec![s], 1);
        let lp = likelihood_logpdf(&[0.0], &b);
        // standard Cauchy density at 1 is 1/(2π), rescaled by 1/σ
        let expected = (1.0 / (2.0 * std::f64::consts::PI * s)).ln();
        assert!((lp - expected).abs() < 1e-12);
        assert!((lp - (-(std::f64::consts::PI * s).ln() - 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn cauchy_tails_are_heavier() {
        let s = 0.05;
        let g = NoiseModel::new(NoiseKind::Gaussian, vec![s]).unwrap();
        let c = NoiseModel::new(NoiseKind::Cauchy, vec![s]).unwrap();
        let lc: f64 = c.logpdf(100.0 * s, s);
        assert!(lc.is_finite());
        assert!(lc > g.logpdf(100.0 * s, s));
    }

    #[test]
    fn densities_integrate_to_one() {
        // r = t / (1 - t²) maps (-1, 1) onto the real line
        for kind in [NoiseKind::Gaussian, NoiseKind::Cauchy] {
            let s = 0.7;
            let nm = NoiseModel::new(kind, vec![s]).unwrap();
            let n = 400_000usize;
            let h = 2.0 / n as f64;
            let f = |t: f64| {
                if t.abs() >= 1.0 {
                    // limit of the integrand at the endpoints
                    return match kind {
                        NoiseKind::Gaussian => 0.0,
                        NoiseKind::Cauchy => 2.0 * s / std::f64::consts::PI,
                    };
                }
                let r = t / (1.0 - t * t);
                let dr = (1.0 + t * t) / (1.0 - t * t).powi(2);
                nm.logpdf(r, s).exp() * dr
            };
            let mut acc = f(-1.0) + f(1.0);
            for i in 1..n {
                let t = -1.0 + i as f64 * h;
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(t);
            }
            let total = acc * h / 3.0;
            assert!((total - 1.0).abs() < 1e-6, "{kind:?}: {total}");
        }
    }

    #[test]
    fn gradient_zero_at_zero_residual_and_off_support() {
        let b = batch(OperatorKind::LinearSelect, NoiseKind::Gaussian, vec![1, 3], vec![0.5, -0.2], vec![0.1, 0.1], 5);
        let z = [9.0, 0.5, 9.0, -0.2, 9.0];
        let g = likelihood_grad(&z, &b);
        assert!(g.iter().all(|&x| x == 0.0));
        let z2 = [9.0, 0.7, 9.0, -0.2, 9.0];
        let g2 = likelihood_grad(&z2, &b);
        assert_eq!((g2[0], g2[2], g2[4]), (0.0, 0.0, 0.0));
        assert!(g2[1] != 0.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let d = 50;
        let mut rng = StreamKey::new(5, Stream::Test).rng();
        let idx: Vec<usize> = (0..d).filter(|i| i % 3 != 1).collect();
        for op in [OperatorKind::LinearSelect, OperatorKind::ArctanSelect] {
            for noise in [NoiseKind::Gaussian, NoiseKind::Cauchy] {
                let z: Vec<f64> = (0..d).map(|_| 2.0 * f64::std_normal(&mut rng)).collect();
                let y: Vec<f64> = idx.iter().map(|_| f64::std_normal(&mut rng)).collect();
                let s: Vec<f64> = idx.iter().map(|_| 0.5 + f64::uniform(&mut rng)).collect();
                let b = batch(op, noise, idx.clone(), y, s, d);
                let g = likelihood_grad(&z, &b);
                let h = 1e-5;
                for i in 0..d {
                    let mut zp = z.clone();
                    let mut zm = z.clone();
                    zp[i] += h;
                    zm[i] -= h;
                    let fd = (likelihood_logpdf(&zp, &b) - likelihood_logpdf(&zm, &b)) / (2.0 * h);
                    let err = (fd - g[i]).abs();
                    assert!(
                        err <= 1e-6 * fd.abs().max(g[i].abs()) + 1e-9,
                        "{op:?}/{noise:?} coord {i}: fd {fd} vs {}",
                        g[i]
                    );
                }
            }
        }
    }

    #[test]
    fn arctan_operator_is_bounded() {
        let op = ObservationOperator::new(OperatorKind::ArctanSelect, vec![0, 1], 2).unwrap();
        let y = op.apply(&[1e6f64, -1e6]);
        assert!(y[0] < std::f64::consts::FRAC_PI_2 && y[1] > -std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn operator_rejects_duplicates_and_out_of_range() {
        assert!(ObservationOperator::new(OperatorKind::LinearSelect, vec![1, 1], 3).is_err());
        assert!(ObservationOperator::new(OperatorKind::LinearSelect, vec![3], 3).is_err());
    }

    #[test]
    fn cauchy_samples_have_the_right_tail_mass() {
        let nm = NoiseModel::new(NoiseKind::Cauchy, vec![0.05f64]).unwrap();
        let mut rng = StreamKey::new(3, Stream::Test).rng();
        let n = 100_000;
        let exceed = (0..n).filter(|_| nm.sample(0.05, &mut rng).abs() > 0.1).count();
        let frac = exceed as f64 / n as f64;
        // P(|t| > 2) = 1 - 2 atan(2)/π
        let p = 1.0 - 2.0 * 2f64.atan() / std::f64::consts::PI;
        assert!((frac - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt(), "{frac} vs {p}");
    }
}
