//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Floating-point scalar the filters are generic over.
///
/// Implemented for `f32` and `f64`. Random draws go through the trait so that
/// generic code never has to carry `StandardNormal: Distribution<T>` bounds.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal; exact for `f64`, rounded for `f32`.
    fn lit(x: f64) -> Self;

    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Uniform draw on `[0, 1)`.
    fn uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            #[inline]
            fn lit(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                <StandardNormal as Distribution<$t>>::sample(&StandardNormal, rng)
            }

            #[inline]
            fn uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.random::<$t>()
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// `log(sum(exp(xs)))` without overflow. Returns `-inf` for an empty slice.
pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let s: T = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

/// Normalises log-weights in place into probabilities.
pub fn normalize_log_weights<T: Real>(log_w: &[T]) -> Vec<T> {
    let lse = log_sum_exp(log_w);
    log_w.iter().map(|&l| (l - lse).exp()).collect()
}

/// Draws an index from normalised probabilities by inversion.
pub fn sample_categorical<T: Real, R: Rng + ?Sized>(probs: &[T], rng: &mut R) -> usize {
    let u = T::uniform(rng);
    let mut acc = T::zero();
    for (i, &p) in probs.iter().enumerate() {
        acc = acc + p;
        if u < acc {
            return i;
        }
    }
    // rounding left the cumulative sum just below 1
    probs.iter().rposition(|&p| p > T::zero()).unwrap_or(0)
}

/// Same as [`sample_categorical`] over a precomputed cumulative table.
pub fn sample_cumulative<T: Real, R: Rng + ?Sized>(cumulative: &[T], rng: &mut R) -> usize {
    let total = *cumulative.last().expect("non-empty cumulative table");
    let u = T::uniform(rng) * total;
    cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_matches_direct_sum() {
        let xs = [0.1f64, -2.0, 3.5];
        let direct: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - direct).abs() < 1e-14);
    }

    #[test]
    fn log_sum_exp_survives_large_values() {
        let xs = [1000.0f64, 1000.0];
        assert!((log_sum_exp(&xs) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn cumulative_sampling_never_picks_zero_mass() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let cum = [0.0f64, 0.5, 0.5, 1.0];
        for _ in 0..1000 {
            let i = sample_cumulative(&cum, &mut rng);
            assert!(i == 1 || i == 3);
        }
    }
}
