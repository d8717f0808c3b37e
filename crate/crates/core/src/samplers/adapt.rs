use crate::scalar::Real;

/// One Robbins–Monro step on the log step size:
/// `log β ← log β + γ_s (a − α*)`, `γ_s = 0.5 / (1 + s)^0.6`.
///
/// `accepted` is the acceptance indicator (or, for a componentwise sweep,
/// the fraction of accepted coordinate moves).
pub fn robbins_monro_update<T: Real>(step: T, accepted: T, s: usize, target: T) -> T {
    let gamma = T::lit(0.5) / T::from_usize(s + 1).unwrap().powf(T::lit(0.6));
    (step.ln() + gamma * (accepted - target)).exp()
}
