use rand::Rng;

use super::target::{ChainState, Target};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[inline]
fn accept<T: Real, R: Rng + ?Sized>(log_alpha: T, rng: &mut R) -> bool {
    if log_alpha.is_nan() {
        return false;
    }
    log_alpha >= T::zero() || T::uniform(rng).ln() < log_alpha
}

fn positive_step<T: Real>(step: T) -> Result<()> {
    if step > T::zero() && step.is_finite() {
        Ok(())
    } else {
        Err(Error::StepSize {
            step: step.to_f64_lossy(),
            range: "(0, inf)",
        })
    }
}

/// Preconditioned Crank–Nicolson step centred on the current ancestor's
/// forecast mean. The proposal preserves `N(μ^{(j)}, Q)`, so only the
/// likelihood ratio enters the acceptance probability.
///
/// Returns 1 on acceptance and 0 otherwise.
pub fn pcn_step<T: Real, R: Rng + ?Sized>(chain: &mut ChainState<T>, target: &Target<'_, T>, rng: &mut R) -> Result<T> {
    let beta = chain.step;
    if !(beta > T::zero() && beta <= T::one()) {
        return Err(Error::StepSize {
            step: beta.to_f64_lossy(),
            range: "(0, 1]",
        });
    }
    chain.refresh_ancestor(target, rng);
    let mu = &target.means[chain.ancestor];
    let rho = (T::one() - beta * beta).sqrt();
    let proposal: Vec<T> = chain
        .z
        .iter()
        .zip(mu)
        .enumerate()
        .map(|(i, (&z, &m))| m + rho * (z - m) + beta * target.q.std(i) * T::std_normal(rng))
        .collect();
    let log_lik = target.log_lik(&proposal);
    chain.steps_taken += 1;
    if accept(log_lik - chain.log_lik, rng) {
        chain.log_target = target.log_prior(&proposal, chain.ancestor) + log_lik;
        chain.log_lik = log_lik;
        chain.z = proposal;
        chain.accepts += 1;
        Ok(T::one())
    } else {
        Ok(T::zero())
    }
}

/// Runs `n_steps` leapfrog steps for the prior-whitened Hamiltonian
/// `H = −log π(z, j) + ½ Σ q_i p_i²`, updating `z` and `p` in place.
pub fn leapfrog<T: Real>(target: &Target<'_, T>, j: usize, z: &mut [T], p: &mut [T], eps: T, n_steps: usize) {
    let mut grad = vec![T::zero(); z.len()];
    target.grad_log_target(z, j, &mut grad);
    leapfrog_with(target, j, z, p, &mut grad, eps, n_steps);
}

/// Leapfrog with the gradient at the starting point already in `grad`; on
/// return `grad` holds the gradient at the end point.
fn leapfrog_with<T: Real>(
    target: &Target<'_, T>,
    j: usize,
    z: &mut [T],
    p: &mut [T],
    grad: &mut [T],
    eps: T,
    n_steps: usize,
) {
    let half = T::lit(0.5) * eps;
    for _ in 0..n_steps {
        for i in 0..z.len() {
            p[i] = p[i] + half * grad[i];
            z[i] = z[i] + eps * target.q.var(i) * p[i];
        }
        target.grad_log_target(z, j, grad);
        for i in 0..z.len() {
            p[i] = p[i] + half * grad[i];
        }
    }
}

fn kinetic<T: Real>(target: &Target<'_, T>, p: &[T]) -> T {
    let mut k = T::zero();
    for (i, &pi) in p.iter().enumerate() {
        k = k + target.q.var(i) * pi * pi;
    }
    T::lit(0.5) * k
}

/// Hamiltonian Monte Carlo step with momentum `p_i ~ N(0, 1/q_i)`.
///
/// A trajectory that reaches a non-finite energy is rejected and counted as
/// a divergence.
pub fn hmc_step<T: Real, R: Rng + ?Sized>(
    chain: &mut ChainState<T>,
    target: &Target<'_, T>,
    n_leapfrog: usize,
    rng: &mut R,
) -> Result<T> {
    positive_step(chain.step)?;
    chain.refresh_ancestor(target, rng);
    let j = chain.ancestor;
    let n = chain.z.len();
    // ±10% step jitter breaks trajectory periodicity on near-Gaussian targets
    let eps = chain.step * (T::lit(0.9) + T::lit(0.2) * T::uniform(rng));
    let mut p: Vec<T> = (0..n).map(|i| T::std_normal(rng) / target.q.std(i)).collect();
    let h0 = -chain.log_target + kinetic(target, &p);
    let mut z = chain.z.clone();
    let mut grad = vec![T::zero(); n];
    target.grad_log_target(&z, j, &mut grad);
    leapfrog_with(target, j, &mut z, &mut p, &mut grad, eps, n_leapfrog);
    chain.steps_taken += 1;

    let log_lik = target.log_lik(&z);
    let log_target = target.log_prior(&z, j) + log_lik;
    let h1 = -log_target + kinetic(target, &p);
    if !h1.is_finite() {
        chain.divergences += 1;
        // consume the acceptance draw so the stream stays aligned
        let _ = T::uniform(rng);
        return Ok(T::zero());
    }
    if accept(h0 - h1, rng) {
        chain.z = z;
        chain.log_lik = log_lik;
        chain.log_target = log_target;
        chain.accepts += 1;
        Ok(T::one())
    } else {
        Ok(T::zero())
    }
}

/// Langevin drift `h²/2 · Q ∇log π(z, j)`; with `Q = I` this is
/// `h²/2 · ∇log π`.
pub fn mala_drift<T: Real>(target: &Target<'_, T>, z: &[T], j: usize, h: T) -> Vec<T> {
    let mut g = vec![T::zero(); z.len()];
    target.grad_log_target(z, j, &mut g);
    let c = T::lit(0.5) * h * h;
    g.iter().enumerate().map(|(i, &gi)| c * target.q.var(i) * gi).collect()
}

/// Metropolis-adjusted Langevin step, preconditioned by the prior variances.
pub fn mala_step<T: Real, R: Rng + ?Sized>(chain: &mut ChainState<T>, target: &Target<'_, T>, rng: &mut R) -> Result<T> {
    let h = chain.step;
    positive_step(h)?;
    chain.refresh_ancestor(target, rng);
    let j = chain.ancestor;
    let fwd = mala_drift(target, &chain.z, j, h);
    let proposal: Vec<T> = (0..chain.z.len())
        .map(|i| chain.z[i] + fwd[i] + h * target.q.std(i) * T::std_normal(rng))
        .collect();
    let bwd = mala_drift(target, &proposal, j, h);
    // log q(b | a) up to a constant shared by both directions
    let mut log_q_fwd = T::zero();
    let mut log_q_bwd = T::zero();
    for i in 0..proposal.len() {
        let s2 = h * h * target.q.var(i);
        let a = proposal[i] - chain.z[i] - fwd[i];
        let b = chain.z[i] - proposal[i] - bwd[i];
        log_q_fwd = log_q_fwd - a * a / (T::lit(2.0) * s2);
        log_q_bwd = log_q_bwd - b * b / (T::lit(2.0) * s2);
    }
    let log_lik = target.log_lik(&proposal);
    let log_target = target.log_prior(&proposal, j) + log_lik;
    chain.steps_taken += 1;
    if !log_target.is_finite() {
        chain.divergences += 1;
        let _ = T::uniform(rng);
        return Ok(T::zero());
    }
    if accept(log_target - chain.log_target + log_q_bwd - log_q_fwd, rng) {
        chain.z = proposal;
        chain.log_lik = log_lik;
        chain.log_target = log_target;
        chain.accepts += 1;
        Ok(T::one())
    } else {
        Ok(T::zero())
    }
}

/// Gaussian random-walk Metropolis with proposal `z + step · √q ∘ ξ`.
///
/// With `componentwise` the step is a Gibbs sweep of single-coordinate
/// updates, each evaluating only the observations on that coordinate.
/// Returns the fraction of accepted moves. A zero step is allowed and
/// accepts every move.
pub fn rwm_step<T: Real, R: Rng + ?Sized>(
    chain: &mut ChainState<T>,
    target: &Target<'_, T>,
    componentwise: bool,
    rng: &mut R,
) -> Result<T> {
    let step = chain.step;
    if !(step >= T::zero()) || !step.is_finite() {
        return Err(Error::StepSize {
            step: step.to_f64_lossy(),
            range: "[0, inf)",
        });
    }
    chain.refresh_ancestor(target, rng);
    let j = chain.ancestor;
    if !componentwise {
        let proposal: Vec<T> = (0..chain.z.len())
            .map(|i| chain.z[i] + step * target.q.std(i) * T::std_normal(rng))
            .collect();
        let log_lik = target.log_lik(&proposal);
        let log_target = target.log_prior(&proposal, j) + log_lik;
        chain.steps_taken += 1;
        if accept(log_target - chain.log_target, rng) {
            chain.z = proposal;
            chain.log_lik = log_lik;
            chain.log_target = log_target;
            chain.accepts += 1;
            return Ok(T::one());
        }
        return Ok(T::zero());
    }

    let mu = &target.means[j];
    let mut accepted = 0usize;
    let n = chain.z.len();
    for i in 0..n {
        let old = chain.z[i];
        let new = old + step * target.q.std(i) * T::std_normal(rng);
        let (ro, rn) = (old - mu[i], new - mu[i]);
        let d_prior = -T::lit(0.5) * (rn * rn - ro * ro) * target.inv_var(i);
        let d_lik = target.log_lik_coord(new, i) - target.log_lik_coord(old, i);
        if accept(d_prior + d_lik, rng) {
            chain.z[i] = new;
            chain.log_lik = chain.log_lik + d_lik;
            chain.log_target = chain.log_target + d_prior + d_lik;
            accepted += 1;
        }
    }
    chain.steps_taken += n;
    chain.accepts += accepted;
    Ok(T::from_usize(accepted).unwrap() / T::from_usize(n.max(1)).unwrap())
}
