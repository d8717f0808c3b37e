use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{likelihood_grad_into, likelihood_logpdf, DiagonalCovariance, ObservationBatch};
use crate::scalar::{normalize_log_weights, sample_categorical, Real};

/// The (local) filtering target `π(z, j) ∝ g(y | z) f(μ^{(j)}, z)` over a set
/// of sampling coordinates.
///
/// `means`, `q` and the batch indices all live in the same local coordinate
/// system of length `dim`.
pub struct Target<'a, T> {
    pub means: &'a [Vec<T>],
    pub q: &'a DiagonalCovariance<T>,
    pub batch: &'a ObservationBatch<T>,
    inv_var: Vec<T>,
    log_norm: T,
    obs_offsets: Vec<usize>,
    obs_by_coord: Vec<usize>,
}

impl<'a, T: Real> Target<'a, T> {
    pub fn new(means: &'a [Vec<T>], q: &'a DiagonalCovariance<T>, batch: &'a ObservationBatch<T>) -> Result<Self> {
        let dim = q.len();
        if means.is_empty() {
            return Err(Error::Config("target needs at least one forecast mean".into()));
        }
        if let Some(m) = means.iter().find(|m| m.len() != dim) {
            return Err(Error::Dimension {
                what: "forecast mean",
                expected: dim,
                got: m.len(),
            });
        }
        batch.validate_for(dim)?;
        let mut inv_var = Vec::with_capacity(dim);
        let mut log_norm = T::zero();
        let half_log_2pi = T::lit(0.5) * (T::lit(2.0) * T::PI()).ln();
        for i in 0..dim {
            if !q.is_active(i) {
                return Err(Error::ZeroStd(i));
            }
            inv_var.push(T::one() / q.var(i));
            log_norm = log_norm - half_log_2pi - q.std(i).ln();
        }
        let mut obs_offsets = vec![0usize; dim + 1];
        for &i in &batch.operator.indices {
            obs_offsets[i + 1] += 1;
        }
        for i in 0..dim {
            obs_offsets[i + 1] += obs_offsets[i];
        }
        let mut fill = obs_offsets.clone();
        let mut obs_by_coord = vec![0; batch.len()];
        for (j, &i) in batch.operator.indices.iter().enumerate() {
            obs_by_coord[fill[i]] = j;
            fill[i] += 1;
        }
        Ok(Self {
            means,
            q,
            batch,
            inv_var,
            log_norm,
            obs_offsets,
            obs_by_coord,
        })
    }

    pub fn dim(&self) -> usize {
        self.inv_var.len()
    }

    pub fn n_ancestors(&self) -> usize {
        self.means.len()
    }

    #[inline]
    pub fn inv_var(&self, i: usize) -> T {
        self.inv_var[i]
    }

    /// `−½ Σ (z − μ_j)² / q`, i.e. the transition log-density without its constant.
    pub fn prior_quad(&self, z: &[T], j: usize) -> T {
        let mu = &self.means[j];
        let mut acc = T::zero();
        for i in 0..z.len() {
            let r = z[i] - mu[i];
            acc = acc + r * r * self.inv_var[i];
        }
        -T::lit(0.5) * acc
    }

    pub fn log_prior(&self, z: &[T], j: usize) -> T {
        self.log_norm + self.prior_quad(z, j)
    }

    pub fn log_lik(&self, z: &[T]) -> T {
        likelihood_logpdf(z, self.batch)
    }

    pub fn log_target(&self, z: &[T], j: usize) -> T {
        self.log_prior(z, j) + self.log_lik(z)
    }

    /// Log-likelihood of the observations that sit on coordinate `i` alone.
    pub fn log_lik_coord(&self, z_i: T, i: usize) -> T {
        let b = self.batch;
        let op = &b.operator;
        let pred = op.map(z_i);
        self.obs_by_coord[self.obs_offsets[i]..self.obs_offsets[i + 1]]
            .iter()
            .map(|&o| b.noise.logpdf(b.values[o] - pred, b.noise.scales[o]))
            .fold(T::zero(), |a, x| a + x)
    }

    /// `∇_z log π(z, j)` written into `out`.
    pub fn grad_log_target(&self, z: &[T], j: usize, out: &mut [T]) {
        likelihood_grad_into(z, self.batch, out);
        let mu = &self.means[j];
        for i in 0..z.len() {
            out[i] = out[i] - (z[i] - mu[i]) * self.inv_var[i];
        }
    }
}

/// Draws the ancestor index with probability `∝ f(μ^{(j)}, z)`.
pub fn gibbs_ancestor<T: Real, R: Rng + ?Sized>(z: &[T], target: &Target<'_, T>, rng: &mut R) -> usize {
    let n = target.n_ancestors();
    if n == 1 {
        return 0;
    }
    let logs: Vec<T> = (0..n).map(|j| target.prior_quad(z, j)).collect();
    sample_categorical(&normalize_log_weights(&logs), rng)
}

/// One MCMC chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState<T> {
    pub z: Vec<T>,
    /// Zero-based index of the forecast member anchoring the transition density.
    pub ancestor: usize,
    /// Cached `log π(z, ancestor)`.
    pub log_target: T,
    /// Cached `log g(y | z)`.
    pub log_lik: T,
    /// Current `β` (pCN), `ε` (HMC) or step (RWM, MALA).
    pub step: T,
    pub accepts: usize,
    pub steps_taken: usize,
    pub divergences: usize,
}

impl<T: Real> ChainState<T> {
    pub fn new(z: Vec<T>, ancestor: usize, step: T, target: &Target<'_, T>) -> Result<Self> {
        if z.len() != target.dim() {
            return Err(Error::Dimension {
                what: "chain initial state",
                expected: target.dim(),
                got: z.len(),
            });
        }
        if ancestor >= target.n_ancestors() {
            return Err(Error::Config(format!(
                "ancestor {ancestor} out of range for {} forecast members",
                target.n_ancestors()
            )));
        }
        let log_lik = target.log_lik(&z);
        let log_target = target.log_prior(&z, ancestor) + log_lik;
        Ok(Self {
            z,
            ancestor,
            log_target,
            log_lik,
            step,
            accepts: 0,
            steps_taken: 0,
            divergences: 0,
        })
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.steps_taken == 0 {
            0.0
        } else {
            self.accepts as f64 / self.steps_taken as f64
        }
    }

    /// Resamples the ancestor and refreshes the cached target.
    pub(crate) fn refresh_ancestor<R: Rng + ?Sized>(&mut self, target: &Target<'_, T>, rng: &mut R) {
        if target.n_ancestors() > 1 {
            self.ancestor = gibbs_ancestor(&self.z, target, rng);
            self.log_target = target.log_prior(&self.z, self.ancestor) + self.log_lik;
        }
    }

    /// Whether the cached log-target matches a fresh evaluation.
    pub fn cache_is_coherent(&self, target: &Target<'_, T>) -> bool {
        let fresh = target.log_target(&self.z, self.ancestor);
        let tol = T::lit(1e-8) * (T::one() + fresh.abs());
        (fresh - self.log_target).abs() <= tol || (!fresh.is_finite() && !self.log_target.is_finite())
    }
}
