use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adapt::robbins_monro_update;
use super::kernels::{hmc_step, mala_step, pcn_step, rwm_step};
use super::target::{ChainState, Target};
use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    RwmGibbs,
    Pcn,
    Mala,
    Hmc,
}

/// Settings shared by every MCMC kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelConfig<T> {
    pub kind: KernelKind,
    /// `N_a`, the number of pooled post-burn-in samples.
    pub n_analysis: usize,
    pub burn_in: usize,
    /// `P`, the number of independent chains.
    pub chains: usize,
    /// `β₀` for pCN, `ε₀` for HMC, step for RWM and MALA.
    pub init_step: T,
    pub leapfrog_steps: usize,
    pub target_accept: T,
    /// Robbins–Monro tuning of the step during burn-in.
    pub adapt: bool,
    /// RWM only: coordinate-wise Gibbs sweep instead of a full-vector move.
    pub componentwise: bool,
    /// Local coordinate whose post-burn-in values are recorded per chain.
    pub trace_coord: Option<usize>,
}

impl<T: Real> KernelConfig<T> {
    pub fn new(kind: KernelKind, n_analysis: usize, burn_in: usize, chains: usize, init_step: T) -> Self {
        Self {
            kind,
            n_analysis,
            burn_in,
            chains,
            init_step,
            leapfrog_steps: 10,
            target_accept: T::lit(match kind {
                KernelKind::Hmc => 0.65,
                _ => 0.35,
            }),
            adapt: true,
            componentwise: false,
            trace_coord: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_analysis == 0 {
            return Err(Error::Config("kernel n_analysis must be at least 1".into()));
        }
        if self.chains == 0 {
            return Err(Error::Config("kernel chains must be at least 1".into()));
        }
        if !(self.target_accept > T::zero() && self.target_accept < T::one()) {
            return Err(Error::Config(format!(
                "target acceptance must lie in (0, 1), got {}",
                self.target_accept
            )));
        }
        if !(self.init_step > T::zero()) || !self.init_step.is_finite() {
            return Err(Error::StepSize {
                step: self.init_step.to_f64_lossy(),
                range: "(0, inf)",
            });
        }
        if self.kind == KernelKind::Pcn && self.init_step > T::one() {
            return Err(Error::StepSize {
                step: self.init_step.to_f64_lossy(),
                range: "(0, 1]",
            });
        }
        if self.kind == KernelKind::Hmc && self.leapfrog_steps == 0 {
            return Err(Error::Config("HMC needs at least one leapfrog step".into()));
        }
        Ok(())
    }

    /// Samples each chain keeps after burn-in: `⌈N_a / P⌉`.
    pub fn per_chain(&self) -> usize {
        self.n_analysis.div_ceil(self.chains)
    }
}

/// Per-chain summary written to the diagnostics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub chain: usize,
    /// Acceptance over the kept (post-burn-in) steps.
    pub acceptance: f64,
    pub burn_in_acceptance: f64,
    pub final_step: f64,
    pub divergences: usize,
    pub steps: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trace: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct ChainOutput<T> {
    /// Pooled samples in chain order, truncated to `N_a`.
    pub samples: Vec<Vec<T>>,
    pub diagnostics: Vec<ChainDiagnostics>,
}

fn kernel_step<T: Real>(
    cfg: &KernelConfig<T>,
    chain: &mut ChainState<T>,
    target: &Target<'_, T>,
    rng: &mut crate::rng::StreamRng,
) -> Result<T> {
    match cfg.kind {
        KernelKind::Pcn => pcn_step(chain, target, rng),
        KernelKind::Hmc => hmc_step(chain, target, cfg.leapfrog_steps, rng),
        KernelKind::Mala => mala_step(chain, target, rng),
        KernelKind::RwmGibbs => rwm_step(chain, target, cfg.componentwise, rng),
    }
}

const COHERENCE_CHECK_EVERY: usize = 64;

fn run_one<T: Real>(
    cfg: &KernelConfig<T>,
    target: &Target<'_, T>,
    init: &(Vec<T>, usize),
    id: usize,
    key: StreamKey,
) -> Result<(Vec<Vec<T>>, ChainDiagnostics)> {
    let mut rng = key.sub(id as u64).rng();
    let mut chain = ChainState::new(init.0.clone(), init.1, cfg.init_step, target)?;
    for s in 0..cfg.burn_in {
        let acc = kernel_step(cfg, &mut chain, target, &mut rng)?;
        if cfg.adapt {
            chain.step = robbins_monro_update(chain.step, acc, s, cfg.target_accept);
            if cfg.kind == KernelKind::Pcn && chain.step > T::one() {
                chain.step = T::one();
            }
        }
        if s % COHERENCE_CHECK_EVERY == 0 {
            debug_assert!(chain.cache_is_coherent(target), "stale log-target cache");
        }
    }
    let burn_in_acceptance = chain.acceptance_rate();
    let (acc0, steps0) = (chain.accepts, chain.steps_taken);
    let keep = cfg.per_chain();
    let mut samples = Vec::with_capacity(keep);
    let mut trace = cfg.trace_coord.map(|_| Vec::with_capacity(keep));
    for s in 0..keep {
        kernel_step(cfg, &mut chain, target, &mut rng)?;
        if let (Some(t), Some(c)) = (trace.as_mut(), cfg.trace_coord) {
            t.push(chain.z[c].to_f64_lossy());
        }
        samples.push(chain.z.clone());
        if s % COHERENCE_CHECK_EVERY == 0 {
            debug_assert!(chain.cache_is_coherent(target), "stale log-target cache");
        }
    }
    debug_assert!(chain.cache_is_coherent(target), "stale log-target cache");
    let kept_steps = chain.steps_taken - steps0;
    let diag = ChainDiagnostics {
        chain: id,
        acceptance: if kept_steps == 0 {
            0.0
        } else {
            (chain.accepts - acc0) as f64 / kept_steps as f64
        },
        burn_in_acceptance,
        final_step: chain.step.to_f64_lossy(),
        divergences: chain.divergences,
        steps: cfg.burn_in + keep,
        trace,
    };
    Ok((samples, diag))
}

/// Runs `P` independent chains and pools their post-burn-in samples.
///
/// Chain `p` starts from `inits[p]` (state and ancestor) and draws from the
/// stream `key.id(p)`, so the output does not depend on how chains are
/// scheduled across threads.
pub fn run_chains<T: Real>(
    cfg: &KernelConfig<T>,
    target: &Target<'_, T>,
    inits: &[(Vec<T>, usize)],
    key: StreamKey,
) -> Result<ChainOutput<T>> {
    cfg.validate()?;
    if inits.len() != cfg.chains {
        return Err(Error::Dimension {
            what: "chain initial states",
            expected: cfg.chains,
            got: inits.len(),
        });
    }
    let results: Vec<Result<(Vec<Vec<T>>, ChainDiagnostics)>> = inits
        .par_iter()
        .enumerate()
        .map(|(p, init)| run_one(cfg, target, init, p, key))
        .collect();
    let mut samples = Vec::with_capacity(cfg.per_chain() * cfg.chains);
    let mut diagnostics = Vec::with_capacity(cfg.chains);
    for r in results {
        let (s, d) = r?;
        samples.extend(s);
        diagnostics.push(d);
    }
    samples.truncate(cfg.n_analysis);
    Ok(ChainOutput { samples, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DiagonalCovariance, NoiseKind, NoiseModel, ObservationBatch, ObservationOperator, OperatorKind};
    use crate::rng::Stream;

    fn setup(noise: NoiseKind) -> (Vec<Vec<f64>>, DiagonalCovariance<f64>, ObservationBatch<f64>) {
        let d = 20;
        let means = vec![vec![0.0; d], vec![0.1; d]];
        let q = DiagonalCovariance::uniform(d, 1.0).unwrap();
        let idx: Vec<usize> = (0..d).step_by(2).collect();
        let n = idx.len();
        let b = ObservationBatch::new(
            0,
            ObservationOperator::new(OperatorKind::LinearSelect, idx, d).unwrap(),
            (0..n).map(|i| 0.3 * (i as f64).sin()).collect(),
            NoiseModel::new(noise, vec![0.5; n]).unwrap(),
        )
        .unwrap();
        (means, q, b)
    }

    #[test]
    fn pooling_follows_chain_count() {
        let (means, q, b) = setup(NoiseKind::Gaussian);
        let t = Target::new(&means, &q, &b).unwrap();
        let mut cfg = KernelConfig::new(KernelKind::Pcn, 100, 20, 10, 0.3);
        let inits: Vec<_> = (0..10).map(|p| (means[p % 2].clone(), p % 2)).collect();
        let out = run_chains(&cfg, &t, &inits, StreamKey::new(1, Stream::Chain)).unwrap();
        assert_eq!(out.samples.len(), 100);
        assert_eq!(out.diagnostics.len(), 10);
        assert!(out.diagnostics.iter().all(|d| d.steps == 30));

        cfg.chains = 3;
        let out = run_chains(&cfg, &t, &inits[..3], StreamKey::new(1, Stream::Chain)).unwrap();
        // ⌈100 / 3⌉ = 34 per chain, truncated to 100
        assert_eq!(out.samples.len(), 100);
        assert!(out.diagnostics.iter().all(|d| d.steps == 54));
    }

    #[test]
    fn single_chain_and_determinism() {
        let (means, q, b) = setup(NoiseKind::Cauchy);
        let t = Target::new(&means, &q, &b).unwrap();
        let mut cfg = KernelConfig::new(KernelKind::Hmc, 50, 30, 1, 0.5);
        cfg.trace_coord = Some(0);
        let inits = vec![(means[0].clone(), 0)];
        let key = StreamKey::new(5, Stream::Chain);
        let a = run_chains(&cfg, &t, &inits, key).unwrap();
        let b2 = run_chains(&cfg, &t, &inits, key).unwrap();
        assert_eq!(a.samples, b2.samples);
        assert_eq!(a.diagnostics, b2.diagnostics);
        assert_eq!(a.diagnostics[0].trace.as_ref().unwrap().len(), 50);
    }

    #[test]
    fn rejects_mismatched_inits_and_bad_config() {
        let (means, q, b) = setup(NoiseKind::Gaussian);
        let t = Target::new(&means, &q, &b).unwrap();
        let cfg = KernelConfig::new(KernelKind::Pcn, 10, 0, 2, 0.3);
        assert!(run_chains(&cfg, &t, &[(means[0].clone(), 0)], StreamKey::new(0, Stream::Chain)).is_err());
        let mut bad = cfg.clone();
        bad.target_accept = 1.0;
        assert!(bad.validate().is_err());
        bad = cfg.clone();
        bad.init_step = 1.2;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn adaptation_reaches_target_acceptance() {
        for noise in [NoiseKind::Gaussian, NoiseKind::Cauchy] {
            for (kind, alpha) in [(KernelKind::Pcn, 0.35), (KernelKind::Hmc, 0.65), (KernelKind::RwmGibbs, 0.35)] {
                let (means, q, b) = setup(noise);
                let t = Target::new(&means, &q, &b).unwrap();
                let mut cfg = KernelConfig::new(kind, 2000, 500, 1, 0.9);
                cfg.target_accept = alpha;
                let out = run_chains(&cfg, &t, &[(means[0].clone(), 0)], StreamKey::new(8, Stream::Chain)).unwrap();
                let acc = out.diagnostics[0].acceptance;
                assert!((acc - alpha).abs() <= 0.10, "{kind:?}/{noise:?}: {acc}");
            }
        }
    }
}
