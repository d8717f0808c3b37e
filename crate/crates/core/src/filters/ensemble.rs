use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use super::config::ReduceStrategy;
use crate::error::{Error, Result};
use crate::model::{GridSpec, GridState};
use crate::scalar::Real;

/// The `N_f` forecast / analysis members.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSet<T> {
    pub members: Vec<GridState<T>>,
}

impl<T: Real> EnsembleSet<T> {
    pub fn new(members: Vec<GridState<T>>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::Config("ensemble needs at least one member".into()));
        };
        if members.iter().any(|m| m.spec != first.spec) {
            return Err(Error::Config("ensemble members must share one grid".into()));
        }
        Ok(Self { members })
    }

    /// Members built from raw vectors that are known to match `spec`.
    pub(crate) fn from_values(spec: &Arc<GridSpec>, values: Vec<Vec<T>>, time_index: usize) -> Self {
        Self {
            members: values
                .into_iter()
                .map(|v| GridState {
                    spec: spec.clone(),
                    values: v,
                    time_index,
                })
                .collect(),
        }
    }

    pub fn n_forecast(&self) -> usize {
        self.members.len()
    }

    pub fn spec(&self) -> &Arc<GridSpec> {
        &self.members[0].spec
    }

    pub fn mean(&self) -> GridState<T> {
        let rows: Vec<&[T]> = self.members.iter().map(|m| m.values.as_slice()).collect();
        GridState {
            spec: self.spec().clone(),
            values: mean_of(&rows),
            time_index: self.members[0].time_index,
        }
    }
}

/// Coordinate-wise mean, summed in row order.
pub(crate) fn mean_of<T: Real, V: AsRef<[T]>>(rows: &[V]) -> Vec<T> {
    let n = rows[0].as_ref().len();
    let mut acc = vec![T::zero(); n];
    for r in rows {
        for (a, &x) in acc.iter_mut().zip(r.as_ref()) {
            *a = *a + x;
        }
    }
    let inv = T::one() / T::from_usize(rows.len()).unwrap();
    acc.iter_mut().for_each(|a| *a = *a * inv);
    acc
}

/// Coordinate-wise sample standard deviation (divisor `n − 1`, zero for one row).
pub(crate) fn std_of<T: Real, V: AsRef<[T]>>(rows: &[V], mean: &[T]) -> Vec<T> {
    let mut acc = vec![T::zero(); mean.len()];
    for r in rows {
        for ((a, &x), &m) in acc.iter_mut().zip(r.as_ref()).zip(mean) {
            *a = *a + (x - m) * (x - m);
        }
    }
    if rows.len() < 2 {
        return vec![T::zero(); mean.len()];
    }
    let inv = T::one() / T::from_usize(rows.len() - 1).unwrap();
    acc.into_iter().map(|a| (a * inv).sqrt()).collect()
}

/// Reduces `N_a` analysis samples to `N_f` members.
pub fn reduce_samples<T: Real, R: Rng + ?Sized>(
    samples: Vec<Vec<T>>,
    n_forecast: usize,
    strategy: ReduceStrategy,
    rng: &mut R,
) -> Result<Vec<Vec<T>>> {
    let n_a = samples.len();
    if n_forecast == 0 || !n_a.is_multiple_of(n_forecast) {
        return Err(Error::Config(format!(
            "cannot reduce {n_a} samples to {n_forecast} members: group sizes would be unequal"
        )));
    }
    let g = n_a / n_forecast;
    match strategy {
        ReduceStrategy::Thin => Ok(samples.into_iter().skip(g - 1).step_by(g).collect()),
        ReduceStrategy::GroupMean => {
            let mut order: Vec<usize> = (0..n_a).collect();
            order.shuffle(rng);
            if g == 1 {
                let mut slots: Vec<Option<Vec<T>>> = samples.into_iter().map(Some).collect();
                return Ok(order.iter().map(|&i| slots[i].take().unwrap()).collect());
            }
            Ok(order
                .chunks(g)
                .map(|group| {
                    let rows: Vec<&[T]> = group.iter().map(|&i| samples[i].as_slice()).collect();
                    mean_of(&rows)
                })
                .collect())
        }
    }
}

/// Relaxation to prior spread on the listed coordinates: perturbations about
/// the current mean are scaled by `1 + α (σ_f − σ_a) / σ_a`. Coordinates whose
/// analysis spread is zero are left alone.
pub(crate) fn relax_spread<T: Real>(members: &mut [Vec<T>], prior_std: &[T], alpha: T) {
    if alpha == T::zero() || members.len() < 2 {
        return;
    }
    let mean = mean_of(members);
    let post_std = std_of(members, &mean);
    for i in 0..mean.len() {
        let sa = post_std[i];
        if sa > T::zero() {
            let factor = T::one() + alpha * (prior_std[i] - sa) / sa;
            for m in members.iter_mut() {
                m[i] = mean[i] + factor * (m[i] - mean[i]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Stream, StreamKey};

    fn samples(n: usize, d: usize) -> Vec<Vec<f64>> {
        let mut rng = StreamKey::new(0, Stream::Test).rng();
        (0..n).map(|_| (0..d).map(|_| f64::std_normal(&mut rng)).collect()).collect()
    }

    #[test]
    fn equal_counts_give_a_permutation() {
        let s = samples(12, 3);
        let mut rng = StreamKey::new(1, Stream::Reduce).rng();
        let mut out = reduce_samples(s.clone(), 12, ReduceStrategy::GroupMean, &mut rng).unwrap();
        let mut sorted = s.clone();
        let key = |v: &Vec<f64>| v[0];
        sorted.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        out.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        assert_eq!(out, sorted);
    }

    #[test]
    fn grand_mean_is_preserved() {
        let s = samples(500, 4);
        let before = mean_of(&s);
        let mut rng = StreamKey::new(2, Stream::Reduce).rng();
        let out = reduce_samples(s, 50, ReduceStrategy::GroupMean, &mut rng).unwrap();
        assert_eq!(out.len(), 50);
        let after = mean_of(&out);
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn thinning_takes_every_gth_sample() {
        let s: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let mut rng = StreamKey::new(0, Stream::Reduce).rng();
        let out = reduce_samples(s, 5, ReduceStrategy::Thin, &mut rng).unwrap();
        assert_eq!(out, vec![vec![1.0], vec![3.0], vec![5.0], vec![7.0], vec![9.0]]);
    }

    #[test]
    fn unequal_groups_are_rejected() {
        let mut rng = StreamKey::new(0, Stream::Reduce).rng();
        assert!(reduce_samples(samples(10, 1), 3, ReduceStrategy::GroupMean, &mut rng).is_err());
    }

    #[test]
    fn rtps_restores_prior_spread_at_alpha_one() {
        let mut m: Vec<Vec<f64>> = vec![vec![0.9, 1.0], vec![1.1, 1.0]];
        let prior = [0.5, 0.3];
        relax_spread(&mut m, &prior, 1.0);
        let mean = mean_of(&m);
        let sd = std_of(&m, &mean);
        assert!((sd[0] - 0.5).abs() < 1e-12);
        assert!((mean[0] - 1.0).abs() < 1e-12);
        assert_eq!(sd[1], 0.0);
    }
}
