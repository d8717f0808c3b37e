//! RMSE metrics and the rows of `metrics.csv`.

use serde::{Deserialize, Serialize};

use lsmcmc::{Error, ObservationBatch};

use crate::Result;

/// What an analysis mean is compared against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// The exact Kalman filter mean (linear-Gaussian runs only).
    VsKf,
    /// The nature run.
    VsTruth,
    /// The observed values, at observation locations, in observation space.
    VsObs,
}

impl Reference {
    pub fn as_str(&self) -> &'static str {
        match self {
            Reference::VsKf => "vs_kf",
            Reference::VsTruth => "vs_truth",
            Reference::VsObs => "vs_obs",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "vs_kf" => Some(Reference::VsKf),
            "vs_truth" => Some(Reference::VsTruth),
            "vs_obs" => Some(Reference::VsObs),
            _ => None,
        }
    }
}

/// One line of `metrics.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub cycle: usize,
    pub method: String,
    pub variable: String,
    pub reference: Reference,
    pub rmse: f64,
}

/// Root mean squared difference of two equally long vectors.
pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            what: "rmse operands",
            expected: a.len(),
            got: b.len(),
        }
        .into());
    }
    if a.is_empty() {
        return Err(Error::EmptyIndexSet.into());
    }
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((ss / a.len() as f64).sqrt())
}

/// RMSE restricted to `indices`.
pub fn rmse_at(a: &[f64], b: &[f64], indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::EmptyIndexSet.into());
    }
    if let Some(&i) = indices.iter().find(|&&i| i >= a.len() || i >= b.len()) {
        return Err(Error::Dimension {
            what: "rmse index",
            expected: a.len().min(b.len()),
            got: i,
        }
        .into());
    }
    let ss: f64 = indices.iter().map(|&i| (a[i] - b[i]) * (a[i] - b[i])).sum();
    Ok((ss / indices.len() as f64).sqrt())
}

/// RMSE between `O(mean)` and the observations, over the observations whose
/// state index passes `keep`. `None` if no observation qualifies.
pub fn rmse_vs_obs(mean: &[f64], batch: &ObservationBatch, keep: impl Fn(usize) -> bool) -> Option<f64> {
    let mut ss = 0.0;
    let mut n = 0usize;
    for (&i, &y) in batch.operator.indices.iter().zip(&batch.values) {
        if keep(i) {
            let r = y - batch.operator.map(mean[i]);
            ss += r * r;
            n += 1;
        }
    }
    (n > 0).then(|| (ss / n as f64).sqrt())
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_number(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}
