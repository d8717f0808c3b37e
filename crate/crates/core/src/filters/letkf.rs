use nalgebra::DMatrix;
use rayon::prelude::*;

use super::config::Inflation;
use super::ensemble::{mean_of, std_of};
use crate::error::{Error, Result};
use crate::linalg::ensemble_transform;
use crate::localization::{gc_value, ObsIndex, GC_DROP_THRESHOLD};
use crate::model::{GridSpec, ObservationBatch};
use crate::scalar::Real;

/// Observation-space ensemble mean `ȳ` and perturbations `Y_b`
/// (one row per member, one column per observation).
pub fn obs_space_perturbations<T: Real>(members: &[Vec<T>], batch: &ObservationBatch<T>) -> (Vec<T>, Vec<Vec<T>>) {
    let hx: Vec<Vec<T>> = members.iter().map(|m| batch.operator.apply(m)).collect();
    let mean = if batch.is_empty() { Vec::new() } else { mean_of(&hx) };
    let pert = hx
        .into_iter()
        .map(|row| row.iter().zip(&mean).map(|(&a, &b)| a - b).collect())
        .collect();
    (mean, pert)
}

/// Observations within `2·h_loc` of a cell with their Gaspari–Cohn weights.
fn local_obs(spec: &GridSpec, index: &ObsIndex, cell: usize, h_loc: f64) -> Vec<(usize, f64)> {
    let (cx, cy) = spec.cell_xy(cell);
    let reach = 2.0 * h_loc;
    let r = reach.ceil().min(1e12) as i64;
    let (nx, ny) = (spec.nx as i64, spec.ny as i64);
    // at most one period per axis
    let (rx, ry) = if spec.periodic { (r.min(nx / 2), r.min(ny / 2)) } else { (r.min(nx), r.min(ny)) };
    let mut out = Vec::new();
    for dy in -ry..=ry {
        for dx in -rx..=rx {
            let (mut x, mut y) = (cx as i64 + dx, cy as i64 + dy);
            if spec.periodic {
                x = x.rem_euclid(nx);
                y = y.rem_euclid(ny);
            } else if x < 0 || y < 0 || x >= nx || y >= ny {
                continue;
            }
            let c = spec.cell(x as usize, y as usize);
            if !index.has_obs(c) {
                continue;
            }
            let dist = spec.distance::<f64>(spec.cell_coords(c), spec.cell_coords(cell));
            let w = gc_value(dist / h_loc).unwrap_or(0.0);
            if w >= GC_DROP_THRESHOLD {
                out.extend(index.at(c).iter().map(|&o| (o, w)));
            }
        }
    }
    // periodic wrap on small grids can visit a cell twice
    out.sort_unstable_by_key(|&(o, _)| o);
    out.dedup_by_key(|&mut (o, _)| o);
    out
}

/// LETKF analysis of a forecast ensemble, solved independently per grid cell.
///
/// Observation error variances are divided by the Gaspari–Cohn weight of the
/// distance to the analysed cell; `Multiplicative(ρ)` inflates the forecast
/// covariance inside the transform, `Rtpp` / `Rtps` relax the analysis
/// perturbations back toward the forecast ones afterwards.
pub fn letkf_analysis<T: Real>(
    spec: &GridSpec,
    forecast: &[Vec<T>],
    batch: &ObservationBatch<T>,
    h_loc: T,
    inflation: Inflation<T>,
    cycle: usize,
) -> Result<Vec<Vec<T>>> {
    let k = forecast.len();
    if k < 2 {
        return Err(Error::Config("LETKF needs at least 2 members".into()));
    }
    batch.validate_for(spec.dim())?;
    let rho = match inflation {
        Inflation::Multiplicative(a) => a.to_f64_lossy(),
        _ => 1.0,
    };
    let n_cells = spec.n_cells();
    let mean = mean_of(forecast);
    let (y_mean, y_pert) = obs_space_perturbations(forecast, batch);
    let innovation: Vec<f64> = batch
        .values
        .iter()
        .zip(&y_mean)
        .map(|(&y, &m)| (y - m).to_f64_lossy())
        .collect();
    let r_var: Vec<f64> = batch.noise.scales.iter().map(|&s| (s * s).to_f64_lossy()).collect();
    let index = ObsIndex::new(spec, batch);
    let h = h_loc.to_f64_lossy();
    let sqrt_rho = rho.sqrt();

    // analysis values of every member at every variable of one cell
    let per_cell: Vec<Result<Vec<T>>> = (0..n_cells)
        .into_par_iter()
        .map(|cell| {
            let coords: Vec<usize> = (0..spec.n_vars).map(|v| spec.index_of_cell(v, cell)).collect();
            let local = local_obs(spec, &index, cell, h);
            let mut out = Vec::with_capacity(coords.len() * k);
            if local.is_empty() {
                let s = T::lit(sqrt_rho);
                for &i in &coords {
                    out.extend(forecast.iter().map(|m| mean[i] + s * (m[i] - mean[i])));
                }
                return Ok(out);
            }
            let y = DMatrix::from_fn(local.len(), k, |r, c| y_pert[c][local[r].0].to_f64_lossy());
            let r_inv: Vec<f64> = local.iter().map(|&(o, w)| w / r_var[o]).collect();
            let d: Vec<f64> = local.iter().map(|&(o, _)| innovation[o]).collect();
            let (w_mean, w) = ensemble_transform(&y, &r_inv, &d, rho).ok_or(Error::SingularTransform { cycle, cell })?;
            for &i in &coords {
                let x: Vec<f64> = forecast.iter().map(|m| (m[i] - mean[i]).to_f64_lossy()).collect();
                let base = mean[i].to_f64_lossy() + x.iter().zip(w_mean.iter()).map(|(a, b)| a * b).sum::<f64>();
                for col in 0..k {
                    let mut acc = base;
                    for (row, &xr) in x.iter().enumerate() {
                        acc += xr * w[(row, col)];
                    }
                    out.push(T::lit(acc));
                }
            }
            Ok(out)
        })
        .collect();

    let mut analysis = vec![vec![T::zero(); spec.dim()]; k];
    for (cell, vals) in per_cell.into_iter().enumerate() {
        let vals = vals?;
        for v in 0..spec.n_vars {
            let i = spec.index_of_cell(v, cell);
            for (m, member) in analysis.iter_mut().enumerate() {
                member[i] = vals[v * k + m];
            }
        }
    }

    match inflation {
        Inflation::Rtpp(alpha) => {
            let a_mean = mean_of(&analysis);
            for (a, f) in analysis.iter_mut().zip(forecast) {
                for i in 0..a.len() {
                    let pa = a[i] - a_mean[i];
                    let pf = f[i] - mean[i];
                    a[i] = a_mean[i] + (T::one() - alpha) * pa + alpha * pf;
                }
            }
        }
        Inflation::Rtps(alpha) => {
            let prior_std = std_of(forecast, &mean);
            super::ensemble::relax_spread(&mut analysis, &prior_std, alpha);
        }
        _ => {}
    }
    if let Some(i) = analysis.iter().find_map(|a| a.iter().position(|v| !v.is_finite())) {
        return Err(Error::SingularTransform {
            cycle,
            cell: spec.var_cell(i).1,
        });
    }
    Ok(analysis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NoiseKind, NoiseModel, ObservationOperator, OperatorKind};
    use crate::rng::{Stream, StreamKey};

    #[test]
    fn scalar_large_ensemble_matches_kalman() {
        // prior N(0.2, 0.04), y = 0.5 with σ = 0.2 → posterior N(0.35, 0.02)
        let spec = GridSpec::scalar(1, 1).unwrap();
        let k = 1000;
        let mut rng = StreamKey::new(3, Stream::Test).rng();
        let mut f: Vec<Vec<f64>> = (0..k).map(|_| vec![f64::std_normal(&mut rng)]).collect();
        // standardise so the ensemble has exactly the prior moments
        let m = mean_of(&f)[0];
        let s = std_of(&f, &[m])[0];
        f.iter_mut().for_each(|x| x[0] = 0.2 + 0.2 * (x[0] - m) / s);
        let b = ObservationBatch::new(
            0,
            ObservationOperator::new(OperatorKind::LinearSelect, vec![0], 1).unwrap(),
            vec![0.5],
            NoiseModel::new(NoiseKind::Gaussian, vec![0.2]).unwrap(),
        )
        .unwrap();
        let a = letkf_analysis(&spec, &f, &b, 1.0, Inflation::None, 1).unwrap();
        let am = mean_of(&a)[0];
        let av = std_of(&a, &[am])[0].powi(2);
        assert!((am - 0.35).abs() / 0.35 < 0.05, "{am}");
        assert!((av - 0.02).abs() / 0.02 < 0.05, "{av}");
    }

    #[test]
    fn unobserved_cells_only_get_inflated() {
        let spec = GridSpec::scalar(10, 1).unwrap();
        let f: Vec<Vec<f64>> = vec![vec![1.0; 10], vec![2.0; 10], vec![3.0; 10]];
        let b = ObservationBatch::new(
            0,
            ObservationOperator::new(OperatorKind::LinearSelect, vec![0], 10).unwrap(),
            vec![2.5],
            NoiseModel::new(NoiseKind::Gaussian, vec![0.5]).unwrap(),
        )
        .unwrap();
        let a = letkf_analysis(&spec, &f, &b, 1.0, Inflation::Multiplicative(1.21), 1).unwrap();
        // cell 9 is far outside 2·h_loc
        assert!((a[0][9] - (2.0 - 1.1)).abs() < 1e-12);
        assert!((a[2][9] - (2.0 + 1.1)).abs() < 1e-12);
        // cell 0 moved toward the observation
        assert!(mean_of(&a)[0] > 2.0);
    }

    #[test]
    fn saturated_arctan_gives_negligible_update() {
        let spec = GridSpec::scalar(5, 5).unwrap();
        let mut rng = StreamKey::new(4, Stream::Test).rng();
        let f: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..25).map(|_| 1000.0 + 0.5 * f64::std_normal(&mut rng)).collect())
            .collect();
        let idx: Vec<usize> = (0..25).step_by(3).collect();
        let n = idx.len();
        let b = ObservationBatch::new(
            0,
            ObservationOperator::new(OperatorKind::ArctanSelect, idx, 25).unwrap(),
            vec![1000f64.atan() + 0.05; n],
            NoiseModel::new(NoiseKind::Gaussian, vec![0.05; n]).unwrap(),
        )
        .unwrap();
        let (_, y) = obs_space_perturbations(&f, &b);
        let m = mean_of(&f);
        let x_norm: f64 = f.iter().flat_map(|r| r.iter().zip(&m).map(|(a, b)| (a - b).powi(2))).sum::<f64>().sqrt();
        let y_norm: f64 = y.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        assert!(y_norm < 1e-6 * x_norm);
        let a = letkf_analysis(&spec, &f, &b, 2.0, Inflation::None, 1).unwrap();
        let inc: f64 = mean_of(&a).iter().zip(&m).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let f_norm: f64 = m.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(inc < 1e-8 * f_norm);
    }
}
