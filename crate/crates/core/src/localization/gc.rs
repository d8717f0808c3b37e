use crate::error::{Error, Result};
use crate::model::GridSpec;
use crate::scalar::Real;

/// Observations whose taper weight falls below this are dropped rather than
/// given an almost-infinite noise scale.
pub const GC_DROP_THRESHOLD: f64 = 1e-8;

/// Gaspari–Cohn fifth-order piecewise rational function, supported on `[0, 2]`.
pub fn gc_value<T: Real>(r: T) -> Result<T> {
    if r < T::zero() || r.is_nan() {
        return Err(Error::NegativeDistance(r.to_f64_lossy()));
    }
    Ok(gc(r))
}

pub(crate) fn gc<T: Real>(r: T) -> T {
    let c = T::lit;
    if r <= T::one() {
        let r2 = r * r;
        let r3 = r2 * r;
        T::one() - c(5.0 / 3.0) * r2 + c(5.0 / 8.0) * r3 + c(0.5) * r2 * r2 - c(0.25) * r3 * r2
    } else if r < c(2.0) {
        let r2 = r * r;
        let r3 = r2 * r;
        let v = c(4.0) - c(5.0) * r + c(5.0 / 3.0) * r2 + c(5.0 / 8.0) * r3 - c(0.5) * r2 * r2
            + c(1.0 / 12.0) * r3 * r2
            - c(2.0) / (c(3.0) * r);
        // the r = 2 end evaluates to a rounding-level residue
        v.max(T::zero())
    } else {
        T::zero()
    }
}

/// Result of tapering a set of observation scales around a centroid.
#[derive(Clone, Debug, PartialEq)]
pub struct Tapered<T> {
    /// `σ / √S(dist / r_h)`; `+inf` where the observation was dropped.
    pub scales: Vec<T>,
    pub keep: Vec<bool>,
}

/// Inflates observation noise scales by the Gaspari–Cohn weight of their
/// distance to `centroid`.
pub fn taper_scales<T: Real>(
    spec: &GridSpec,
    locations: &[(T, T)],
    centroid: (T, T),
    r_h: T,
    scales: &[T],
) -> Result<Tapered<T>> {
    if !(r_h > T::zero()) {
        return Err(Error::Config(format!("halo radius must be positive, got {r_h}")));
    }
    if locations.len() != scales.len() {
        return Err(Error::Dimension {
            what: "taper scales",
            expected: locations.len(),
            got: scales.len(),
        });
    }
    let eps = T::lit(GC_DROP_THRESHOLD);
    let mut out = Tapered {
        scales: Vec::with_capacity(scales.len()),
        keep: Vec::with_capacity(scales.len()),
    };
    for (&loc, &s) in locations.iter().zip(scales) {
        let w = gc(spec.distance(loc, centroid) / r_h);
        if w < eps {
            out.scales.push(T::infinity());
            out.keep.push(false);
        } else {
            out.scales.push(s / w.sqrt());
            out.keep.push(true);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        assert_eq!(gc_value(0.0f64).unwrap(), 1.0);
        assert_eq!(gc_value(2.0f64).unwrap(), 0.0);
        assert_eq!(gc_value(2.5f64).unwrap(), 0.0);
        assert!(gc_value(-0.1f64).is_err());
    }

    #[test]
    fn branches_agree_at_one_and_two() {
        let b1 = |r: f64| 1.0 - 5.0 / 3.0 * r.powi(2) + 5.0 / 8.0 * r.powi(3) + 0.5 * r.powi(4) - 0.25 * r.powi(5);
        let b2 = |r: f64| {
            4.0 - 5.0 * r + 5.0 / 3.0 * r.powi(2) + 5.0 / 8.0 * r.powi(3) - 0.5 * r.powi(4) + r.powi(5) / 12.0
                - 2.0 / (3.0 * r)
        };
        assert!((b1(1.0) - 5.0 / 24.0).abs() < 1e-12);
        assert!((b2(1.0) - 5.0 / 24.0).abs() < 1e-12);
        assert!(b2(2.0).abs() < 1e-12);
        assert!((gc(1.0f64) - 5.0 / 24.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_on_support() {
        let n = 10_000;
        let mut prev = gc(0.0f64);
        for i in 1..=n {
            let v = gc(2.0 * i as f64 / n as f64);
            assert!(v <= prev, "increase at step {i}");
            prev = v;
        }
    }

    #[test]
    fn tapering_examples() {
        let spec = GridSpec::scalar(10, 10).unwrap();
        let c = (4.0f64, 4.0);
        let t = taper_scales(&spec, &[(4.0, 4.0), (5.0, 4.0), (6.0, 4.0), (9.0, 9.0)], c, 1.0, &[0.1; 4]).unwrap();
        assert_eq!(t.scales[0], 0.1);
        assert!((t.scales[1] - 0.1 / (5.0f64 / 24.0).sqrt()).abs() < 1e-12);
        assert!((t.scales[1] - 0.21909).abs() < 1e-5);
        assert_eq!(t.keep, vec![true, true, false, false]);
        assert!(t.scales[1] >= 0.1);
    }
}
