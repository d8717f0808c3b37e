use super::grid::{GridSpec, GridState};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Parameters of the single-layer rotating shallow-water testbed.
///
/// Variables are `h` (total fluid depth), `u` and `v` (velocities), in that
/// order. The grid must be doubly periodic.
#[derive(Clone, Debug, PartialEq)]
pub struct SweParams<T> {
    pub gravity: T,
    pub coriolis: T,
    pub dx: T,
    pub dy: T,
    /// Linear (Rayleigh) drag on velocities, 1/s.
    pub drag: T,
    /// Laplacian diffusion on all three fields, m²/s.
    pub viscosity: T,
}

impl<T: Real> Default for SweParams<T> {
    fn default() -> Self {
        Self {
            gravity: T::lit(9.81),
            coriolis: T::lit(1e-4),
            dx: T::lit(20_000.0),
            dy: T::lit(20_000.0),
            drag: T::lit(1e-4),
            viscosity: T::lit(4e4),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelKind<T> {
    /// `Φ(z) = a·z`, applied once per cycle regardless of `substeps`.
    LinearAr { a: T },
    ShallowWater(SweParams<T>),
}

/// The deterministic map `Φ` between observation times.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardModel<T> {
    pub kind: ModelKind<T>,
    pub substeps: usize,
    pub dt: T,
}

impl<T: Real> ForwardModel<T> {
    pub fn linear_ar(a: T) -> Self {
        Self {
            kind: ModelKind::LinearAr { a },
            substeps: 1,
            dt: T::one(),
        }
    }

    pub fn shallow_water(params: SweParams<T>, substeps: usize, dt: T) -> Self {
        Self {
            kind: ModelKind::ShallowWater(params),
            substeps,
            dt,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.kind, ModelKind::LinearAr { .. })
    }

    /// Checks the model against a grid before any integration happens.
    pub fn validate(&self, spec: &GridSpec) -> Result<()> {
        match &self.kind {
            ModelKind::LinearAr { a } => {
                if !a.is_finite() {
                    return Err(Error::Config("linear_ar coefficient must be finite".into()));
                }
            }
            ModelKind::ShallowWater(p) => {
                if spec.n_vars != 3 {
                    return Err(Error::Unsupported(format!(
                        "shallow water needs 3 variables (h, u, v), grid has {}",
                        spec.n_vars
                    )));
                }
                if !spec.periodic {
                    return Err(Error::Unsupported("shallow water requires a periodic grid".into()));
                }
                if self.substeps == 0 || !(self.dt > T::zero()) {
                    return Err(Error::Config("shallow water needs substeps >= 1 and dt > 0".into()));
                }
                if !(p.dx > T::zero() && p.dy > T::zero()) {
                    return Err(Error::Config("grid spacing must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

/// Applies `Φ` to a state, returning a new state one cycle later.
pub fn forward_propagate<T: Real>(state: &GridState<T>, model: &ForwardModel<T>) -> Result<GridState<T>> {
    let mut values = state.values.clone();
    propagate_values(&state.spec, &mut values, model)?;
    Ok(GridState {
        spec: state.spec.clone(),
        values,
        time_index: state.time_index + 1,
    })
}

/// In-place form of [`forward_propagate`] on a raw state vector.
pub fn propagate_values<T: Real>(spec: &GridSpec, values: &mut [T], model: &ForwardModel<T>) -> Result<()> {
    if values.len() != spec.dim() {
        return Err(Error::Dimension {
            what: "forward model input",
            expected: spec.dim(),
            got: values.len(),
        });
    }
    match &model.kind {
        ModelKind::LinearAr { a } => {
            for v in values.iter_mut() {
                *v = *a * *v;
            }
            check_finite(spec, values)
        }
        ModelKind::ShallowWater(p) => {
            model.validate(spec)?;
            let mut swe = Swe::new(spec, p);
            for _ in 0..model.substeps {
                swe.rk4_step(values, model.dt);
                check_finite(spec, values)?;
            }
            Ok(())
        }
    }
}

fn check_finite<T: Real>(spec: &GridSpec, values: &[T]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => {
            let (var, cell) = spec.var_cell(i);
            let (ix, iy) = spec.cell_xy(cell);
            Err(Error::Integration { var, ix, iy })
        }
    }
}

/// Total fluid volume `Σ h · dx · dy`.
pub fn swe_total_mass<T: Real>(state: &GridState<T>, params: &SweParams<T>) -> T {
    let h = state.var_slice(0);
    h.iter().copied().sum::<T>() * params.dx * params.dy
}

struct Swe<'a, T> {
    nx: usize,
    ny: usize,
    p: &'a SweParams<T>,
    k: [Vec<T>; 4],
    stage: Vec<T>,
}

impl<'a, T: Real> Swe<'a, T> {
    fn new(spec: &GridSpec, p: &'a SweParams<T>) -> Self {
        let d = spec.dim();
        Self {
            nx: spec.nx,
            ny: spec.ny,
            p,
            k: std::array::from_fn(|_| vec![T::zero(); d]),
            stage: vec![T::zero(); d],
        }
    }

    fn rk4_step(&mut self, z: &mut [T], dt: T) {
        let half = T::lit(0.5) * dt;
        let [k1, k2, k3, k4] = &mut self.k;
        tendency(self.nx, self.ny, self.p, z, k1);
        for ((s, &x), &k) in self.stage.iter_mut().zip(z.iter()).zip(k1.iter()) {
            *s = x + half * k;
        }
        tendency(self.nx, self.ny, self.p, &self.stage, k2);
        for ((s, &x), &k) in self.stage.iter_mut().zip(z.iter()).zip(k2.iter()) {
            *s = x + half * k;
        }
        tendency(self.nx, self.ny, self.p, &self.stage, k3);
        for ((s, &x), &k) in self.stage.iter_mut().zip(z.iter()).zip(k3.iter()) {
            *s = x + dt * k;
        }
        tendency(self.nx, self.ny, self.p, &self.stage, k4);
        let sixth = dt / T::lit(6.0);
        let two = T::lit(2.0);
        for i in 0..z.len() {
            z[i] = z[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
        }
    }
}

/// Centered finite-difference tendencies on a doubly periodic grid.
///
/// Continuity is in flux form so that the domain sum of `dh/dt` telescopes to
/// zero and volume is conserved up to rounding.
fn tendency<T: Real>(nx: usize, ny: usize, p: &SweParams<T>, z: &[T], out: &mut [T]) {
    let n = nx * ny;
    let (h, rest) = z.split_at(n);
    let (u, v) = rest.split_at(n);
    let (dh, rest) = out.split_at_mut(n);
    let (du, dv) = rest.split_at_mut(n);

    let two = T::lit(2.0);
    let inv_2dx = T::one() / (two * p.dx);
    let inv_2dy = T::one() / (two * p.dy);
    let inv_dx2 = T::one() / (p.dx * p.dx);
    let inv_dy2 = T::one() / (p.dy * p.dy);
    let (g, f, r, nu) = (p.gravity, p.coriolis, p.drag, p.viscosity);

    for iy in 0..ny {
        let n_ = (iy + 1) % ny;
        let s_ = (iy + ny - 1) % ny;
        for ix in 0..nx {
            let e_ = (ix + 1) % nx;
            let w_ = (ix + nx - 1) % nx;
            let c = iy * nx + ix;
            let e = iy * nx + e_;
            let w = iy * nx + w_;
            let nn = n_ * nx + ix;
            let s = s_ * nx + ix;

            let lap = |q: &[T]| {
                (q[e] - two * q[c] + q[w]) * inv_dx2 + (q[nn] - two * q[c] + q[s]) * inv_dy2
            };

            let flux_x = (h[e] * u[e] - h[w] * u[w]) * inv_2dx;
            let flux_y = (h[nn] * v[nn] - h[s] * v[s]) * inv_2dy;
            dh[c] = -(flux_x + flux_y) + nu * lap(h);

            let hx = (h[e] - h[w]) * inv_2dx;
            let hy = (h[nn] - h[s]) * inv_2dy;
            let ux = (u[e] - u[w]) * inv_2dx;
            let uy = (u[nn] - u[s]) * inv_2dy;
            let vx = (v[e] - v[w]) * inv_2dx;
            let vy = (v[nn] - v[s]) * inv_2dy;

            du[c] = -u[c] * ux - v[c] * uy + f * v[c] - g * hx - r * u[c] + nu * lap(u);
            dv[c] = -u[c] * vx - v[c] * vy - f * u[c] - g * hy - r * v[c] + nu * lap(v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn swe_spec(n: usize) -> Arc<GridSpec> {
        Arc::new(GridSpec::new(n, n, vec!["h", "u", "v"], true).unwrap())
    }

    #[test]
    fn linear_ar_scales_every_entry() {
        let spec = Arc::new(GridSpec::scalar(3, 2).unwrap());
        let state = GridState::filled(spec, 1.0f64);
        let out = forward_propagate(&state, &ForwardModel::linear_ar(0.25)).unwrap();
        assert!(out.values.iter().all(|&x| x == 0.25));
        assert_eq!(out.time_index, 1);
        assert!(state.values.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn linear_ar_identity() {
        let spec = Arc::new(GridSpec::scalar(2, 2).unwrap());
        let state = GridState::new(spec, vec![0.1f64, -3.0, 7.5, 1e-9], 4).unwrap();
        let out = forward_propagate(&state, &ForwardModel::linear_ar(1.0)).unwrap();
        assert_eq!(out.values, state.values);
    }

    #[test]
    fn rest_state_is_a_fixed_point() {
        let spec = swe_spec(4);
        let mut state = GridState::filled(spec.clone(), 0.0f64);
        state.var_slice_mut(0).fill(1000.0);
        let model = ForwardModel::shallow_water(SweParams::default(), 10, 60.0);
        let out = forward_propagate(&state, &model).unwrap();
        for (a, b) in out.values.iter().zip(&state.values) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    fn bump(n: usize) -> GridState<f64> {
        let spec = swe_spec(n);
        let mut state = GridState::filled(spec.clone(), 0.0f64);
        for iy in 0..n {
            for ix in 0..n {
                let dx = ix as f64 - n as f64 / 2.0;
                let dy = iy as f64 - n as f64 / 2.0;
                let i = spec.index(0, ix, iy);
                state.values[i] = 1000.0 + 5.0 * (-(dx * dx + dy * dy) / 8.0).exp();
                state.values[spec.index(1, ix, iy)] = 0.1 * (iy as f64 * 0.7).sin();
            }
        }
        state
    }

    #[test]
    fn mass_is_conserved() {
        let state = bump(16);
        let p = SweParams::default();
        let model = ForwardModel::shallow_water(p.clone(), 10, 60.0);
        let mut cur = state.clone();
        let m0 = swe_total_mass(&state, &p);
        for _ in 0..5 {
            cur = forward_propagate(&cur, &model).unwrap();
            let m = swe_total_mass(&cur, &p);
            assert!(((m - m0) / m0).abs() < 1e-10);
        }
        assert_ne!(cur.values, state.values);
    }

    #[test]
    fn deterministic() {
        let state = bump(8);
        let model = ForwardModel::shallow_water(SweParams::default(), 10, 60.0);
        let a = forward_propagate(&state, &model).unwrap();
        let b = forward_propagate(&state, &model).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn blow_up_names_a_cell() {
        let mut state = bump(8);
        state.values[3] = 1e200;
        let model = ForwardModel::shallow_water(SweParams::default(), 10, 60.0);
        assert!(matches!(forward_propagate(&state, &model), Err(Error::Integration { .. })));
    }

    #[test]
    fn swe_rejects_bounded_grid() {
        let spec = Arc::new(GridSpec::new(4, 4, vec!["h", "u", "v"], false).unwrap());
        let state = GridState::filled(spec, 1.0f64);
        let model = ForwardModel::shallow_water(SweParams::default(), 1, 60.0);
        assert!(forward_propagate(&state, &model).is_err());
    }

    #[test]
    fn single_precision_runs() {
        let spec = swe_spec(4);
        let mut state = GridState::filled(spec, 0.0f32);
        state.var_slice_mut(0).fill(100.0);
        let model = ForwardModel::shallow_water(SweParams::<f32>::default(), 2, 60.0);
        let out = forward_propagate(&state, &model).unwrap();
        assert!(out.values.iter().all(|v| v.is_finite()));
    }
}
