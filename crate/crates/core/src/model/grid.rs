use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Shape of the computational grid.
///
/// State vectors are laid out variable-major, then row-major over cells:
/// index = `var * nx * ny + iy * nx + ix`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub n_vars: usize,
    pub var_names: Vec<String>,
    /// Periodic grids wrap distances and halos; bounded grids clip them.
    pub periodic: bool,
}

impl GridSpec {
    pub fn new<S: Into<String>>(nx: usize, ny: usize, var_names: Vec<S>, periodic: bool) -> Result<Self> {
        let var_names: Vec<String> = var_names.into_iter().map(Into::into).collect();
        if nx == 0 || ny == 0 {
            return Err(Error::Config(format!("grid must be at least 1x1, got {nx}x{ny}")));
        }
        if var_names.is_empty() {
            return Err(Error::Config("grid needs at least one variable".into()));
        }
        Ok(Self {
            nx,
            ny,
            n_vars: var_names.len(),
            var_names,
            periodic,
        })
    }

    /// One unnamed variable on a bounded grid.
    pub fn scalar(nx: usize, ny: usize) -> Result<Self> {
        Self::new(nx, ny, vec!["z"], false)
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    /// State dimension `d`.
    pub fn dim(&self) -> usize {
        self.n_cells() * self.n_vars
    }

    #[inline]
    pub fn cell(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    #[inline]
    pub fn cell_xy(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx, cell / self.nx)
    }

    #[inline]
    pub fn index(&self, var: usize, ix: usize, iy: usize) -> usize {
        var * self.n_cells() + self.cell(ix, iy)
    }

    #[inline]
    pub fn index_of_cell(&self, var: usize, cell: usize) -> usize {
        var * self.n_cells() + cell
    }

    /// Splits a state index into `(var, cell)`.
    #[inline]
    pub fn var_cell(&self, index: usize) -> (usize, usize) {
        (index / self.n_cells(), index % self.n_cells())
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.var_names.iter().position(|v| v == name)
    }

    /// Euclidean distance between cell centres in grid units, minimum-image on
    /// periodic grids.
    pub fn distance<T: Real>(&self, a: (T, T), b: (T, T)) -> T {
        let mut dx = (a.0 - b.0).abs();
        let mut dy = (a.1 - b.1).abs();
        if self.periodic {
            let nx = T::from_usize(self.nx).unwrap();
            let ny = T::from_usize(self.ny).unwrap();
            dx = dx.min(nx - dx);
            dy = dy.min(ny - dy);
        }
        (dx * dx + dy * dy).sqrt()
    }

    pub fn cell_coords<T: Real>(&self, cell: usize) -> (T, T) {
        let (ix, iy) = self.cell_xy(cell);
        (T::from_usize(ix).unwrap(), T::from_usize(iy).unwrap())
    }

    /// All state indices belonging to the given cells, for every variable,
    /// in ascending order.
    pub fn indices_of_cells(&self, cells: &[usize]) -> Vec<usize> {
        let mut sorted = cells.to_vec();
        sorted.sort_unstable();
        let mut out = Vec::with_capacity(sorted.len() * self.n_vars);
        for var in 0..self.n_vars {
            out.extend(sorted.iter().map(|&c| self.index_of_cell(var, c)));
        }
        out
    }
}

/// A full state vector `Z_t` on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridState<T> {
    pub spec: Arc<GridSpec>,
    pub values: Vec<T>,
    pub time_index: usize,
}

impl<T: Real> GridState<T> {
    pub fn new(spec: Arc<GridSpec>, values: Vec<T>, time_index: usize) -> Result<Self> {
        if values.len() != spec.dim() {
            return Err(Error::Dimension {
                what: "grid state",
                expected: spec.dim(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "grid state",
                index,
            });
        }
        Ok(Self {
            spec,
            values,
            time_index,
        })
    }

    pub fn filled(spec: Arc<GridSpec>, value: T) -> Self {
        let values = vec![value; spec.dim()];
        Self {
            spec,
            values,
            time_index: 0,
        }
    }

    pub fn var_slice(&self, var: usize) -> &[T] {
        let n = self.spec.n_cells();
        &self.values[var * n..(var + 1) * n]
    }

    pub fn var_slice_mut(&mut self, var: usize) -> &mut [T] {
        let n = self.spec.n_cells();
        &mut self.values[var * n..(var + 1) * n]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_variable_major_then_row_major() {
        let spec = GridSpec::new(4, 3, vec!["h", "u"], false).unwrap();
        assert_eq!(spec.dim(), 24);
        assert_eq!(spec.index(0, 1, 0), 1);
        assert_eq!(spec.index(0, 0, 1), 4);
        assert_eq!(spec.index(1, 0, 0), 12);
        assert_eq!(spec.var_cell(17), (1, 5));
        assert_eq!(spec.cell_xy(5), (1, 1));
    }

    #[test]
    fn rejects_empty_grid() {
        assert!(GridSpec::new(0, 3, vec!["z"], false).is_err());
        assert!(GridSpec::new(3, 3, Vec::<String>::new(), false).is_err());
    }

    #[test]
    fn periodic_distance_uses_minimum_image() {
        let bounded = GridSpec::scalar(10, 10).unwrap();
        let periodic = GridSpec::new(10, 10, vec!["z"], true).unwrap();
        let a = (0.0f64, 0.0);
        let b = (9.0f64, 0.0);
        assert_eq!(bounded.distance(a, b), 9.0);
        assert_eq!(periodic.distance(a, b), 1.0);
    }

    #[test]
    fn state_rejects_wrong_length_and_nan() {
        let spec = Arc::new(GridSpec::scalar(2, 2).unwrap());
        assert!(GridState::new(spec.clone(), vec![0.0f64; 3], 0).is_err());
        assert!(GridState::new(spec.clone(), vec![0.0, f64::NAN, 0.0, 0.0], 0).is_err());
        assert!(GridState::new(spec, vec![0.0f64; 4], 0).is_ok());
    }
}
