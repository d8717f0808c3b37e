//! Diagonal satellite-like swaths.
//!
//! A cell `(ix, iy)` lies on diagonal `ix + iy`. A band of `width` diagonals
//! starts at an offset that advances by `(nx + ny) / period` diagonals per
//! cycle and wraps modulo `nx + ny`, so the pattern repeats every `period`
//! cycles. With `bands > 1` the band is repeated at equal spacing.

use lsmcmc::GridSpec;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwathPattern {
    pub width: usize,
    pub period: usize,
    pub bands: usize,
}

impl Default for SwathPattern {
    fn default() -> Self {
        Self {
            width: 14,
            period: 20,
            bands: 2,
        }
    }
}

impl SwathPattern {
    fn observed(&self, l: usize, diag: usize, offset: usize) -> bool {
        (0..self.bands).any(|b| {
            let start = offset + b * l / self.bands;
            (diag + l - start % l) % l < self.width
        })
    }
}

/// Sorted cell indices observed at `cycle`.
pub fn generate_swath(spec: &GridSpec, pattern: &SwathPattern, cycle: usize) -> Vec<usize> {
    let l = spec.nx + spec.ny;
    let period = pattern.period.max(1);
    let offset = (cycle % period) * l / period;
    let mut cells = Vec::new();
    for iy in 0..spec.ny {
        for ix in 0..spec.nx {
            if pattern.observed(l, ix + iy, offset) {
                cells.push(spec.cell(ix, iy));
            }
        }
    }
    cells
}
