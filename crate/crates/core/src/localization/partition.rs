use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::GridSpec;
use crate::scalar::Real;

/// Rectangular tiling of the grid into `Γ` disjoint blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockPartition<T> {
    pub spec: Arc<GridSpec>,
    pub gamma: usize,
    /// Blocks across x and y (`blocks_x * blocks_y == gamma`).
    pub blocks_x: usize,
    pub blocks_y: usize,
    /// Cell indices of each block, ascending.
    pub blocks: Vec<Vec<usize>>,
    pub centroids: Vec<(T, T)>,
    block_of_cell: Vec<usize>,
}

impl<T: Real> BlockPartition<T> {
    #[inline]
    pub fn block_of_cell(&self, cell: usize) -> usize {
        self.block_of_cell[cell]
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

fn factor_pairs(gamma: usize, nx: usize, ny: usize) -> Vec<(usize, usize)> {
    (1..=gamma.min(nx))
        .filter(|a| gamma.is_multiple_of(*a) && gamma / a <= ny)
        .map(|a| (a, gamma / a))
        .collect()
}

/// Splits the grid into `gamma` near-equal rectangles.
///
/// Among factorizations `a × b = Γ` (a blocks across x, b across y), those
/// that divide the grid exactly are preferred, then the one with the most
/// nearly square cells, then the smaller `a`.
pub fn build_partition<T: Real>(spec: Arc<GridSpec>, gamma: usize) -> Result<BlockPartition<T>> {
    let (nx, ny) = (spec.nx, spec.ny);
    let pairs = factor_pairs(gamma, nx, ny);
    let score = |&(a, b): &(usize, usize)| {
        let exact = nx % a == 0 && ny % b == 0;
        let aspect = (nx as f64 / a as f64 - ny as f64 / b as f64).abs();
        (!exact, aspect, a)
    };
    let Some(&(a, b)) = pairs
        .iter()
        .min_by(|p, q| score(p).partial_cmp(&score(q)).expect("finite aspect"))
    else {
        return Err(partition_error(gamma, nx, ny));
    };

    let xb: Vec<usize> = (0..=a).map(|i| i * nx / a).collect();
    let yb: Vec<usize> = (0..=b).map(|j| j * ny / b).collect();
    let mut blocks = Vec::with_capacity(gamma);
    let mut centroids = Vec::with_capacity(gamma);
    let mut block_of_cell = vec![0; spec.n_cells()];
    for j in 0..b {
        for i in 0..a {
            let id = blocks.len();
            let mut cells = Vec::with_capacity((xb[i + 1] - xb[i]) * (yb[j + 1] - yb[j]));
            for iy in yb[j]..yb[j + 1] {
                for ix in xb[i]..xb[i + 1] {
                    let c = spec.cell(ix, iy);
                    block_of_cell[c] = id;
                    cells.push(c);
                }
            }
            // mean of a contiguous index range is its midpoint
            let cx = T::from_usize(xb[i] + xb[i + 1] - 1).unwrap() / T::lit(2.0);
            let cy = T::from_usize(yb[j] + yb[j + 1] - 1).unwrap() / T::lit(2.0);
            centroids.push((cx, cy));
            blocks.push(cells);
        }
    }
    Ok(BlockPartition {
        spec,
        gamma,
        blocks_x: a,
        blocks_y: b,
        blocks,
        centroids,
        block_of_cell,
    })
}

fn partition_error(gamma: usize, nx: usize, ny: usize) -> Error {
    let divisors: Vec<String> = (1..=gamma.max(1))
        .filter(|a| gamma > 0 && gamma.is_multiple_of(*a))
        .map(|a| format!("{a}x{}", gamma / a))
        .collect();
    let mut nearby = Vec::new();
    for delta in 1..=gamma.max(16) {
        for g in [gamma.checked_sub(delta), gamma.checked_add(delta)].into_iter().flatten() {
            if g > 0 && !factor_pairs(g, nx, ny).is_empty() && nearby.len() < 4 {
                nearby.push(g.to_string());
            }
        }
        if nearby.len() >= 4 {
            break;
        }
    }
    Error::Partition {
        gamma,
        nx,
        ny,
        detail: format!(
            "factorizations {} all exceed the grid; admissible block counts nearby: {}",
            if divisors.is_empty() { "(none)".into() } else { divisors.join(", ") },
            nearby.join(", ")
        ),
    }
}
