use super::gc::{gc, taper_scales};
use super::partition::BlockPartition;
use crate::error::Result;
use crate::model::{GridSpec, ObservationBatch};
use crate::scalar::Real;

/// Observation positions bucketed by grid cell, so that halo lookups cost
/// time proportional to the halo rather than to the whole batch.
#[derive(Clone, Debug)]
pub struct ObsIndex {
    offsets: Vec<usize>,
    obs: Vec<usize>,
}

impl ObsIndex {
    pub fn new<T: Real>(spec: &GridSpec, batch: &ObservationBatch<T>) -> Self {
        let n = spec.n_cells();
        let cells = batch.cells(spec);
        let mut offsets = vec![0usize; n + 1];
        for &c in &cells {
            offsets[c + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut obs = vec![0; cells.len()];
        for (j, &c) in cells.iter().enumerate() {
            obs[fill[c]] = j;
            fill[c] += 1;
        }
        Self { offsets, obs }
    }

    /// Positions in the batch of the observations located at `cell`.
    #[inline]
    pub fn at(&self, cell: usize) -> &[usize] {
        &self.obs[self.offsets[cell]..self.offsets[cell + 1]]
    }

    pub fn has_obs(&self, cell: usize) -> bool {
        self.offsets[cell + 1] > self.offsets[cell]
    }
}

/// Block `G_i` extended to every cell within the taper support `2·r_h` of
/// its centroid, together with the tapered local observations.
#[derive(Clone, Debug, PartialEq)]
pub struct Halo<T> {
    pub block_id: usize,
    /// Ascending cell indices; always a superset of the block.
    pub halo_cells: Vec<usize>,
    pub radius: T,
    /// Positions in the cycle's batch of the kept observations, ascending.
    pub local_obs: Vec<usize>,
    pub tapered_scales: Vec<T>,
}

fn halo_cells<T: Real>(partition: &BlockPartition<T>, block_id: usize, r_h: T) -> Vec<usize> {
    let spec = &partition.spec;
    let (cx, cy) = partition.centroids[block_id];
    let reach = T::lit(2.0) * r_h;
    let (nx, ny) = (spec.nx as i64, spec.ny as i64);
    // scan window, capped at one period (periodic) or the grid (bounded)
    let span = |c: T, n: i64| {
        let lo = (c - reach).floor().to_f64_lossy().max(-1e12) as i64;
        let hi = (c + reach).ceil().to_f64_lossy().min(1e12) as i64;
        if spec.periodic {
            (lo, hi.min(lo + n - 1))
        } else {
            (lo.max(0), hi.min(n - 1))
        }
    };
    let (x0, x1) = span(cx, nx);
    let (y0, y1) = span(cy, ny);
    let mut cells = partition.blocks[block_id].clone();
    for iy in y0..=y1 {
        for ix in x0..=x1 {
            let (wx, wy) = if spec.periodic {
                (ix.rem_euclid(nx), iy.rem_euclid(ny))
            } else if ix < 0 || iy < 0 || ix >= nx || iy >= ny {
                continue;
            } else {
                (ix, iy)
            };
            let c = spec.cell(wx as usize, wy as usize);
            if spec.distance(spec.cell_coords::<T>(c), (cx, cy)) <= reach {
                cells.push(c);
            }
        }
    }
    cells.sort_unstable();
    cells.dedup();
    cells
}

/// Builds the halo of one block, using a prebuilt observation index.
pub fn build_halo<T: Real>(
    partition: &BlockPartition<T>,
    block_id: usize,
    batch: &ObservationBatch<T>,
    index: &ObsIndex,
    r_h: T,
) -> Result<Halo<T>> {
    let spec = &partition.spec;
    let cells = halo_cells(partition, block_id, r_h);
    let mut candidates: Vec<usize> = cells.iter().flat_map(|&c| index.at(c).iter().copied()).collect();
    candidates.sort_unstable();
    let locations: Vec<(T, T)> = candidates
        .iter()
        .map(|&j| spec.cell_coords(spec.var_cell(batch.operator.indices[j]).1))
        .collect();
    let scales: Vec<T> = candidates.iter().map(|&j| batch.noise.scales[j]).collect();
    let tapered = taper_scales(spec, &locations, partition.centroids[block_id], r_h, &scales)?;
    let mut local_obs = Vec::new();
    let mut tapered_scales = Vec::new();
    for ((&j, &s), &keep) in candidates.iter().zip(&tapered.scales).zip(&tapered.keep) {
        if keep {
            local_obs.push(j);
            tapered_scales.push(s);
        }
    }
    Ok(Halo {
        block_id,
        halo_cells: cells,
        radius: r_h,
        local_obs,
        tapered_scales,
    })
}

/// Blocks that take part in an assimilation cycle.
///
/// Without a radius, a block is observed when one of its own cells carries an
/// observation. With a radius, it is observed when at least one observation
/// survives tapering around its centroid.
pub fn observed_blocks<T: Real>(
    partition: &BlockPartition<T>,
    batch: &ObservationBatch<T>,
    r_h: Option<T>,
) -> Vec<usize> {
    let spec = &partition.spec;
    let index = ObsIndex::new(spec, batch);
    match r_h {
        None => {
            let mut hit = vec![false; partition.len()];
            for c in batch.cells(spec) {
                hit[partition.block_of_cell(c)] = true;
            }
            (0..partition.len()).filter(|&i| hit[i]).collect()
        }
        Some(r_h) => {
            let eps = T::lit(super::gc::GC_DROP_THRESHOLD);
            (0..partition.len())
                .filter(|&i| {
                    let centroid = partition.centroids[i];
                    halo_cells(partition, i, r_h).into_iter().any(|c| {
                        index.has_obs(c) && gc(spec.distance(spec.cell_coords(c), centroid) / r_h) >= eps
                    })
                })
                .collect()
        }
    }
}
