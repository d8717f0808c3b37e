//! Block partitions, halos and Gaspari–Cohn observation-noise tapering.

mod gc;
mod halo;
mod partition;

pub use gc::{gc_value, taper_scales, Tapered, GC_DROP_THRESHOLD};
pub use halo::{build_halo, observed_blocks, Halo, ObsIndex};
pub use partition::{build_partition, BlockPartition};
