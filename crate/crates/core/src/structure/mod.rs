//! Structure learning: discriminative image partitions, the partition tree,
//! per-class network construction and cross-class sharing.

mod build;
mod partition;
mod proxy;
mod share;
mod tree;

pub use build::{build_class_network, build_flat_network, build_bag_network, modeled_pairs, qualifying_pairs};
pub use partition::{partition_family, sample_partitions, Partition};
pub use proxy::{score_partition, PartitionScore, ProxyScorer};
pub use share::{find_shared_structures, SharedGroup, SharingReport, SHARE_TOLERANCE};
pub use tree::{learn_partition_tree, rank_root_candidates, PartitionTree};

use crate::error::{Error, Result};
use crate::spatial::GRID;

#[derive(Debug, Clone, PartialEq)]
pub struct StructureConfig {
    /// Sub-images per partition.
    pub s: usize,
    /// Candidates sampled per region (M).
    pub candidates: usize,
    /// Partitions kept per region (m).
    pub keep: usize,
    /// Recursion depth (D).
    pub depth: u8,
    /// Smallest allowed sub-image, as a fraction of the image.
    pub min_region_area: f64,
    /// Fraction of positive images in which a part or pair must occur in a
    /// leaf region to be modeled there (τ).
    pub tau: f64,
    pub seed: u64,
}

impl Default for StructureConfig {
    fn default() -> Self {
        StructureConfig { s: 3, candidates: 50, keep: 3, depth: 2, min_region_area: 0.04, tau: 0.2, seed: 0 }
    }
}

impl StructureConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| Err(Error::Spec { field: field.into(), message });
        if self.s < 2 {
            return bad("s", format!("needs at least 2 sub-images, got {}", self.s));
        }
        if self.keep == 0 || self.keep >= self.candidates {
            return bad("keep", format!("need 0 < m < M, got m={} M={}", self.keep, self.candidates));
        }
        if self.depth == 0 {
            return bad("depth", "depth must be at least 1".into());
        }
        if !(self.min_region_area > 0.0 && self.min_region_area <= 1.0) {
            return bad("min_region_area", format!("{} is outside (0, 1]", self.min_region_area));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau", format!("{} is outside [0, 1]", self.tau));
        }
        Ok(())
    }

    /// Minimum sub-image size in grid cells.
    pub fn min_cells(&self) -> u32 {
        let total = f64::from(u32::from(GRID) * u32::from(GRID));
        ((self.min_region_area * total).ceil() as u32).max(1)
    }
}

/// Number of unordered pairs among `n` parts.
pub fn pair_count(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}
