//! The learned partition hierarchy of one class.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{sample_partitions, Partition, ProxyScorer, StructureConfig};
use crate::data::Dataset;
use crate::error::Result;
use crate::network::{ClassId, PartitionRecord};
use crate::spatial::Region;

/// Partitions kept per (region, depth); leaves map to an empty list.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PartitionTree {
    pub nodes: BTreeMap<(Region, u8), Vec<Partition>>,
}

impl PartitionTree {
    pub fn root(&self) -> Region {
        Region::FULL
    }

    pub fn partitions(&self, region: Region, depth: u8) -> &[Partition] {
        self.nodes.get(&(region, depth)).map_or(&[], Vec::as_slice)
    }

    /// Distinct leaf regions reachable from the root.
    pub fn leaves(&self) -> Vec<Region> {
        let mut out: Vec<Region> = self
            .nodes
            .iter()
            .filter(|(_, ps)| ps.is_empty())
            .map(|((r, _), _)| *r)
            .collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn max_depth(&self) -> u8 {
        self.nodes.iter().filter(|(_, ps)| !ps.is_empty()).map(|((_, d), _)| d + 1).max().unwrap_or(0)
    }

    pub fn to_records(&self) -> Vec<PartitionRecord> {
        self.nodes
            .iter()
            .flat_map(|(&(_, depth), ps)| {
                ps.iter().map(move |p| PartitionRecord { depth, parent: p.parent, children: p.children.clone() })
            })
            .collect()
    }

    /// Rebuilds a tree from its partition records; regions that never appear
    /// as a parent become leaves.
    pub fn from_records(records: &[PartitionRecord]) -> Self {
        let mut nodes: BTreeMap<(Region, u8), Vec<Partition>> = BTreeMap::new();
        nodes.entry((Region::FULL, 0)).or_default();
        for r in records {
            nodes
                .entry((r.parent, r.depth))
                .or_default()
                .push(Partition { parent: r.parent, children: r.children.clone() });
        }
        let children: Vec<(Region, u8)> = records
            .iter()
            .flat_map(|r| r.children.iter().map(move |c| (*c, r.depth + 1)))
            .collect();
        for key in children {
            nodes.entry(key).or_default();
        }
        PartitionTree { nodes }
    }
}

/// Seed for the candidate sampler of one tree node. It does not depend on
/// the class, so every class ranks the same candidates.
fn candidate_seed(seed: u64, region: Region, depth: u8) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for b in [region.x0, region.y0, region.x1, region.y1, depth] {
        h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3).rotate_left(17);
    }
    h
}

/// Algorithm: per region, sample candidates, score them with the proxy
/// classifier, keep the best `keep` (ties to the lower partition hash) and
/// recurse into their children until `depth` or until nothing fits.
pub fn learn_partition_tree(dataset: &Dataset, class: ClassId, config: &StructureConfig) -> Result<PartitionTree> {
    config.validate()?;
    let scorer = ProxyScorer::new(dataset, class, config.seed)?;
    let mut tree = PartitionTree::default();
    let mut frontier = vec![(Region::FULL, 0u8)];
    while let Some((region, depth)) = frontier.pop() {
        if tree.nodes.contains_key(&(region, depth)) {
            continue;
        }
        if depth >= config.depth {
            tree.nodes.insert((region, depth), Vec::new());
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(candidate_seed(config.seed, region, depth));
        let candidates = sample_partitions(region, config, &mut rng);
        let mut scored: Vec<(f64, u64, Partition)> = candidates
            .into_par_iter()
            .map(|p| (scorer.score(&p.children), p.hash_key(), p))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        scored.truncate(config.keep);
        let kept: Vec<Partition> = scored.into_iter().map(|(_, _, p)| p).collect();
        for p in &kept {
            for &c in &p.children {
                frontier.push((c, depth + 1));
            }
        }
        log::debug!("class {class} region {region} depth {depth}: kept {}", kept.len());
        tree.nodes.insert((region, depth), kept);
    }
    Ok(tree)
}

/// Scores of every candidate at the root, best first; used to inspect how
/// the planted partition ranks.
pub fn rank_root_candidates(dataset: &Dataset, class: ClassId, config: &StructureConfig) -> Result<Vec<(Partition, f64)>> {
    let scorer = ProxyScorer::new(dataset, class, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(candidate_seed(config.seed, Region::FULL, 0));
    let mut scored: Vec<(f64, u64, Partition)> = sample_partitions(Region::FULL, config, &mut rng)
        .into_par_iter()
        .map(|p| (scorer.score(&p.children), p.hash_key(), p))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().map(|(s, _, p)| (p, s)).collect())
}
