//! Guillotine strip partitions of grid regions.

use std::fmt;

use rand::Rng;

use super::StructureConfig;
use crate::spatial::Region;

/// An exact tiling of `parent` into strips, listed left-to-right or top-to-bottom.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    pub parent: Region,
    pub children: Vec<Region>,
}

impl Partition {
    pub fn identity(region: Region) -> Self {
        Partition { parent: region, children: vec![region] }
    }

    /// Children are pairwise disjoint, inside the parent and cover its area.
    pub fn is_tiling(&self) -> bool {
        let inside = self.children.iter().all(|c| self.parent.contains_region(c));
        let disjoint = self
            .children
            .iter()
            .enumerate()
            .all(|(i, a)| self.children[i + 1..].iter().all(|b| !a.intersects(b)));
        let area: u32 = self.children.iter().map(Region::cells).sum();
        inside && disjoint && area == self.parent.cells()
    }

    /// FNV-1a over the rectangle coordinates; the deterministic tie-break.
    pub fn hash_key(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for r in std::iter::once(&self.parent).chain(&self.children) {
            for b in [r.x0, r.y0, r.x1, r.y1] {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ->", self.parent)?;
        for c in &self.children {
            write!(f, " {c}")?;
        }
        Ok(())
    }
}

/// Every valid strip partition of `region` along one axis: `s − 1` interior
/// cuts on the grid with each strip holding at least `min_cells` cells.
fn strips(region: Region, s: usize, min_cells: u32, vertical_cuts: bool) -> Vec<Partition> {
    let (lo, hi, across) = if vertical_cuts {
        (region.x0, region.x1, u32::from(region.height()))
    } else {
        (region.y0, region.y1, u32::from(region.width()))
    };
    let min_len = min_cells.div_ceil(across).max(1) as u8;
    let mut out = Vec::new();
    let mut cuts = Vec::with_capacity(s + 1);
    cuts.push(lo);
    fn rec(cuts: &mut Vec<u8>, left: usize, hi: u8, min_len: u8, emit: &mut dyn FnMut(&[u8])) {
        let last = *cuts.last().expect("starts with lo");
        if left == 0 {
            if hi - last >= min_len {
                cuts.push(hi);
                emit(cuts);
                cuts.pop();
            }
            return;
        }
        let mut c = last + min_len;
        while c + min_len * left as u8 <= hi {
            cuts.push(c);
            rec(cuts, left - 1, hi, min_len, emit);
            cuts.pop();
            c += 1;
        }
    }
    if hi - lo < min_len * s as u8 {
        return out;
    }
    rec(&mut cuts, s - 1, hi, min_len, &mut |cs| {
        let children = cs
            .windows(2)
            .map(|w| {
                if vertical_cuts {
                    Region { x0: w[0], x1: w[1], ..region }
                } else {
                    Region { y0: w[0], y1: w[1], ..region }
                }
            })
            .collect();
        out.push(Partition { parent: region, children });
    });
    out
}

/// The whole candidate family of `region` under `config`.
pub fn partition_family(region: Region, config: &StructureConfig) -> Vec<Partition> {
    if config.s <= 1 {
        return vec![Partition::identity(region)];
    }
    let min_cells = config.min_cells();
    let mut all = strips(region, config.s, min_cells, true);
    all.extend(strips(region, config.s, min_cells, false));
    all
}

/// Up to `config.candidates` distinct strip partitions of `region`: the
/// orientation is drawn uniformly, then a uniform member of that orientation.
/// When the family is no larger than the request it is returned whole.
pub fn sample_partitions(region: Region, config: &StructureConfig, rng: &mut impl Rng) -> Vec<Partition> {
    if config.s <= 1 {
        return vec![Partition::identity(region)];
    }
    let min_cells = config.min_cells();
    let by_axis = [strips(region, config.s, min_cells, true), strips(region, config.s, min_cells, false)];
    let total = by_axis[0].len() + by_axis[1].len();
    if total <= config.candidates {
        return by_axis.concat();
    }
    let mut picked: Vec<Partition> = Vec::with_capacity(config.candidates);
    let mut seen = std::collections::HashSet::new();
    let axes: Vec<&Vec<Partition>> = by_axis.iter().filter(|a| !a.is_empty()).collect();
    while picked.len() < config.candidates {
        let axis = axes[rng.random_range(0..axes.len())];
        let p = &axis[rng.random_range(0..axis.len())];
        if seen.insert(p.clone()) {
            picked.push(p.clone());
        }
    }
    picked
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn family_sizes() {
        let cfg = StructureConfig { s: 2, ..StructureConfig::default() };
        assert_eq!(partition_family(Region::FULL, &cfg).len(), 38);
        let cfg = StructureConfig::default();
        assert_eq!(partition_family(Region::FULL, &cfg).len(), 342);
    }

    #[test]
    fn samples_are_distinct_tilings() {
        let cfg = StructureConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ps = sample_partitions(Region::FULL, &cfg, &mut rng);
        assert_eq!(ps.len(), cfg.candidates);
        let set: std::collections::HashSet<_> = ps.iter().collect();
        assert_eq!(set.len(), ps.len());
        for p in &ps {
            assert!(p.is_tiling(), "{p}");
            assert_eq!(p.children.len(), 3);
            assert!(p.children.iter().all(|c| c.cells() >= cfg.min_cells()));
        }
    }

    #[test]
    fn strips_of_twenty_thirty_fifty_are_in_the_family() {
        let cfg = StructureConfig::default();
        let want = Partition {
            parent: Region::FULL,
            children: vec![
                Region::new(0, 0, 20, 4).unwrap(),
                Region::new(0, 4, 20, 10).unwrap(),
                Region::new(0, 10, 20, 20).unwrap(),
            ],
        };
        assert!(partition_family(Region::FULL, &cfg).contains(&want));
    }

    #[test]
    fn single_strip_is_identity_and_tiny_regions_have_none() {
        let cfg = StructureConfig { s: 1, ..StructureConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_partitions(Region::FULL, &cfg, &mut rng), vec![Partition::identity(Region::FULL)]);
        let cfg = StructureConfig::default();
        assert!(sample_partitions(Region::new(0, 0, 4, 4).unwrap(), &cfg, &mut rng).is_empty());
    }
}
