//! Turning a partition tree into a class network.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{PartitionTree, StructureConfig};
use crate::data::{Dataset, ImageRecord};
use crate::error::Result;
use crate::network::{ClassId, Network, NetworkBuilder, NodeId, Polarity, VariableId};
use crate::spatial::{build_pair_gadget, PairKey, PartId, Region};

/// Parts seen in `region` in at least a `tau` fraction of the images, and the
/// pairs of such parts that co-occur there at least as often.
pub fn qualifying_pairs<'a>(
    images: impl IntoIterator<Item = &'a ImageRecord>,
    region: Region,
    tau: f64,
) -> (Vec<PartId>, Vec<PairKey>) {
    let mut n = 0usize;
    let mut part_counts: BTreeMap<PartId, usize> = BTreeMap::new();
    let mut pair_counts: BTreeMap<PairKey, usize> = BTreeMap::new();
    for img in images {
        n += 1;
        let (w, h) = (f64::from(img.width), f64::from(img.height));
        let present: BTreeSet<PartId> =
            img.detections.iter().filter(|d| region.contains(d.location, w, h)).map(|d| d.part).collect();
        let present: Vec<PartId> = present.into_iter().collect();
        for (i, &p) in present.iter().enumerate() {
            *part_counts.entry(p).or_insert(0) += 1;
            for &q in &present[i + 1..] {
                *pair_counts.entry(PairKey::new(p, q).expect("distinct")).or_insert(0) += 1;
            }
        }
    }
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let passes = |c: usize| c > 0 && c as f64 >= tau * n as f64;
    let pairs: Vec<PairKey> = pair_counts.into_iter().filter(|&(_, c)| passes(c)).map(|(k, _)| k).collect();
    let mut parts: BTreeSet<PartId> = part_counts.into_iter().filter(|&(_, c)| passes(c)).map(|(p, _)| p).collect();
    for k in &pairs {
        parts.insert(k.a());
        parts.insert(k.b());
    }
    (parts.into_iter().collect(), pairs)
}

type Scoped = (NodeId, BTreeSet<VariableId>);

struct Builder {
    b: NetworkBuilder,
    leaf_memo: HashMap<Region, Scoped>,
    inner_memo: HashMap<(Region, u8), Scoped>,
}

impl Builder {
    fn new() -> Self {
        Builder { b: NetworkBuilder::new(), leaf_memo: HashMap::new(), inner_memo: HashMap::new() }
    }

    /// Sum(x_p, x̄_p) for one part in one region.
    fn bernoulli(&mut self, part: PartId, region: Region) -> NodeId {
        let pos = self.b.part_leaf(part, region, Polarity::Positive);
        let neg = self.b.part_leaf(part, region, Polarity::Negative);
        self.b.sum(&[(pos, 0.5), (neg, 0.5)])
    }

    /// Leaf region: one child per pair (its gadget times Bernoulli sums of the
    /// other parts and pads for the other pairs) plus a child of Bernoulli sums
    /// alone, for images in which no modeled pair is complete.
    fn leaf(&mut self, region: Region, parts: &[PartId], pairs: &[PairKey]) -> Scoped {
        if let Some(s) = self.leaf_memo.get(&region) {
            return s.clone();
        }
        let mut scope: BTreeSet<VariableId> = parts.iter().map(|&part| VariableId::Part { part, region }).collect();
        scope.extend(pairs.iter().map(|&pair| VariableId::Pair { pair, region }));
        let node = if parts.is_empty() {
            log::debug!("leaf region {region} has no qualifying parts; modeled as a constant");
            self.b.constant()
        } else {
            let bern: BTreeMap<PartId, NodeId> = parts.iter().map(|&p| (p, self.bernoulli(p, region))).collect();
            let pads: BTreeMap<PairKey, NodeId> = pairs
                .iter()
                .map(|&pair| (pair, self.b.marginal(VariableId::Pair { pair, region })))
                .collect();
            let mut children = Vec::new();
            for &pair in pairs {
                let g = build_pair_gadget(&mut self.b, pair, region);
                let mut kids = vec![g.sum];
                kids.extend(bern.iter().filter(|(p, _)| !pair.contains(**p)).map(|(_, &n)| n));
                kids.extend(pads.iter().filter(|(k, _)| **k != pair).map(|(_, &n)| n));
                children.push(self.b.product(&kids));
            }
            let mut fallback: Vec<NodeId> = bern.values().copied().collect();
            fallback.extend(pads.values().copied());
            children.push(self.b.product(&fallback));
            let w = 1.0 / children.len() as f64;
            let weighted: Vec<(NodeId, f64)> = children.into_iter().map(|c| (c, w)).collect();
            self.b.sum(&weighted)
        };
        self.leaf_memo.insert(region, (node, scope.clone()));
        (node, scope)
    }

    fn region(
        &mut self,
        tree: &PartitionTree,
        region: Region,
        depth: u8,
        leaf_content: &mut dyn FnMut(Region) -> (Vec<PartId>, Vec<PairKey>),
    ) -> Scoped {
        if let Some(s) = self.inner_memo.get(&(region, depth)) {
            return s.clone();
        }
        let partitions = tree.partitions(region, depth).to_vec();
        let result = if partitions.is_empty() {
            let (parts, pairs) = leaf_content(region);
            self.leaf(region, &parts, &pairs)
        } else {
            let mut products: Vec<Scoped> = Vec::new();
            for p in &partitions {
                let kids: Vec<Scoped> =
                    p.children.iter().map(|&c| self.region(tree, c, depth + 1, leaf_content)).collect();
                let scope: BTreeSet<VariableId> = kids.iter().flat_map(|(_, s)| s.iter().copied()).collect();
                let ids: Vec<NodeId> = kids.iter().map(|(n, _)| *n).collect();
                let prod = self.b.product(&ids);
                products.push((prod, scope));
            }
            // pad every partition product to the union scope
            let union: BTreeSet<VariableId> = products.iter().flat_map(|(_, s)| s.iter().copied()).collect();
            for (prod, scope) in &products {
                let pads: Vec<NodeId> = union.difference(scope).map(|&v| self.b.marginal(v)).collect();
                if !pads.is_empty() {
                    self.b.extend_product(*prod, &pads);
                }
            }
            let w = 1.0 / products.len() as f64;
            let weighted: Vec<(NodeId, f64)> = products.iter().map(|(n, _)| (*n, w)).collect();
            (self.b.sum(&weighted), union)
        };
        self.inner_memo.insert((region, depth), result.clone());
        result
    }
}

/// Hierarchical class network: one sum per tree node over one product per
/// kept partition, pair gadgets at the leaf regions for pairs co-occurring in
/// at least `tau` of the class's images. Weights start uniform.
pub fn build_class_network(
    tree: &PartitionTree,
    dataset: &Dataset,
    class: ClassId,
    config: &StructureConfig,
) -> Result<Network> {
    let positives: Vec<&ImageRecord> = dataset.of_class(class).collect();
    // Presence is modeled for every part seen in the region in any training
    // image, so all class networks score the same variables; a part left
    // out would contribute a factor of 1 and favor the sparser model.
    let mut content = |region: Region| {
        let (_, pairs) = qualifying_pairs(positives.iter().copied(), region, config.tau);
        let (seen, _) = qualifying_pairs(&dataset.records, region, 0.0);
        (seen, pairs)
    };
    let mut builder = Builder::new();
    let (root, _) = builder.region(tree, Region::FULL, 0, &mut content);
    let mut net = builder.b.finish(root);
    net.set_class_label(Some(class));
    net.set_partitions(tree.to_records());
    Ok(net)
}

/// Flat spatial network: a single whole-image leaf region modeling every
/// pair of the vocabulary.
pub fn build_flat_network(num_parts: u32, class: ClassId) -> Network {
    let parts: Vec<PartId> = (0..num_parts).map(PartId).collect();
    let mut pairs = Vec::new();
    for (i, &p) in parts.iter().enumerate() {
        for &q in &parts[i + 1..] {
            pairs.push(PairKey::new(p, q).expect("distinct"));
        }
    }
    let mut builder = Builder::new();
    let (root, _) = builder.leaf(Region::FULL, &parts, &pairs);
    let mut net = builder.b.finish(root);
    net.set_class_label(Some(class));
    net
}

/// Bag-of-parts network without spatial leaves: a root sum over one product
/// of whole-image Bernoulli sums.
pub fn build_bag_network(num_parts: u32, class: ClassId) -> Network {
    let mut builder = Builder::new();
    let berns: Vec<NodeId> = (0..num_parts).map(|p| builder.bernoulli(PartId(p), Region::FULL)).collect();
    let prod = builder.b.product(&berns);
    let root = builder.b.sum(&[(prod, 1.0)]);
    let mut net = builder.b.finish(root);
    net.set_class_label(Some(class));
    net
}

/// Distinct pairs with at least one gadget in the network.
pub fn modeled_pairs(network: &Network) -> BTreeSet<PairKey> {
    network.gadgets().into_iter().map(|(_, pair, _)| pair).collect()
}
