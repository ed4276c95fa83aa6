//! Cross-class sharing of identical sub-structures.

use std::collections::{BTreeMap, BTreeSet};
use std::hash::{DefaultHasher, Hash, Hasher};

use crate::network::{EdgeId, Network, NodeKind};

/// Edges that carry one shared parameter across networks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedGroup {
    /// (network index, edge) members, in network order.
    pub members: Vec<(usize, EdgeId)>,
}

impl SharedGroup {
    pub fn networks(&self) -> BTreeSet<usize> {
        self.members.iter().map(|&(n, _)| n).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SharingReport {
    /// Groups of sum edges (the trainable shared parameters).
    pub groups: Vec<SharedGroup>,
    /// Shared edges marked per network, sum and product edges alike.
    pub marked: Vec<usize>,
}

/// Largest per-edge weight difference at which two structurally identical
/// sum nodes still count as modeling the same thing.
pub const SHARE_TOLERANCE: f64 = 0.05;

fn hash_of(parts: impl Hash) -> u64 {
    let mut h = DefaultHasher::new();
    parts.hash(&mut h);
    h.finish()
}

/// Finds sub-networks that model the same sub-image content in at least two
/// networks and merges them: identical structure (region-local leaves, pair
/// keys) and, for sum nodes, weights within [`SHARE_TOLERANCE`] of each other
/// edge by edge, recursively. So two gadgets over the same pair and region
/// are merged when both favor the same relation, but not when one learned
/// left-of and the other right-of. Every edge leaving a merged node is marked
/// shared; the weights of merged sum nodes are tied to their mean and
/// returned as groups, one per child position.
pub fn find_shared_structures(networks: &mut [Network]) -> SharingReport {
    let n_nets = networks.len();
    // bottom-up identity of every node; sums are clustered by weights
    let mut ids: Vec<Vec<u64>> = networks.iter().map(|n| vec![0u64; n.node_count()]).collect();
    let mut heights: Vec<Vec<usize>> = Vec::with_capacity(n_nets);
    for net in networks.iter() {
        let mut h = vec![0usize; net.node_count()];
        if let Ok(order) = net.order() {
            for &node in order {
                h[node.index()] =
                    net.out_edges(node).iter().map(|&e| h[net.edge(e).child.index()] + 1).max().unwrap_or(0);
            }
        }
        heights.push(h);
    }
    let max_h = heights.iter().flat_map(|h| h.iter().copied()).max().unwrap_or(0);
    // children of a node in canonical order: by child identity, then edge order
    let canonical = |net: &Network, ids: &[u64], node| {
        let mut kids: Vec<(u64, EdgeId)> = net.out_edges(node).iter().map(|&e| (ids[net.edge(e).child.index()], e)).collect();
        kids.sort();
        kids
    };
    for level in 0..=max_h {
        let mut anchors: BTreeMap<u64, Vec<Vec<f64>>> = BTreeMap::new();
        for (n, net) in networks.iter().enumerate() {
            let Ok(order) = net.order() else { continue };
            let mut at_level: Vec<_> = order.iter().copied().filter(|v| heights[n][v.index()] == level).collect();
            at_level.sort();
            for node in at_level {
                let id = match net.kind(node) {
                    NodeKind::Product => {
                        let kids: Vec<u64> = canonical(net, &ids[n], node).into_iter().map(|(k, _)| k).collect();
                        hash_of((1u8, kids))
                    }
                    NodeKind::Sum => {
                        let kids = canonical(net, &ids[n], node);
                        let key = hash_of((2u8, kids.iter().map(|(k, _)| *k).collect::<Vec<_>>()));
                        let w: Vec<f64> = kids.iter().map(|&(_, e)| net.weight(e).unwrap_or(0.0)).collect();
                        let list = anchors.entry(key).or_default();
                        let close = |a: &Vec<f64>| a.iter().zip(&w).all(|(x, y)| (x - y).abs() <= SHARE_TOLERANCE);
                        let cluster = match list.iter().position(close) {
                            Some(c) => c,
                            None => {
                                list.push(w);
                                list.len() - 1
                            }
                        };
                        hash_of((key, cluster))
                    }
                    kind => hash_of((0u8, kind)),
                };
                ids[n][node.index()] = id;
            }
        }
    }
    let mut owners: BTreeMap<u64, BTreeSet<usize>> = BTreeMap::new();
    for (n, net) in networks.iter().enumerate() {
        let Ok(order) = net.order() else { continue };
        for &node in order {
            owners.entry(ids[n][node.index()]).or_default().insert(n);
        }
    }
    let shared_id = |id: u64| owners.get(&id).is_some_and(|o| o.len() >= 2);

    let mut marked: Vec<BTreeSet<EdgeId>> = networks.iter().map(|n| n.shared_edges().clone()).collect();
    let mut by_id: BTreeMap<u64, Vec<(usize, Vec<EdgeId>)>> = BTreeMap::new();
    for (n, net) in networks.iter().enumerate() {
        let Ok(order) = net.order() else { continue };
        for &node in order {
            let id = ids[n][node.index()];
            if !shared_id(id) {
                continue;
            }
            marked[n].extend(net.out_edges(node).iter().copied());
            if matches!(net.kind(node), NodeKind::Sum) {
                let edges = canonical(net, &ids[n], node).into_iter().map(|(_, e)| e).collect();
                by_id.entry(id).or_default().push((n, edges));
            }
        }
    }
    let mut groups = Vec::new();
    for (_, mut members) in by_id {
        members.sort();
        for j in 0..members[0].1.len() {
            groups.push(SharedGroup { members: members.iter().map(|(n, edges)| (*n, edges[j])).collect() });
        }
    }
    for g in &groups {
        let mean = g.members.iter().map(|&(n, e)| networks[n].weight(e).unwrap_or(0.0)).sum::<f64>() / g.members.len() as f64;
        for &(n, e) in &g.members {
            networks[n].set_weight(e, mean);
        }
    }
    let mut counts = Vec::new();
    for (net, m) in networks.iter_mut().zip(marked) {
        counts.push(m.len());
        net.set_shared_edges(m);
    }
    SharingReport { groups, marked: counts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{ClassId, NetworkBuilder};
    use crate::spatial::{build_pair_gadget, PairKey, PartId, Region, SpatialRelation};
    use crate::structure::build_flat_network;

    fn gadget_net(a: u32, b: u32, region: Region) -> Network {
        let mut builder = NetworkBuilder::new();
        let g = build_pair_gadget(&mut builder, PairKey::new(PartId(a), PartId(b)).unwrap(), region);
        builder.finish(g.sum)
    }

    #[test]
    fn same_relation_in_same_region_is_shared() {
        let r = Region::new(0, 10, 10, 20).unwrap();
        let mut nets = vec![gadget_net(3, 4, r), gadget_net(3, 4, r)];
        let report = find_shared_structures(&mut nets);
        let above = nets[0]
            .edges()
            .find(|(_, e)| {
                nets[0].out_edges(e.child).iter().any(|&pe| {
                    matches!(nets[0].kind(nets[0].edge(pe).child), NodeKind::Indicator(crate::network::Indicator::Spatial { relation: SpatialRelation::Above, .. }))
                }) && e.weight.is_some()
            })
            .map(|(id, _)| id)
            .unwrap();
        assert!(nets[0].shared_edges().contains(&above));
        assert_eq!(report.groups.len(), 4);
    }

    #[test]
    fn disjoint_vocabularies_share_nothing() {
        let r = Region::FULL;
        let mut nets = vec![gadget_net(0, 1, r), gadget_net(2, 3, r)];
        let report = find_shared_structures(&mut nets);
        assert!(report.groups.is_empty());
        assert!(nets.iter().all(|n| n.shared_edges().is_empty()));
    }

    fn set_gadget_weights(net: &mut Network, w: [f64; 4]) {
        let (g, _, _) = net.gadgets()[0];
        for (i, e) in net.out_edges(g).to_vec().into_iter().enumerate() {
            net.set_weight(e, w[i]);
        }
    }

    #[test]
    fn opposite_relations_are_not_merged() {
        let r = Region::FULL;
        let mut nets = vec![gadget_net(0, 1, r), gadget_net(0, 1, r)];
        set_gadget_weights(&mut nets[0], [0.9, 0.05, 0.03, 0.02]);
        set_gadget_weights(&mut nets[1], [0.05, 0.9, 0.03, 0.02]);
        let report = find_shared_structures(&mut nets);
        assert!(report.groups.is_empty());
        let (g, _, _) = nets[0].gadgets()[0];
        let first = nets[0].out_edges(g)[0];
        assert_eq!(nets[0].weight(first), Some(0.9));
    }

    #[test]
    fn close_weights_are_tied_to_their_mean() {
        let r = Region::FULL;
        let mut nets = vec![gadget_net(0, 1, r), gadget_net(0, 1, r)];
        set_gadget_weights(&mut nets[0], [0.90, 0.04, 0.03, 0.03]);
        set_gadget_weights(&mut nets[1], [0.86, 0.06, 0.05, 0.03]);
        let report = find_shared_structures(&mut nets);
        assert_eq!(report.groups.len(), 4);
        let (g, _, _) = nets[1].gadgets()[0];
        let w: Vec<f64> = nets[1].out_edges(g).iter().map(|&e| nets[1].weight(e).unwrap()).collect();
        let expect = [0.88, 0.05, 0.04, 0.03];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{w:?}");
        }
        for g in &report.groups {
            let (n0, e0) = g.members[0];
            let (n1, e1) = g.members[1];
            assert_eq!(nets[n0].weight(e0), nets[n1].weight(e1));
        }
    }

    #[test]
    fn a_network_shares_everything_with_itself() {
        let net = build_flat_network(4, ClassId(0));
        let mut nets = vec![net.clone(), net];
        find_shared_structures(&mut nets);
        assert_eq!(nets[0].shared_edges().len(), nets[0].edge_count());
    }
}
