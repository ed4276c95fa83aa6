//! Removal of (near-)zero sum edges and of whatever they leave unreachable.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::network::{validate, Edge, EdgeId, Network, NodeId};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PruneReport {
    pub edges_removed: usize,
    pub nodes_removed: usize,
}

/// Drops sum edges with weight ≤ `threshold`, removes unreachable nodes,
/// renormalizes and revalidates. Refuses when a sum node would lose every
/// child.
pub fn prune(network: &Network, threshold: f64) -> Result<(Network, PruneReport)> {
    let doomed: BTreeSet<EdgeId> =
        network.weighted_edges().filter(|&e| network.weight(e).is_some_and(|w| w <= threshold)).collect();
    if doomed.is_empty() {
        return Ok((network.clone(), PruneReport::default()));
    }
    for s in network.sum_nodes() {
        let outs = network.out_edges(s);
        if !outs.is_empty() && outs.iter().all(|e| doomed.contains(e)) {
            let which = if s == network.root() { "the root".to_string() } else { format!("sum node {}", s.0) };
            return Err(Error::Prune(format!("every child edge of {which} is at or below {threshold}")));
        }
    }

    let n = network.node_count();
    let mut reached = vec![false; n];
    let mut stack = vec![network.root()];
    reached[network.root().index()] = true;
    while let Some(node) = stack.pop() {
        for &e in network.out_edges(node) {
            let c = network.edge(e).child;
            if !doomed.contains(&e) && !reached[c.index()] {
                reached[c.index()] = true;
                stack.push(c);
            }
        }
    }
    let mut new_id = vec![None; n];
    let mut nodes = Vec::new();
    for (id, kind) in network.nodes() {
        if reached[id.index()] {
            new_id[id.index()] = Some(NodeId(nodes.len() as u32));
            nodes.push(*kind);
        }
    }
    let mut edges = Vec::new();
    let mut edge_map = vec![None; network.edge_count()];
    for (id, e) in network.edges() {
        if doomed.contains(&id) || !reached[e.parent.index()] {
            continue;
        }
        let (Some(p), Some(c)) = (new_id[e.parent.index()], new_id[e.child.index()]) else { continue };
        edge_map[id.index()] = Some(EdgeId(edges.len() as u32));
        edges.push(Edge { parent: p, child: c, weight: e.weight });
    }
    let root = new_id[network.root().index()].expect("root is reachable");
    let mut out = Network::from_parts(nodes, edges, root)?;
    out.set_class_label(network.class_label());
    out.set_partitions(network.partitions().to_vec());
    out.set_shared_edges(network.shared_edges().iter().filter_map(|e| edge_map[e.index()]).collect());
    out.normalize_weights()?;
    let report = validate(&out);
    if !report.is_valid() {
        return Err(Error::Prune(format!("pruned network is invalid: {}", report.violations[0])));
    }
    let pr = PruneReport {
        edges_removed: network.edge_count() - out.edge_count(),
        nodes_removed: network.node_count() - out.node_count(),
    };
    Ok((out, pr))
}
