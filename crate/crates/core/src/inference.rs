//! Max-product inference: MPE completion by top-down backtracking and the
//! per-edge traversal counts that drive the margin update.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::network::{
    forward, EdgeId, EvaluationResult, Indicator, IndicatorValues, Network, NodeKind, Polarity, Semantics,
    VariableId,
};
use crate::spatial::SpatialRelation;

/// Absolute tolerance on log values when comparing max-node children.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// A network viewed with its sum nodes as max nodes. Borrowing keeps node
/// and edge ids identical to the source network.
#[derive(Debug, Clone, Copy)]
pub struct MaxNetwork<'a> {
    network: &'a Network,
}

impl<'a> MaxNetwork<'a> {
    pub fn network(&self) -> &'a Network {
        self.network
    }

    pub fn to_mpn(self) -> MaxNetwork<'a> {
        self
    }

    pub fn evaluate(&self, indicators: &IndicatorValues) -> Result<EvaluationResult> {
        forward(self.network, indicators, Semantics::Max)
    }
}

pub fn to_mpn(network: &Network) -> MaxNetwork<'_> {
    MaxNetwork { network }
}

/// Per-edge counts of how often an edge lies on the selected max tree.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraversalCounts {
    edge_count: usize,
    counts: BTreeMap<EdgeId, u64>,
}

impl TraversalCounts {
    pub fn new(edge_count: usize) -> Self {
        TraversalCounts { edge_count, counts: BTreeMap::new() }
    }

    pub fn get(&self, edge: EdgeId) -> u64 {
        self.counts.get(&edge).copied().unwrap_or(0)
    }

    pub fn add(&mut self, edge: EdgeId, n: u64) {
        *self.counts.entry(edge).or_insert(0) += n;
    }

    /// Edges with a positive count, ascending.
    pub fn iter(&self) -> impl Iterator<Item = (EdgeId, u64)> + '_ {
        self.counts.iter().map(|(&e, &c)| (e, c))
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn merge(&mut self, other: &TraversalCounts) {
        for (e, c) in other.iter() {
            self.add(e, c);
        }
    }
}

#[derive(Debug, Clone)]
pub struct MpeResult {
    /// Evidence with every query variable resolved to a single state.
    pub completed: IndicatorValues,
    pub root_log: f64,
    pub traversal: TraversalCounts,
    /// Query variables whose leaves were never reached by the selected tree;
    /// they carry the default state (part present / no relation).
    pub unconstrained: BTreeSet<VariableId>,
}

impl MpeResult {
    pub fn root_value(&self) -> f64 {
        self.root_log.exp()
    }
}

/// Index of the maximizing term, lowest index on ties within tolerance.
fn argmax(terms: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, t) in terms.enumerate() {
        match best {
            None => best = Some((i, t)),
            Some((_, b)) if t > b + TIE_TOLERANCE => best = Some((i, t)),
            _ => {}
        }
    }
    best.map(|(i, _)| i)
}

/// Top-down pass over an evaluated max network. Max nodes follow their
/// argmax child (ties to the lowest child id), products follow every child;
/// a node reached `k` times passes `k` to each selected edge.
pub fn backtrack(network: &Network, eval: &EvaluationResult) -> Result<(TraversalCounts, Vec<u64>)> {
    let order = network.order()?;
    let mut reach = vec![0u64; network.node_count()];
    reach[network.root().index()] = 1;
    let mut counts = TraversalCounts::new(network.edge_count());
    for &node in order.iter().rev() {
        let k = reach[node.index()];
        if k == 0 {
            continue;
        }
        let outs = network.out_edges(node);
        match network.kind(node) {
            NodeKind::Product => {
                for &e in outs {
                    counts.add(e, k);
                    reach[network.edge(e).child.index()] += k;
                }
            }
            NodeKind::Sum => {
                // candidates in ascending child id so ties favour the lowest id
                let mut cands: Vec<EdgeId> = outs.to_vec();
                cands.sort_by_key(|&e| (network.edge(e).child, e));
                let terms = cands.iter().map(|&e| network.log_weight(e) + eval.log_value(network.edge(e).child));
                if let Some(i) = argmax(terms) {
                    let e = cands[i];
                    counts.add(e, k);
                    reach[network.edge(e).child.index()] += k;
                }
            }
            _ => {}
        }
    }
    Ok((counts, reach))
}

/// MPE completion of the query variables given evidence in which each of
/// them is marginalized.
pub fn mpe(max_network: MaxNetwork<'_>, evidence: &IndicatorValues, query: &BTreeSet<VariableId>) -> Result<MpeResult> {
    let network = max_network.network();
    for &var in query {
        if !evidence.is_marginalized(var) {
            return Err(Error::Contract(format!("query variable {var} is not marginalized in the evidence")));
        }
    }
    let eval = max_network.evaluate(evidence)?;
    if eval.root_log().is_nan() {
        return Err(Error::NonFinite { node: network.root(), message: "NaN root value".into() });
    }
    let (traversal, reach) = backtrack(network, &eval)?;

    let mut completed = evidence.clone();
    let mut touched: BTreeMap<VariableId, Vec<Indicator>> = BTreeMap::new();
    for (node, ind) in network.indicators() {
        if reach[node.index()] > 0 && query.contains(&ind.variable()) {
            touched.entry(ind.variable()).or_default().push(ind);
        }
    }
    let mut unconstrained = BTreeSet::new();
    for &var in query {
        let reached = touched.get(&var);
        match var {
            VariableId::Part { part, region } => {
                let positive = match reached {
                    None => {
                        unconstrained.insert(var);
                        true
                    }
                    Some(inds) => inds.iter().any(|i| matches!(i, Indicator::Part { polarity: Polarity::Positive, .. })),
                };
                completed.set_part(part, region, positive);
            }
            VariableId::Pair { pair, region } => {
                let mut values = [0.0; 4];
                match reached {
                    None => {
                        unconstrained.insert(var);
                    }
                    Some(inds) => {
                        for i in inds {
                            if let Indicator::Spatial { relation, .. } = i {
                                values[relation.index()] = 1.0;
                            }
                        }
                        // keep the completion geometrically realizable
                        for (a, b) in [(SpatialRelation::LeftOf, SpatialRelation::RightOf), (SpatialRelation::Above, SpatialRelation::Below)] {
                            if values[a.index()] == 1.0 && values[b.index()] == 1.0 {
                                values[b.index()] = 0.0;
                            }
                        }
                    }
                }
                completed.set_pair_values(pair, region, values);
            }
        }
    }
    Ok(MpeResult { completed, root_log: eval.root_log(), traversal, unconstrained })
}

/// Signed difference `pos − neg` of two traversal counts, sparse.
pub fn traversal_difference(pos: &TraversalCounts, neg: &TraversalCounts) -> Result<BTreeMap<EdgeId, i64>> {
    if pos.edge_count != neg.edge_count {
        return Err(Error::Contract(format!(
            "traversal counts come from different networks ({} vs {} edges)",
            pos.edge_count, neg.edge_count
        )));
    }
    let mut out = BTreeMap::new();
    for (e, c) in pos.iter() {
        *out.entry(e).or_insert(0) += c as i64;
    }
    for (e, c) in neg.iter() {
        *out.entry(e).or_insert(0) -= c as i64;
    }
    out.retain(|_, d| *d != 0);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{worked_example, x_var, X1, X2};
    use crate::network::evaluate;
    use crate::spatial::Region;

    fn evidence(x1: Option<bool>, x2: Option<bool>) -> IndicatorValues {
        let mut ev = IndicatorValues::new();
        for (p, v) in [(X1, x1), (X2, x2)] {
            match v {
                Some(b) => ev.set_part(p, Region::FULL, b),
                None => ev.marginalize_part(p, Region::FULL),
            }
        }
        ev
    }

    #[test]
    fn worked_example_completes_x2_present() {
        let net = worked_example();
        let r = mpe(to_mpn(&net), &evidence(Some(true), None), &BTreeSet::from([x_var(X2)])).unwrap();
        assert!((r.root_value() - 0.192).abs() < 1e-12);
        assert_eq!(r.completed.part_values(X2, Region::FULL), Some([1.0, 0.0]));
        assert!(r.unconstrained.is_empty());
        let again = to_mpn(&net).evaluate(&r.completed).unwrap();
        assert!((again.root_value() - r.root_value()).abs() <= 1e-12 * r.root_value());
    }

    #[test]
    fn full_evidence_is_returned_unchanged() {
        let net = worked_example();
        let ev = evidence(Some(false), Some(true));
        let r = mpe(to_mpn(&net), &ev, &BTreeSet::new()).unwrap();
        assert_eq!(r.completed, ev);
    }

    #[test]
    fn unmarginalized_query_is_a_contract_error() {
        let net = worked_example();
        let err = mpe(to_mpn(&net), &evidence(Some(true), Some(false)), &BTreeSet::from([x_var(X2)]));
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn max_value_never_exceeds_sum_value() {
        let net = worked_example();
        for x1 in [None, Some(true), Some(false)] {
            for x2 in [None, Some(true), Some(false)] {
                let ev = evidence(x1, x2);
                let m = to_mpn(&net).evaluate(&ev).unwrap().root_value();
                let s = evaluate(&net, &ev).unwrap().root_value();
                assert!(m <= s + 1e-15);
            }
        }
    }

    #[test]
    fn traversal_counts_are_conserved_through_max_nodes() {
        let net = worked_example();
        let r = mpe(to_mpn(&net), &evidence(Some(true), None), &BTreeSet::from([x_var(X2)])).unwrap();
        let mut incoming = vec![0u64; net.node_count()];
        incoming[net.root().index()] = 1;
        for (e, c) in r.traversal.iter() {
            incoming[net.edge(e).child.index()] += c;
        }
        for s in net.sum_nodes() {
            let out: u64 = net.out_edges(s).iter().map(|&e| r.traversal.get(e)).sum();
            assert_eq!(out, incoming[s.index()]);
        }
    }

    #[test]
    fn difference_cancels_and_rejects_foreign_counts() {
        let mut a = TraversalCounts::new(4);
        a.add(EdgeId(1), 1);
        a.add(EdgeId(2), 1);
        let mut b = TraversalCounts::new(4);
        b.add(EdgeId(2), 1);
        let d = traversal_difference(&a, &b).unwrap();
        assert_eq!(d, BTreeMap::from([(EdgeId(1), 1)]));
        assert!(traversal_difference(&a, &a).unwrap().is_empty());
        assert!(traversal_difference(&a, &TraversalCounts::new(5)).is_err());
    }
}
