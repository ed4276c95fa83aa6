//! Sum-product network representation, validity checking and evaluation.
//!
//! A [`Network`] is a rooted DAG whose internal nodes are sums (weighted
//! mixtures) and products, and whose leaves are indicators: the two
//! polarities of a part-presence variable and the four relation indicators
//! of a part pair. Every variable is scoped to a [`Region`] of the image so
//! that products over disjoint sub-images stay decomposable.
//!
//! Networks that contain pair gadgets are nonnegative scoring circuits: the
//! relation indicators of a pair are not mutually exclusive, so the root
//! value is a classification score rather than a normalized probability.

mod eval;
mod evidence;
mod format;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use eval::{evaluate, EvaluationResult, IndicatorValues, Semantics};
pub use evidence::{assignment_from_activations, assignment_to_indicators, image_indicators};
pub(crate) use eval::{forward, forward_from_leaves, leaf_log_values};
pub use format::{from_model_str, read_model, to_model_string, write_model, FORMAT_VERSION};

use crate::error::{Error, Result};
use crate::spatial::{PairKey, PartId, Region, SpatialRelation};

/// Lower bound kept on every sum-edge weight after a learning update.
pub const WEIGHT_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub u32);

impl EdgeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassId(pub u32);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarity {
    /// x_j: the part is present.
    Positive,
    /// x̄_j: the part is absent.
    Negative,
}

impl Polarity {
    pub fn tag(self) -> &'static str {
        match self {
            Polarity::Positive => "pos",
            Polarity::Negative => "neg",
        }
    }
}

/// A random variable of the network polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VariableId {
    /// Presence of a part inside a region.
    Part { part: PartId, region: Region },
    /// Composite variable grouping the four relation indicators of a pair
    /// inside a region.
    Pair { pair: PairKey, region: Region },
}

impl VariableId {
    pub fn region(&self) -> Region {
        match *self {
            VariableId::Part { region, .. } | VariableId::Pair { region, .. } => region,
        }
    }
}

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VariableId::Part { part, region } => write!(f, "part {part} @{region}"),
            VariableId::Pair { pair, region } => write!(f, "pair {pair} @{region}"),
        }
    }
}

/// A leaf indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Indicator {
    Part { part: PartId, region: Region, polarity: Polarity },
    Spatial { pair: PairKey, region: Region, relation: SpatialRelation },
}

impl Indicator {
    pub fn variable(&self) -> VariableId {
        match *self {
            Indicator::Part { part, region, .. } => VariableId::Part { part, region },
            Indicator::Spatial { pair, region, .. } => VariableId::Pair { pair, region },
        }
    }
}

impl fmt::Display for Indicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Indicator::Part { part, region, polarity } => {
                write!(f, "part {part} {} @{region}", polarity.tag())
            }
            Indicator::Spatial { pair, region, relation } => write!(f, "{pair} {relation} @{region}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Sum,
    Product,
    Indicator(Indicator),
    /// Constant-1 leaf standing for a variable that is summed out. Pads
    /// mixture children to a common scope.
    Marginal(VariableId),
    /// Constant-1 leaf with empty scope (an empty leaf region).
    Constant,
}

impl NodeKind {
    pub fn is_leaf(&self) -> bool {
        !matches!(self, NodeKind::Sum | NodeKind::Product)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub parent: NodeId,
    pub child: NodeId,
    /// Present iff the parent is a sum node.
    pub weight: Option<f64>,
}

/// One partition of the structure skeleton, kept alongside the network so
/// model files describe the image decomposition they were built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionRecord {
    pub depth: u8,
    pub parent: Region,
    pub children: Vec<Region>,
}

#[derive(Debug, Clone)]
pub struct Network {
    nodes: Vec<NodeKind>,
    edges: Vec<Edge>,
    out_edges: Vec<Vec<EdgeId>>,
    root: NodeId,
    class_label: Option<ClassId>,
    shared: BTreeSet<EdgeId>,
    partitions: Vec<PartitionRecord>,
    /// ln of every edge weight (-inf for zero weights and product edges),
    /// kept in step with `edges`.
    log_weights: Vec<f64>,
    /// Children-first order of the nodes reachable from the root; `None` if a
    /// cycle is reachable.
    order: Option<Vec<NodeId>>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
            && self.edges == other.edges
            && self.root == other.root
            && self.class_label == other.class_label
            && self.shared == other.shared
            && self.partitions == other.partitions
    }
}

fn log_weight(w: Option<f64>) -> f64 {
    match w {
        Some(w) if w != 0.0 => w.ln(),
        _ => f64::NEG_INFINITY,
    }
}

impl Network {
    /// Assembles a network from raw parts without checking validity, so that
    /// [`validate`] can report on arbitrary graphs.
    pub fn from_parts(nodes: Vec<NodeKind>, edges: Vec<Edge>, root: NodeId) -> Result<Self> {
        let n = nodes.len();
        if root.index() >= n {
            return Err(Error::InvalidNetwork(format!("root {root:?} out of range")));
        }
        let mut out_edges = vec![Vec::new(); n];
        for (i, e) in edges.iter().enumerate() {
            if e.parent.index() >= n || e.child.index() >= n {
                return Err(Error::InvalidNetwork(format!("edge {i} references a missing node")));
            }
            out_edges[e.parent.index()].push(EdgeId(i as u32));
        }
        let mut net = Network {
            nodes,
            edges,
            out_edges,
            root,
            class_label: None,
            shared: BTreeSet::new(),
            partitions: Vec::new(),
            log_weights: Vec::new(),
            order: None,
        };
        net.log_weights = net.edges.iter().map(|e| log_weight(e.weight)).collect();
        net.order = net.compute_order();
        Ok(net)
    }

    fn compute_order(&self) -> Option<Vec<NodeId>> {
        // iterative DFS post-order; state 1 = on stack, 2 = done
        let mut state = vec![0u8; self.nodes.len()];
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack: Vec<(NodeId, usize)> = vec![(self.root, 0)];
        state[self.root.index()] = 1;
        while let Some((node, next)) = stack.pop() {
            let outs = &self.out_edges[node.index()];
            if next < outs.len() {
                stack.push((node, next + 1));
                let child = self.edges[outs[next].index()].child;
                match state[child.index()] {
                    0 => {
                        state[child.index()] = 1;
                        stack.push((child, 0));
                    }
                    1 => return None,
                    _ => {}
                }
            } else {
                state[node.index()] = 2;
                order.push(node);
            }
        }
        Some(order)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn kind(&self, node: NodeId) -> &NodeKind {
        &self.nodes[node.index()]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &NodeKind)> {
        self.nodes.iter().enumerate().map(|(i, k)| (NodeId(i as u32), k))
    }

    pub fn edge(&self, edge: EdgeId) -> &Edge {
        &self.edges[edge.index()]
    }

    pub fn edges(&self) -> impl Iterator<Item = (EdgeId, &Edge)> {
        self.edges.iter().enumerate().map(|(i, e)| (EdgeId(i as u32), e))
    }

    pub fn out_edges(&self, node: NodeId) -> &[EdgeId] {
        &self.out_edges[node.index()]
    }

    /// Children-first evaluation order, or an error if the graph has a cycle.
    pub fn order(&self) -> Result<&[NodeId]> {
        self.order.as_deref().ok_or_else(|| Error::InvalidNetwork("graph contains a cycle".into()))
    }

    pub fn class_label(&self) -> Option<ClassId> {
        self.class_label
    }

    pub fn set_class_label(&mut self, label: Option<ClassId>) {
        self.class_label = label;
    }

    pub fn shared_edges(&self) -> &BTreeSet<EdgeId> {
        &self.shared
    }

    pub fn set_shared_edges(&mut self, shared: BTreeSet<EdgeId>) {
        self.shared = shared;
    }

    pub fn partitions(&self) -> &[PartitionRecord] {
        &self.partitions
    }

    pub fn set_partitions(&mut self, partitions: Vec<PartitionRecord>) {
        self.partitions = partitions;
    }

    /// ln of a sum-edge weight; -inf for zero weights and product edges.
    pub fn log_weight(&self, edge: EdgeId) -> f64 {
        self.log_weights[edge.index()]
    }

    pub fn weight(&self, edge: EdgeId) -> Option<f64> {
        self.edges[edge.index()].weight
    }

    /// Overwrites a sum-edge weight. Panics on a product edge.
    pub fn set_weight(&mut self, edge: EdgeId, weight: f64) {
        let slot = self.edges[edge.index()].weight.as_mut().expect("product edges carry no weight");
        *slot = weight;
        self.log_weights[edge.index()] = log_weight(Some(weight));
    }

    pub fn sum_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().filter(|(_, k)| matches!(k, NodeKind::Sum)).map(|(id, _)| id)
    }

    /// Every sum edge.
    pub fn weighted_edges(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.edges().filter(|(_, e)| e.weight.is_some()).map(|(id, _)| id)
    }

    /// Distinct variables appearing at leaves, sorted.
    pub fn variables(&self) -> Vec<VariableId> {
        let set: BTreeSet<VariableId> = self
            .nodes
            .iter()
            .filter_map(|k| match k {
                NodeKind::Indicator(ind) => Some(ind.variable()),
                NodeKind::Marginal(v) => Some(*v),
                _ => None,
            })
            .collect();
        set.into_iter().collect()
    }

    /// Leaf indicators present in the network.
    pub fn indicators(&self) -> impl Iterator<Item = (NodeId, Indicator)> + '_ {
        self.nodes().filter_map(|(id, k)| match k {
            NodeKind::Indicator(ind) => Some((id, *ind)),
            _ => None,
        })
    }

    /// Scope of every node, or `None` if the graph is cyclic.
    pub fn scopes(&self) -> Option<Vec<BTreeSet<VariableId>>> {
        let order = self.order.as_ref()?;
        let mut scopes: Vec<BTreeSet<VariableId>> = vec![BTreeSet::new(); self.nodes.len()];
        for &node in order {
            let scope = match &self.nodes[node.index()] {
                NodeKind::Indicator(ind) => BTreeSet::from([ind.variable()]),
                NodeKind::Marginal(v) => BTreeSet::from([*v]),
                NodeKind::Constant => BTreeSet::new(),
                NodeKind::Sum | NodeKind::Product => {
                    let mut s = BTreeSet::new();
                    for &e in &self.out_edges[node.index()] {
                        s.extend(scopes[self.edges[e.index()].child.index()].iter().copied());
                    }
                    s
                }
            };
            scopes[node.index()] = scope;
        }
        Some(scopes)
    }

    /// Divides every sum node's outgoing weights by their total.
    pub fn normalize_weights(&mut self) -> Result<()> {
        for node in 0..self.nodes.len() {
            if self.nodes[node] != NodeKind::Sum {
                continue;
            }
            self.normalize_node(NodeId(node as u32))?;
        }
        Ok(())
    }

    pub(crate) fn normalize_node(&mut self, node: NodeId) -> Result<()> {
        let outs = &self.out_edges[node.index()];
        let total: f64 = outs.iter().map(|e| self.edges[e.index()].weight.unwrap_or(0.0)).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::DegenerateNode(node));
        }
        for &e in outs {
            if let Some(w) = self.edges[e.index()].weight.as_mut() {
                *w /= total;
                self.log_weights[e.index()] = log_weight(Some(*w));
            }
        }
        Ok(())
    }

    /// Count of distinct pair gadget sub-networks (sum nodes whose children are
    /// the four relation products of one pair).
    pub fn gadgets(&self) -> Vec<(NodeId, PairKey, Region)> {
        let mut out = Vec::new();
        for (id, kind) in self.nodes() {
            if *kind != NodeKind::Sum {
                continue;
            }
            if let Some((pair, region)) = self.gadget_pair(id) {
                out.push((id, pair, region));
            }
        }
        out
    }

    /// If `node` is a pair gadget sum, its pair and region.
    pub fn gadget_pair(&self, node: NodeId) -> Option<(PairKey, Region)> {
        let outs = self.out_edges(node);
        if self.nodes[node.index()] != NodeKind::Sum || outs.len() != 4 {
            return None;
        }
        let mut found: Option<(PairKey, Region)> = None;
        for &e in outs {
            let p = self.edges[e.index()].child;
            if self.nodes[p.index()] != NodeKind::Product {
                return None;
            }
            let spatial = self.out_edges(p).iter().find_map(|&pe| match self.nodes[self.edges[pe.index()].child.index()] {
                NodeKind::Indicator(Indicator::Spatial { pair, region, .. }) => Some((pair, region)),
                _ => None,
            })?;
            match found {
                None => found = Some(spatial),
                Some(prev) if prev != spatial => return None,
                _ => {}
            }
        }
        found
    }
}

/// Incremental constructor. Leaves are deduplicated so every indicator and
/// every marginal pad is a single node, and node ids are assigned in creation
/// order, which keeps children ahead of their parents.
#[derive(Debug, Default)]
pub struct NetworkBuilder {
    nodes: Vec<NodeKind>,
    edges: Vec<Edge>,
    leaves: HashMap<Indicator, NodeId>,
    marginals: HashMap<VariableId, NodeId>,
    constant: Option<NodeId>,
}

impl NetworkBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, kind: NodeKind) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(kind);
        id
    }

    pub fn indicator(&mut self, ind: Indicator) -> NodeId {
        if let Some(&id) = self.leaves.get(&ind) {
            return id;
        }
        let id = self.push(NodeKind::Indicator(ind));
        self.leaves.insert(ind, id);
        id
    }

    pub fn part_leaf(&mut self, part: PartId, region: Region, polarity: Polarity) -> NodeId {
        self.indicator(Indicator::Part { part, region, polarity })
    }

    pub fn spatial_leaf(&mut self, pair: PairKey, region: Region, relation: SpatialRelation) -> NodeId {
        self.indicator(Indicator::Spatial { pair, region, relation })
    }

    pub fn marginal(&mut self, var: VariableId) -> NodeId {
        if let Some(&id) = self.marginals.get(&var) {
            return id;
        }
        let id = self.push(NodeKind::Marginal(var));
        self.marginals.insert(var, id);
        id
    }

    pub fn constant(&mut self) -> NodeId {
        if let Some(id) = self.constant {
            return id;
        }
        let id = self.push(NodeKind::Constant);
        self.constant = Some(id);
        id
    }

    pub fn sum(&mut self, children: &[(NodeId, f64)]) -> NodeId {
        let id = self.push(NodeKind::Sum);
        for &(child, w) in children {
            self.edges.push(Edge { parent: id, child, weight: Some(w) });
        }
        id
    }

    pub fn product(&mut self, children: &[NodeId]) -> NodeId {
        let id = self.push(NodeKind::Product);
        for &child in children {
            self.edges.push(Edge { parent: id, child, weight: None });
        }
        id
    }

    /// Appends children to an existing product node.
    pub fn extend_product(&mut self, product: NodeId, children: &[NodeId]) {
        debug_assert_eq!(self.nodes[product.index()], NodeKind::Product);
        for &child in children {
            self.edges.push(Edge { parent: product, child, weight: None });
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn finish(self, root: NodeId) -> Network {
        Network::from_parts(self.nodes, self.edges, root).expect("builder ids are in range")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Cycle { node: NodeId },
    Unreachable { node: NodeId },
    NotDecomposable { node: NodeId, overlap: Vec<VariableId> },
    Incomplete { node: NodeId },
    Malformed { node: NodeId, message: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Cycle { node } => write!(f, "cycle through node {}", node.0),
            Violation::Unreachable { node } => write!(f, "node {} unreachable from root", node.0),
            Violation::NotDecomposable { node, overlap } => {
                write!(f, "product node {} children share {} variable(s)", node.0, overlap.len())?;
                if let Some(v) = overlap.first() {
                    write!(f, " (first: {v})")?;
                }
                Ok(())
            }
            Violation::Incomplete { node } => write!(f, "sum node {} children differ in scope", node.0),
            Violation::Malformed { node, message } => write!(f, "node {}: {message}", node.0),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every violation of acyclicity, reachability, decomposability and
/// completeness, plus local well-formedness (weights only on sum edges,
/// finite nonnegative weights, leaves without children, sums with children).
pub fn validate(network: &Network) -> ValidityReport {
    let mut violations = Vec::new();

    for (id, kind) in network.nodes() {
        let outs = network.out_edges(id);
        match kind {
            NodeKind::Sum if outs.is_empty() => {
                violations.push(Violation::Malformed { node: id, message: "sum node without children".into() })
            }
            NodeKind::Product if outs.is_empty() => violations
                .push(Violation::Malformed { node: id, message: "product node without children".into() }),
            k if k.is_leaf() && !outs.is_empty() => {
                violations.push(Violation::Malformed { node: id, message: "leaf with children".into() })
            }
            _ => {}
        }
        for &e in outs {
            let edge = network.edge(e);
            match (kind, edge.weight) {
                (NodeKind::Sum, None) => violations
                    .push(Violation::Malformed { node: id, message: format!("sum edge {} has no weight", e.0) }),
                (NodeKind::Sum, Some(w)) if !(w >= 0.0) || !w.is_finite() => violations.push(Violation::Malformed {
                    node: id,
                    message: format!("edge {} weight {w} is not a finite nonnegative number", e.0),
                }),
                (NodeKind::Product, Some(_)) => violations.push(Violation::Malformed {
                    node: id,
                    message: format!("product edge {} carries a weight", e.0),
                }),
                _ => {}
            }
            if edge.child == id {
                violations.push(Violation::Cycle { node: id });
            }
        }
    }

    // reachability and cycles via colored DFS over the whole graph
    let n = network.node_count();
    let mut reached = vec![false; n];
    let mut stack = vec![network.root()];
    reached[network.root().index()] = true;
    while let Some(node) = stack.pop() {
        for &e in network.out_edges(node) {
            let c = network.edge(e).child;
            if !reached[c.index()] {
                reached[c.index()] = true;
                stack.push(c);
            }
        }
    }
    for (i, r) in reached.iter().enumerate() {
        if !r {
            violations.push(Violation::Unreachable { node: NodeId(i as u32) });
        }
    }
    let has_self_loop = violations.iter().any(|v| matches!(v, Violation::Cycle { .. }));
    if network.order.is_none() && !has_self_loop {
        let cyc = find_cycle_node(network);
        violations.push(Violation::Cycle { node: cyc });
    }

    if let Some(scopes) = network.scopes() {
        for (id, kind) in network.nodes() {
            if !reached[id.index()] {
                continue;
            }
            let children: Vec<NodeId> = network.out_edges(id).iter().map(|&e| network.edge(e).child).collect();
            match kind {
                NodeKind::Product => {
                    let mut seen: BTreeSet<VariableId> = BTreeSet::new();
                    let mut overlap = BTreeSet::new();
                    for c in &children {
                        for v in &scopes[c.index()] {
                            if !seen.insert(*v) {
                                overlap.insert(*v);
                            }
                        }
                    }
                    if !overlap.is_empty() {
                        violations
                            .push(Violation::NotDecomposable { node: id, overlap: overlap.into_iter().collect() });
                    }
                }
                NodeKind::Sum => {
                    if let Some(first) = children.first() {
                        if children.iter().any(|c| scopes[c.index()] != scopes[first.index()]) {
                            violations.push(Violation::Incomplete { node: id });
                        }
                    }
                }
                _ => {}
            }
        }
    }
    ValidityReport { violations }
}

fn find_cycle_node(network: &Network) -> NodeId {
    let n = network.node_count();
    let mut state = vec![0u8; n];
    for start in 0..n {
        if state[start] != 0 {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        state[start] = 1;
        while let Some((node, next)) = stack.pop() {
            let outs = network.out_edges(NodeId(node as u32));
            if next < outs.len() {
                stack.push((node, next + 1));
                let c = network.edge(outs[next]).child.index();
                match state[c] {
                    0 => {
                        state[c] = 1;
                        stack.push((c, 0));
                    }
                    1 => return NodeId(c as u32),
                    _ => {}
                }
            } else {
                state[node] = 2;
            }
        }
    }
    network.root()
}

#[cfg(test)]
pub(crate) mod tests;
