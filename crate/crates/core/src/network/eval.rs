use std::collections::HashMap;

use super::{Indicator, Network, NodeId, NodeKind, Polarity, VariableId};
use crate::error::{Error, Result};
use crate::spatial::{PairKey, PartId, Region, Relations, SpatialRelation};

/// Values of leaf indicators, keyed by variable.
///
/// An observed part has exactly one polarity at 1; a marginalized part has
/// both at 1. A pair with both parts present carries its geometric relations;
/// a pair with a missing part has all four relation indicators at 1.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndicatorValues {
    parts: HashMap<(PartId, Region), [f64; 2]>,
    pairs: HashMap<(PairKey, Region), [f64; 4]>,
}

impl IndicatorValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_part(&mut self, part: PartId, region: Region, present: bool) {
        let v = if present { [1.0, 0.0] } else { [0.0, 1.0] };
        self.parts.insert((part, region), v);
    }

    /// Raw (positive, negative) indicator values.
    pub fn set_part_values(&mut self, part: PartId, region: Region, positive: f64, negative: f64) {
        self.parts.insert((part, region), [positive, negative]);
    }

    pub fn marginalize_part(&mut self, part: PartId, region: Region) {
        self.parts.insert((part, region), [1.0, 1.0]);
    }

    pub fn set_pair(&mut self, pair: PairKey, region: Region, relations: Relations) {
        self.pairs.insert((pair, region), relations.indicator_values());
    }

    /// Raw relation indicator values in left, right, above, below order.
    pub fn set_pair_values(&mut self, pair: PairKey, region: Region, values: [f64; 4]) {
        self.pairs.insert((pair, region), values);
    }

    pub fn marginalize_pair(&mut self, pair: PairKey, region: Region) {
        self.pairs.insert((pair, region), [1.0; 4]);
    }

    pub fn marginalize(&mut self, var: VariableId) {
        match var {
            VariableId::Part { part, region } => self.marginalize_part(part, region),
            VariableId::Pair { pair, region } => self.marginalize_pair(pair, region),
        }
    }

    pub fn part_values(&self, part: PartId, region: Region) -> Option<[f64; 2]> {
        self.parts.get(&(part, region)).copied()
    }

    pub fn pair_values(&self, pair: PairKey, region: Region) -> Option<[f64; 4]> {
        self.pairs.get(&(pair, region)).copied()
    }

    /// True when every indicator of the variable is 1.
    pub fn is_marginalized(&self, var: VariableId) -> bool {
        match var {
            VariableId::Part { part, region } => self.part_values(part, region) == Some([1.0, 1.0]),
            VariableId::Pair { pair, region } => self.pair_values(pair, region) == Some([1.0; 4]),
        }
    }

    pub fn contains(&self, var: VariableId) -> bool {
        match var {
            VariableId::Part { part, region } => self.parts.contains_key(&(part, region)),
            VariableId::Pair { pair, region } => self.pairs.contains_key(&(pair, region)),
        }
    }

    pub fn value(&self, ind: &Indicator) -> Option<f64> {
        match *ind {
            Indicator::Part { part, region, polarity } => self.parts.get(&(part, region)).map(|v| match polarity {
                Polarity::Positive => v[0],
                Polarity::Negative => v[1],
            }),
            Indicator::Spatial { pair, region, relation } => {
                self.pairs.get(&(pair, region)).map(|v| v[relation.index()])
            }
        }
    }

    /// Mutable access to a single relation indicator.
    pub fn set_relation(&mut self, pair: PairKey, region: Region, relation: SpatialRelation, value: f64) {
        self.pairs.entry((pair, region)).or_insert([0.0; 4])[relation.index()] = value;
    }
}

/// How sum nodes combine their children.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Semantics {
    /// Weighted sum (the SPN).
    Sum,
    /// Weighted maximum (the max-product network).
    Max,
}

#[derive(Debug, Clone)]
pub struct EvaluationResult {
    log_values: Vec<f64>,
    root: NodeId,
}

impl EvaluationResult {
    pub fn root_log(&self) -> f64 {
        self.log_values[self.root.index()]
    }

    pub fn root_value(&self) -> f64 {
        self.root_log().exp()
    }

    pub fn log_value(&self, node: NodeId) -> f64 {
        self.log_values[node.index()]
    }

    pub fn value(&self, node: NodeId) -> f64 {
        self.log_values[node.index()].exp()
    }

    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }
}

/// Bottom-up evaluation of the SPN.
pub fn evaluate(network: &Network, indicators: &IndicatorValues) -> Result<EvaluationResult> {
    forward(network, indicators, Semantics::Sum)
}

fn ln(x: f64) -> f64 {
    if x == 0.0 {
        f64::NEG_INFINITY
    } else {
        x.ln()
    }
}

/// Log values of the reachable leaves, indexed by node (-inf elsewhere).
/// Fails on a missing or invalid indicator value.
pub(crate) fn leaf_log_values(network: &Network, indicators: &IndicatorValues) -> Result<Vec<f64>> {
    let mut lv = vec![f64::NEG_INFINITY; network.node_count()];
    for &node in network.order()? {
        lv[node.index()] = match network.kind(node) {
            NodeKind::Indicator(ind) => {
                let v = indicators
                    .value(ind)
                    .ok_or_else(|| Error::IncompleteEvidence { node, leaf: ind.to_string() })?;
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::NonFinite { node, message: format!("indicator value {v}") });
                }
                ln(v)
            }
            NodeKind::Marginal(_) | NodeKind::Constant => 0.0,
            NodeKind::Sum | NodeKind::Product => continue,
        };
    }
    Ok(lv)
}

/// Single forward pass in the log domain. Sum nodes use a max-shifted
/// log-sum-exp; nodes not reachable from the root stay at -inf.
pub(crate) fn forward(network: &Network, indicators: &IndicatorValues, semantics: Semantics) -> Result<EvaluationResult> {
    forward_from_leaves(network, leaf_log_values(network, indicators)?, semantics)
}

/// [`forward`] from precomputed [`leaf_log_values`].
pub(crate) fn forward_from_leaves(network: &Network, leaves: Vec<f64>, semantics: Semantics) -> Result<EvaluationResult> {
    let order = network.order()?;
    let mut lv = leaves;
    let mut terms: Vec<f64> = Vec::new();
    for &node in order {
        let value = match network.kind(node) {
            NodeKind::Product => network.out_edges(node).iter().map(|&e| lv[network.edge(e).child.index()]).sum(),
            NodeKind::Sum => {
                terms.clear();
                for &e in network.out_edges(node) {
                    terms.push(network.log_weight(e) + lv[network.edge(e).child.index()]);
                }
                let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                match semantics {
                    Semantics::Max => m,
                    Semantics::Sum if m == f64::NEG_INFINITY => m,
                    Semantics::Sum => m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln(),
                }
            }
            _ => continue,
        };
        if value.is_nan() {
            return Err(Error::NonFinite { node, message: "NaN node value".into() });
        }
        lv[node.index()] = value;
    }
    Ok(EvaluationResult { log_values: lv, root: network.root() })
}
