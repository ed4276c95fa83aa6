//! Brute-force references for small networks: exhaustive marginals and MPE
//! over every completion, finite-difference gradients, and agglomeration by
//! full recomputation.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{average_link, euclidean};
use crate::error::{Error, Result};
use crate::inference::{backtrack, to_mpn, TraversalCounts};
use crate::network::{evaluate, EdgeId, IndicatorValues, Network, NetworkBuilder, NodeId, Polarity, VariableId};
use crate::spatial::{PairKey, PartId, Region, Relations, SpatialRelation};

/// Largest number of free variables the exhaustive oracles accept.
pub const MAX_VARIABLES: usize = 10;

/// Variables of `network` that `evidence` leaves marginalized, i.e. the
/// variables a completion has to fill in.
fn free_variables(network: &Network, evidence: &IndicatorValues) -> Result<Vec<VariableId>> {
    let vars = network.variables();
    if vars.len() > MAX_VARIABLES {
        return Err(Error::SizeGuard(format!("{} variables exceed the oracle limit of {MAX_VARIABLES}", vars.len())));
    }
    Ok(vars.into_iter().filter(|&v| evidence.is_marginalized(v)).collect())
}

fn states(var: VariableId) -> usize {
    match var {
        VariableId::Part { .. } => 2,
        VariableId::Pair { .. } => 9,
    }
}

fn assign(values: &mut IndicatorValues, var: VariableId, state: usize) {
    match var {
        // state 0 = present so lexicographic order prefers presence
        VariableId::Part { part, region } => values.set_part(part, region, state == 0),
        VariableId::Pair { pair, region } => values.set_pair(pair, region, Relations::realizable()[state]),
    }
}

/// Calls `visit` with every completion of the free variables, in
/// lexicographic order of the per-variable state indices.
fn for_each_completion(
    free: &[VariableId],
    evidence: &IndicatorValues,
    mut visit: impl FnMut(&IndicatorValues) -> Result<()>,
) -> Result<()> {
    let mut digits = vec![0usize; free.len()];
    let mut values = evidence.clone();
    loop {
        for (&v, &d) in free.iter().zip(&digits) {
            assign(&mut values, v, d);
        }
        visit(&values)?;
        let mut i = free.len();
        loop {
            if i == 0 {
                return Ok(());
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < states(free[i]) {
                break;
            }
            digits[i] = 0;
        }
    }
}

/// Sum of the network value over every completion of the marginalized
/// variables (parts: two states; pairs: the nine realizable relation states).
pub fn brute_force_marginal(network: &Network, evidence: &IndicatorValues) -> Result<f64> {
    let free = free_variables(network, evidence)?;
    let mut total = 0.0;
    for_each_completion(&free, evidence, |values| {
        total += evaluate(network, values)?.root_value();
        Ok(())
    })?;
    Ok(total)
}

/// Exhaustive maximizer of the max-network value over completions; the first
/// completion in lexicographic order wins ties.
pub fn brute_force_mpe(network: &Network, evidence: &IndicatorValues) -> Result<(IndicatorValues, f64)> {
    let free = free_variables(network, evidence)?;
    let mpn = to_mpn(network);
    let mut best: Option<(IndicatorValues, f64)> = None;
    for_each_completion(&free, evidence, |values| {
        let v = mpn.evaluate(values)?.root_value();
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((values.clone(), v));
        }
        Ok(())
    })?;
    Ok(best.expect("at least one completion"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gradient {
    Value(f64),
    /// The argmax tree moved under every tried step size.
    Inconclusive,
}

fn max_tree(network: &Network, evidence: &IndicatorValues) -> Result<(f64, TraversalCounts)> {
    let eval = to_mpn(network).evaluate(evidence)?;
    let (counts, _) = backtrack(network, &eval)?;
    Ok((eval.root_log(), counts))
}

/// Central difference of `log M(pos) − log M(neg)` in the weight of `edge`,
/// without renormalization. The step shrinks by 10 (up to five times) until
/// both perturbed max trees match the unperturbed ones.
pub fn finite_difference_gradient(
    network: &Network,
    pos: &IndicatorValues,
    neg: &IndicatorValues,
    edge: EdgeId,
    delta: f64,
) -> Result<Gradient> {
    let w = network
        .weight(edge)
        .ok_or_else(|| Error::Contract(format!("edge {} is not a sum edge", edge.0)))?;
    let (_, tree_pos) = max_tree(network, pos)?;
    let (_, tree_neg) = max_tree(network, neg)?;
    let mut delta = delta.min(w / 100.0);
    for _ in 0..=5 {
        let mut f = [0.0; 2];
        let mut stable = true;
        for (slot, sign) in f.iter_mut().zip([1.0, -1.0]) {
            let mut net = network.clone();
            net.set_weight(edge, w + sign * delta);
            let (lp, tp) = max_tree(&net, pos)?;
            let (ln, tn) = max_tree(&net, neg)?;
            stable &= tp == tree_pos && tn == tree_neg;
            *slot = lp - ln;
        }
        if stable {
            return Ok(Gradient::Value((f[0] - f[1]) / (2.0 * delta)));
        }
        delta /= 10.0;
    }
    Ok(Gradient::Inconclusive)
}

/// Average-link agglomeration recomputing every cluster distance from the
/// points at each step. Same slot and tie conventions as
/// [`crate::data::merge_closest`].
pub fn brute_force_agglomerate(points: &[Vec<f64>], groups: Vec<Vec<usize>>, n_c: usize) -> Vec<(usize, usize)> {
    let mut groups: Vec<Option<Vec<usize>>> = groups.into_iter().map(Some).collect();
    let mut merges = Vec::new();
    while groups.iter().flatten().count() > n_c.max(1) {
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                if let (Some(a), Some(b)) = (&groups[i], &groups[j]) {
                    let a: Vec<&[f64]> = a.iter().map(|&m| points[m].as_slice()).collect();
                    let b: Vec<&[f64]> = b.iter().map(|&m| points[m].as_slice()).collect();
                    let d = average_link(&a, &b, euclidean).expect("non-empty");
                    if d < best.0 {
                        best = (d, i, j);
                    }
                }
            }
        }
        let (_, i, j) = best;
        let absorbed = groups[j].take().expect("alive");
        groups[i].as_mut().expect("alive").extend(absorbed);
        merges.push((i, j));
    }
    merges
}

/// Random complete and decomposable network over at most `max_vars`
/// variables mixing part indicators, standalone relation sums and pair
/// gadgets, with normalized random weights.
pub fn random_network(rng: &mut impl Rng, max_vars: usize) -> Network {
    let max_vars = max_vars.clamp(1, MAX_VARIABLES);
    let n_parts = rng.random_range(1..=max_vars.min(5));
    let parts: Vec<PartId> = (0..n_parts as u32).map(PartId).collect();
    let mut candidates: Vec<PairKey> = Vec::new();
    for i in 0..n_parts {
        for j in i + 1..n_parts {
            candidates.push(PairKey::new(parts[i], parts[j]).expect("distinct"));
        }
    }
    candidates.shuffle(rng);
    let n_pairs = rng.random_range(0..=candidates.len().min(max_vars - n_parts).min(3));
    let mut scope: Vec<VariableId> = parts.iter().map(|&part| VariableId::Part { part, region: Region::FULL }).collect();
    scope.extend(candidates[..n_pairs].iter().map(|&pair| VariableId::Pair { pair, region: Region::FULL }));

    let mut b = NetworkBuilder::new();
    let root = RandomGen { rng, b: &mut b }.node(&scope, 0);
    let mut net = b.finish(root);
    net.normalize_weights().expect("random weights are positive");
    net
}

struct RandomGen<'a, R: Rng> {
    rng: &'a mut R,
    b: &'a mut NetworkBuilder,
}

impl<R: Rng> RandomGen<'_, R> {
    fn weight(&mut self) -> f64 {
        self.rng.random_range(0.05..1.0)
    }

    fn leaf(&mut self, var: VariableId) -> NodeId {
        match var {
            VariableId::Part { part, region } => {
                match self.rng.random_range(0..4) {
                    0 => self.b.part_leaf(part, region, Polarity::Positive),
                    1 => self.b.part_leaf(part, region, Polarity::Negative),
                    _ => {
                        let pos = self.b.part_leaf(part, region, Polarity::Positive);
                        let neg = self.b.part_leaf(part, region, Polarity::Negative);
                        let (wp, wn) = (self.weight(), self.weight());
                        self.b.sum(&[(pos, wp), (neg, wn)])
                    }
                }
            }
            VariableId::Pair { pair, region } => {
                let mut children = Vec::new();
                for rel in SpatialRelation::ALL {
                    if self.rng.random_bool(0.6) {
                        let leaf = self.b.spatial_leaf(pair, region, rel);
                        let w = self.weight();
                        children.push((leaf, w));
                    }
                }
                if children.is_empty() {
                    return self.b.spatial_leaf(pair, region, SpatialRelation::ALL[self.rng.random_range(0..4)]);
                }
                self.b.sum(&children)
            }
        }
    }

    /// Product of both parts' positive indicators and one relation leaf for
    /// a pair whose parts are in scope, times a subnetwork over the rest.
    fn gadget_branch(&mut self, scope: &[VariableId], depth: usize) -> Option<NodeId> {
        let (pair, region) = scope.iter().find_map(|v| match *v {
            VariableId::Pair { pair, region } => {
                let has = |p| scope.contains(&VariableId::Part { part: p, region });
                (has(pair.a()) && has(pair.b())).then_some((pair, region))
            }
            _ => None,
        })?;
        let used: BTreeSet<VariableId> = [
            VariableId::Pair { pair, region },
            VariableId::Part { part: pair.a(), region },
            VariableId::Part { part: pair.b(), region },
        ]
        .into();
        let rest: Vec<VariableId> = scope.iter().copied().filter(|v| !used.contains(v)).collect();
        let xa = self.b.part_leaf(pair.a(), region, Polarity::Positive);
        let xb = self.b.part_leaf(pair.b(), region, Polarity::Positive);
        let f = self.b.spatial_leaf(pair, region, SpatialRelation::ALL[self.rng.random_range(0..4)]);
        let mut children = vec![xa, xb, f];
        if !rest.is_empty() {
            children.push(self.node(&rest, depth + 1));
        }
        Some(self.b.product(&children))
    }

    fn node(&mut self, scope: &[VariableId], depth: usize) -> NodeId {
        if scope.len() == 1 {
            return self.leaf(scope[0]);
        }
        let as_sum = depth < 4 && self.rng.random_bool(0.5);
        if as_sum {
            let k = self.rng.random_range(2..=3);
            let mut children = Vec::new();
            for _ in 0..k {
                let child = if self.rng.random_bool(0.3) {
                    self.gadget_branch(scope, depth).unwrap_or_else(|| self.product(scope, depth))
                } else {
                    self.product(scope, depth)
                };
                let w = self.weight();
                children.push((child, w));
            }
            self.b.sum(&children)
        } else {
            self.product(scope, depth)
        }
    }

    fn product(&mut self, scope: &[VariableId], depth: usize) -> NodeId {
        let mut vars = scope.to_vec();
        vars.shuffle(self.rng);
        let groups = self.rng.random_range(2..=vars.len().min(3));
        let mut cuts: Vec<usize> = (1..vars.len()).collect();
        cuts.shuffle(self.rng);
        let mut cuts: Vec<usize> = cuts[..groups - 1].to_vec();
        cuts.sort_unstable();
        let mut children = Vec::new();
        let mut start = 0;
        for end in cuts.into_iter().chain([vars.len()]) {
            let mut part = vars[start..end].to_vec();
            part.sort();
            children.push(self.node(&part, depth + 1));
            start = end;
        }
        self.b.product(&children)
    }
}

/// Random evidence over every variable of `network`: each part is observed
/// (one-hot) or, with probability `p_marginal`, marginalized; pairs get a
/// random realizable relation state, or are marginalized with probability
/// `p_marginal` when `marginalize_pairs` is set.
pub fn random_evidence(rng: &mut impl Rng, network: &Network, p_marginal: f64, marginalize_pairs: bool) -> IndicatorValues {
    let mut ev = IndicatorValues::new();
    for var in network.variables() {
        match var {
            VariableId::Part { part, region } => {
                if rng.random_bool(p_marginal) {
                    ev.marginalize_part(part, region);
                } else {
                    ev.set_part(part, region, rng.random_bool(0.5));
                }
            }
            VariableId::Pair { pair, region } => {
                if marginalize_pairs && rng.random_bool(p_marginal) {
                    ev.marginalize_pair(pair, region);
                } else {
                    ev.set_pair(pair, region, Relations::realizable()[rng.random_range(0..9)]);
                }
            }
        }
    }
    ev
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{worked_example, X1, X2};
    use crate::network::validate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn worked_example_marginal_and_total_mass() {
        let net = worked_example();
        let mut ev = IndicatorValues::new();
        ev.set_part(X1, Region::FULL, true);
        ev.set_part(X2, Region::FULL, false);
        assert!((brute_force_marginal(&net, &ev).unwrap() - 0.12).abs() < 1e-12);
        ev.marginalize_part(X1, Region::FULL);
        ev.marginalize_part(X2, Region::FULL);
        assert!((brute_force_marginal(&net, &ev).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn worked_example_mpe() {
        let mut ev = IndicatorValues::new();
        ev.set_part(X1, Region::FULL, true);
        ev.marginalize_part(X2, Region::FULL);
        let (assignment, value) = brute_force_mpe(&worked_example(), &ev).unwrap();
        assert!((value - 0.192).abs() < 1e-12);
        assert_eq!(assignment.part_values(X2, Region::FULL), Some([1.0, 0.0]));
    }

    #[test]
    fn random_networks_are_valid_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let net = random_network(&mut rng, 10);
            let report = validate(&net);
            assert!(report.is_valid(), "{:?}", report.violations);
            assert!(net.variables().len() <= 10);
        }
    }

    #[test]
    fn size_guard_is_enforced() {
        let mut b = NetworkBuilder::new();
        let leaves: Vec<NodeId> = (0..11).map(|p| b.part_leaf(PartId(p), Region::FULL, Polarity::Positive)).collect();
        let root = b.product(&leaves);
        let net = b.finish(root);
        let mut ev = IndicatorValues::new();
        for p in 0..11 {
            ev.marginalize_part(PartId(p), Region::FULL);
        }
        assert!(matches!(brute_force_marginal(&net, &ev), Err(Error::SizeGuard(_))));
    }
}
