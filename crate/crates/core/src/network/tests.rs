use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::fixtures::{chain, worked_example, gadget, X1, X2};
use crate::oracle::{random_evidence, random_network};

fn worked_evidence(x1: Option<bool>, x2: Option<bool>) -> IndicatorValues {
    let mut ev = IndicatorValues::new();
    for (p, v) in [(X1, x1), (X2, x2)] {
        match v {
            Some(b) => ev.set_part(p, Region::FULL, b),
            None => ev.marginalize_part(p, Region::FULL),
        }
    }
    ev
}

/// Linear-domain evaluation straight from the definition.
pub(crate) fn linear_value(net: &Network, ind: &IndicatorValues) -> f64 {
    let mut v = vec![0.0; net.node_count()];
    for &node in net.order().unwrap() {
        v[node.index()] = match net.kind(node) {
            NodeKind::Indicator(i) => ind.value(i).unwrap(),
            NodeKind::Marginal(_) | NodeKind::Constant => 1.0,
            NodeKind::Product => net.out_edges(node).iter().map(|&e| v[net.edge(e).child.index()]).product(),
            NodeKind::Sum => net
                .out_edges(node)
                .iter()
                .map(|&e| net.edge(e).weight.unwrap() * v[net.edge(e).child.index()])
                .sum(),
        };
    }
    v[net.root().index()]
}

#[test]
fn worked_example_value() {
    let v = evaluate(&worked_example(), &worked_evidence(Some(true), Some(false))).unwrap().root_value();
    assert!((v - 0.12).abs() < 1e-12, "{v}");
}

#[test]
fn all_ones_gives_unit_mass() {
    let v = evaluate(&worked_example(), &worked_evidence(None, None)).unwrap().root_value();
    assert!((v - 1.0).abs() < 1e-12);
}

#[test]
fn missing_indicator_is_incomplete_evidence() {
    let mut ev = IndicatorValues::new();
    ev.set_part(X1, Region::FULL, true);
    assert!(matches!(evaluate(&worked_example(), &ev), Err(Error::IncompleteEvidence { .. })));
}

fn two_way(weights: &[f64]) -> Network {
    let mut b = NetworkBuilder::new();
    let leaves: Vec<NodeId> = (0..weights.len())
        .map(|i| {
            let pos = b.part_leaf(PartId(0), Region::FULL, Polarity::Positive);
            let neg = b.part_leaf(PartId(0), Region::FULL, Polarity::Negative);
            b.sum(&[(pos, 0.1 * (i + 1) as f64), (neg, 1.0)])
        })
        .collect();
    let children: Vec<(NodeId, f64)> = leaves.into_iter().zip(weights.iter().copied()).collect();
    let root = b.sum(&children);
    b.finish(root)
}

fn root_weights(net: &Network) -> Vec<f64> {
    net.out_edges(net.root()).iter().map(|&e| net.weight(e).unwrap()).collect()
}

#[test]
fn normalization_scales_proportionally() {
    let mut net = two_way(&[2.0, 3.0]);
    net.normalize_weights().unwrap();
    let w = root_weights(&net);
    assert!((w[0] - 0.4).abs() < 1e-15 && (w[1] - 0.6).abs() < 1e-15);

    let mut net = two_way(&[5.0, 0.0, 0.0]);
    net.normalize_weights().unwrap();
    assert_eq!(root_weights(&net), vec![1.0, 0.0, 0.0]);

    let mut net = two_way(&[0.0, 0.0]);
    assert!(matches!(net.normalize_weights(), Err(Error::DegenerateNode(_))));
}

#[test]
fn normalized_fixture_is_unchanged() {
    let mut net = worked_example();
    net.normalize_weights().unwrap();
    for ((_, a), (_, b)) in net.edges().zip(worked_example().edges()) {
        if let (Some(x), Some(y)) = (a.weight, b.weight) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn fixture_is_valid() {
    let report = validate(&worked_example());
    assert!(report.is_valid(), "{:?}", report.violations);
    let (g, _) = gadget();
    assert!(validate(&g).is_valid());
}

#[test]
fn self_loop_is_a_cycle() {
    let mut b = NetworkBuilder::new();
    let x = b.part_leaf(X1, Region::FULL, Polarity::Positive);
    let p = b.product(&[x]);
    let mut net = b.finish(p);
    let mut edges: Vec<Edge> = net.edges().map(|(_, e)| *e).collect();
    edges.push(Edge { parent: p, child: p, weight: None });
    net = Network::from_parts(net.nodes().map(|(_, k)| *k).collect(), edges, p).unwrap();
    let report = validate(&net);
    assert!(report.violations.iter().any(|v| matches!(v, Violation::Cycle { .. })));
    assert!(net.order().is_err());
}

#[test]
fn shared_variable_under_product_is_reported() {
    let mut b = NetworkBuilder::new();
    let x = b.part_leaf(X1, Region::FULL, Polarity::Positive);
    let nx = b.part_leaf(X1, Region::FULL, Polarity::Negative);
    let p = b.product(&[x, nx]);
    let report = validate(&b.finish(p));
    assert_eq!(
        report.violations,
        vec![Violation::NotDecomposable { node: p, overlap: vec![VariableId::Part { part: X1, region: Region::FULL }] }]
    );
}

#[test]
fn mixed_scope_sum_is_incomplete_and_orphans_are_unreachable() {
    let mut b = NetworkBuilder::new();
    let x = b.part_leaf(X1, Region::FULL, Polarity::Positive);
    let y = b.part_leaf(X2, Region::FULL, Polarity::Positive);
    let _orphan = b.part_leaf(PartId(9), Region::FULL, Polarity::Positive);
    let s = b.sum(&[(x, 0.5), (y, 0.5)]);
    let report = validate(&b.finish(s));
    assert!(report.violations.contains(&Violation::Incomplete { node: s }));
    assert!(report.violations.iter().any(|v| matches!(v, Violation::Unreachable { .. })));
}

#[test]
fn gadget_values() {
    let (net, _) = gadget();
    let pair = PairKey::new(X1, X2).unwrap();
    let mut ev = IndicatorValues::new();
    ev.set_part(X1, Region::FULL, true);
    ev.set_part(X2, Region::FULL, true);
    ev.set_pair(pair, Region::FULL, crate::spatial::Relations { left: true, below: true, ..Default::default() });
    assert!((evaluate(&net, &ev).unwrap().root_value() - 0.5).abs() < 1e-15);
    ev.set_part(X2, Region::FULL, false);
    assert_eq!(evaluate(&net, &ev).unwrap().root_value(), 0.0);
    ev.marginalize_part(X1, Region::FULL);
    ev.marginalize_part(X2, Region::FULL);
    ev.marginalize_pair(pair, Region::FULL);
    assert!((evaluate(&net, &ev).unwrap().root_value() - 1.0).abs() < 1e-15);
}

#[test]
fn gadget_weight_raises_score_only_where_active() {
    let (mut net, sum) = gadget();
    let pair = PairKey::new(X1, X2).unwrap();
    let mut ev = IndicatorValues::new();
    ev.set_part(X1, Region::FULL, true);
    ev.set_part(X2, Region::FULL, true);
    ev.set_pair(pair, Region::FULL, crate::spatial::Relations { left: true, ..Default::default() });
    let before = evaluate(&net, &ev).unwrap().root_value();
    let left = net.out_edges(sum)[0];
    let right = net.out_edges(sum)[1];
    net.set_weight(left, 0.5);
    assert!(evaluate(&net, &ev).unwrap().root_value() > before);
    let after_left = evaluate(&net, &ev).unwrap().root_value();
    net.set_weight(right, 0.9);
    assert_eq!(evaluate(&net, &ev).unwrap().root_value(), after_left);
}

#[test]
fn log_domain_agrees_with_linear_recheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let net = random_network(&mut rng, 10);
        let ev = random_evidence(&mut rng, &net, 0.3, true);
        let fast = evaluate(&net, &ev).unwrap().root_value();
        let slow = linear_value(&net, &ev);
        assert!((fast - slow).abs() <= 1e-12 * slow.abs().max(1e-300), "{fast} vs {slow}");
    }
}

#[test]
fn evaluation_is_affine_in_each_indicator() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let net = random_network(&mut rng, 8);
        let ev = random_evidence(&mut rng, &net, 0.3, true);
        for (_, ind) in net.indicators() {
            let at = |v: f64| {
                let mut e = ev.clone();
                match ind {
                    Indicator::Part { part, region, polarity } => {
                        let mut pv = e.part_values(part, region).unwrap();
                        pv[(polarity == Polarity::Negative) as usize] = v;
                        e.set_part_values(part, region, pv[0], pv[1]);
                    }
                    Indicator::Spatial { pair, region, relation } => e.set_relation(pair, region, relation, v),
                }
                evaluate(&net, &e).unwrap().root_value()
            };
            let (a, b, c) = (at(0.0), at(0.5), at(1.0));
            assert!(((a + c) / 2.0 - b).abs() <= 1e-12 * (a.abs() + c.abs()).max(1e-300));
        }
    }
}

#[test]
fn marginal_equals_sum_of_one_hot_evaluations() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let net = random_network(&mut rng, 10);
        let ev = random_evidence(&mut rng, &net, 0.0, false);
        for var in net.variables() {
            if let VariableId::Part { part, region } = var {
                let with = |state: Option<bool>| {
                    let mut e = ev.clone();
                    match state {
                        Some(b) => e.set_part(part, region, b),
                        None => e.marginalize_part(part, region),
                    }
                    evaluate(&net, &e).unwrap().root_value()
                };
                let m = with(None);
                let s = with(Some(true)) + with(Some(false));
                assert!((m - s).abs() <= 1e-9 * m.abs().max(1e-300));
            }
        }
    }
}

#[test]
fn unobserved_pair_counts_three_states_per_relation() {
    // network polynomials are linear in each relation indicator; summed over
    // the nine realizable states every relation is on in three of them
    let (net, _) = gadget();
    let pair = PairKey::new(X1, X2).unwrap();
    let mut ev = IndicatorValues::new();
    ev.set_part(X1, Region::FULL, true);
    ev.set_part(X2, Region::FULL, true);
    ev.marginalize_pair(pair, Region::FULL);
    let all_ones = evaluate(&net, &ev).unwrap().root_value();
    let summed = crate::oracle::brute_force_marginal(&net, &ev).unwrap();
    assert!((summed - 3.0 * all_ones).abs() < 1e-12);
}

#[test]
fn scaling_a_chain_sum_scales_the_root() {
    let net = chain(4, &[(0.3, 0.7), (0.6, 0.4), (0.2, 0.8), (0.5, 0.5), (0.9, 0.1)]);
    let mut ev = IndicatorValues::new();
    for p in 0..5 {
        ev.set_part(PartId(p), Region::FULL, p % 2 == 0);
    }
    let base = evaluate(&net, &ev).unwrap().root_value();
    for s in net.sum_nodes() {
        let mut scaled = net.clone();
        for &e in net.out_edges(s) {
            scaled.set_weight(e, 2.5 * net.weight(e).unwrap());
        }
        let v = evaluate(&scaled, &ev).unwrap().root_value();
        assert!((v - 2.5 * base).abs() <= 1e-12 * v);
    }
}

#[test]
fn fixture_round_trips() {
    let mut net = worked_example();
    net.set_class_label(Some(ClassId(3)));
    net.set_shared_edges([EdgeId(1), EdgeId(4)].into());
    net.set_partitions(vec![PartitionRecord {
        depth: 0,
        parent: Region::FULL,
        children: vec![Region::new(0, 0, 20, 4).unwrap(), Region::new(0, 4, 20, 20).unwrap()],
    }]);
    assert_eq!(from_model_str(&to_model_string(&net)).unwrap(), net);
}

#[test]
fn bad_model_files_are_rejected() {
    let good = to_model_string(&worked_example());
    let negative = good.replacen("2.9999999999999999e-1", "-0.1", 1);
    assert_ne!(negative, good);
    assert!(matches!(from_model_str(&negative), Err(Error::Parse { .. })));
    let unknown = good.replacen("node 0 part", "node 0 widget", 1);
    let err = from_model_str(&unknown).unwrap_err();
    assert!(err.to_string().contains("widget"), "{err}");
    let nan = good.replacen("2.9999999999999999e-1", "NaN", 1);
    assert!(from_model_str(&nan).is_err());
    let truncated: String = good.lines().take_while(|l| !l.starts_with("root")).collect::<Vec<_>>().join("\n");
    assert!(matches!(from_model_str(&truncated), Err(Error::Parse { .. })));
    assert!(from_model_str(&good.replacen("spn-model v1", "spn-model v2", 1)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialization_is_identity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng, 10);
        let again = from_model_str(&to_model_string(&net)).unwrap();
        prop_assert_eq!(again, net);
    }

    #[test]
    fn normalization_keeps_argmax(ws in proptest::collection::vec(0.01f64..100.0, 2..6)) {
        let mut net = two_way(&ws);
        net.normalize_weights().unwrap();
        let after = root_weights(&net);
        let argmax = |v: &[f64]| v.iter().enumerate().fold(0, |b, (i, x)| if *x > v[b] { i } else { b });
        prop_assert_eq!(argmax(&after), argmax(&ws));
        prop_assert!((after.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
