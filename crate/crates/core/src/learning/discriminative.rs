//! Margin training: for a positive/negative image pair with slack
//! ξ = max(0, 1 − (V(I_m) − V(I_n))), move each sum edge by η·ξ·Δt/w where Δt
//! is the difference of the two max-tree traversal counts.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Mode, TrainConfig};
use crate::data::ImageRecord;
use crate::error::{Error, Result};
use crate::inference::{backtrack, traversal_difference};
use crate::network::{
    forward_from_leaves, image_indicators, leaf_log_values, EdgeId, IndicatorValues, Network, NodeId, Semantics, WEIGHT_FLOOR,
};
use crate::structure::SharedGroup;

#[derive(Debug, Clone, PartialEq)]
pub struct MarginRecord {
    pub positive: String,
    pub negative: String,
    /// ξ_mn ≥ 0; zero iff V(I_m) ≥ V(I_n) + 1.
    pub slack: f64,
}

fn root_value(network: &Network, leaves: &[f64]) -> Result<f64> {
    let v = forward_from_leaves(network, leaves.to_vec(), Semantics::Sum)?.root_value();
    if v.is_nan() {
        return Err(Error::NonFinite { node: network.root(), message: "NaN root value".into() });
    }
    Ok(v)
}

/// Slack of the pair and the additive weight changes η·ξ·Δt_i/w_i, computed
/// from the current weights. No changes when the margin is met.
pub fn margin_deltas(
    network: &Network,
    positive: &IndicatorValues,
    negative: &IndicatorValues,
    eta: f64,
) -> Result<(f64, BTreeMap<EdgeId, f64>)> {
    let pos = leaf_log_values(network, positive)?;
    let neg = leaf_log_values(network, negative)?;
    deltas_from_leaves(network, &pos, &neg, eta)
}

fn deltas_from_leaves(network: &Network, pos: &[f64], neg: &[f64], eta: f64) -> Result<(f64, BTreeMap<EdgeId, f64>)> {
    let slack = (1.0 - (root_value(network, pos)? - root_value(network, neg)?)).max(0.0);
    let mut deltas = BTreeMap::new();
    if slack == 0.0 {
        return Ok((slack, deltas));
    }
    let tm = backtrack(network, &forward_from_leaves(network, pos.to_vec(), Semantics::Max)?)?.0;
    let tn = backtrack(network, &forward_from_leaves(network, neg.to_vec(), Semantics::Max)?)?.0;
    for (e, dt) in traversal_difference(&tm, &tn)? {
        if let Some(w) = network.weight(e) {
            deltas.insert(e, eta * slack * dt as f64 / w.max(WEIGHT_FLOOR));
        }
    }
    Ok((slack, deltas))
}

/// Adds the changes, floors at the weight floor and renormalizes every
/// touched sum node.
pub fn apply_deltas(network: &mut Network, deltas: &BTreeMap<EdgeId, f64>) -> Result<()> {
    let mut touched: BTreeSet<NodeId> = BTreeSet::new();
    for (&e, &d) in deltas {
        let w = network.weight(e).ok_or_else(|| Error::Contract(format!("edge {} is not a sum edge", e.0)))?;
        network.set_weight(e, (w + d).max(WEIGHT_FLOOR));
        touched.insert(network.edge(e).parent);
    }
    for s in touched {
        network.normalize_node(s)?;
    }
    Ok(())
}

/// One margin update of `network` on a positive and a negative image.
pub fn discriminative_step(
    network: &mut Network,
    positive: &ImageRecord,
    negative: &ImageRecord,
    eta: f64,
) -> Result<MarginRecord> {
    let pos = image_indicators(network, positive);
    let neg = image_indicators(network, negative);
    let (slack, deltas) = margin_deltas(network, &pos, &neg, eta)?;
    if !deltas.is_empty() {
        apply_deltas(network, &deltas)?;
    }
    Ok(MarginRecord { positive: positive.id.clone(), negative: negative.id.clone(), slack })
}

/// How often edges were moved during margin training.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UpdateCounts {
    /// Per network: updates per edge from that network's own pairs.
    pub per_network: Vec<BTreeMap<EdgeId, usize>>,
    /// Per shared group: updates it received from each participating network,
    /// as (network index, count).
    pub per_group: Vec<Vec<(usize, usize)>>,
}

impl UpdateCounts {
    /// Total updates a shared group received from all its networks.
    pub fn group_total(&self, group: usize) -> usize {
        self.per_group[group].iter().map(|&(_, c)| c).sum()
    }
}

struct ClassData {
    fit_pos: Vec<usize>,
    fit_neg: Vec<usize>,
    held_pairs: Vec<(usize, usize)>,
    /// Leaf log values of every record under this class's network.
    evidence: Vec<Vec<f64>>,
}

fn mean_margin(network: &Network, data: &ClassData) -> Result<f64> {
    if data.held_pairs.is_empty() {
        return Ok(0.0);
    }
    let values: Vec<f64> = (0..data.evidence.len()).map(|_| f64::NAN).collect();
    let mut cache = values;
    let mut total = 0.0;
    for &(m, n) in &data.held_pairs {
        for i in [m, n] {
            if cache[i].is_nan() {
                cache[i] = root_value(network, &data.evidence[i])?;
            }
        }
        total += cache[m] - cache[n];
    }
    Ok(total / data.held_pairs.len() as f64)
}

fn class_seed(seed: u64, class: usize, salt: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ ((class as u64) << 20) ^ salt
}

/// Connected groups of networks linked by shared groups, each ascending.
fn components(n: usize, groups: &[SharedGroup]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        if p[x] != x {
            let r = find(p, p[x]);
            p[x] = r;
        }
        p[x]
    }
    for g in groups {
        let nets: Vec<usize> = g.networks().into_iter().collect();
        for w in nets.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        out.entry(r).or_default().push(i);
    }
    out.into_values().collect()
}

/// Margin training of one network per class over `records`. Shared groups
/// accumulate updates from every class of their component during an epoch
/// and apply them together at the epoch's end; private edges are updated at
/// once. A fifth of the records is held out; training stops after
/// `early_stop_patience` epochs without a better held-out mean margin and the
/// best weights are restored.
pub(crate) fn train_discriminative(
    networks: &mut [Network],
    records: &[&ImageRecord],
    groups: &[SharedGroup],
    config: &TrainConfig,
) -> Result<(Vec<String>, UpdateCounts)> {
    let k = networks.len();
    // stratified hold-out split, shared by all classes
    let mut held = vec![false; records.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(class_seed(config.seed, 0, 0x401d));
    for c in 0..k {
        let mut idx: Vec<usize> = (0..records.len()).filter(|&i| records[i].class.0 as usize == c).collect();
        idx.shuffle(&mut rng);
        let n_held = idx.len() / 5;
        for &i in &idx[..n_held] {
            held[i] = true;
        }
    }
    let data: Vec<ClassData> = (0..k)
        .into_par_iter()
        .map(|c| -> Result<ClassData> {
            let evidence = records
                .iter()
                .map(|r| leaf_log_values(&networks[c], &image_indicators(&networks[c], r)))
                .collect::<Result<Vec<_>>>()?;
            let is_pos = |i: usize| records[i].class.0 as usize == c;
            let fit_pos: Vec<usize> = (0..records.len()).filter(|&i| !held[i] && is_pos(i)).collect();
            let fit_neg: Vec<usize> = (0..records.len()).filter(|&i| !held[i] && !is_pos(i)).collect();
            let hp: Vec<usize> = (0..records.len()).filter(|&i| held[i] && is_pos(i)).collect();
            let hn: Vec<usize> = (0..records.len()).filter(|&i| held[i] && !is_pos(i)).collect();
            let mut held_pairs: Vec<(usize, usize)> = hp.iter().flat_map(|&m| hn.iter().map(move |&n| (m, n))).collect();
            if held_pairs.len() > config.max_pairs_per_epoch {
                let mut r = ChaCha8Rng::seed_from_u64(class_seed(config.seed, c, 0x4e1d));
                held_pairs.shuffle(&mut r);
                held_pairs.truncate(config.max_pairs_per_epoch);
            }
            Ok(ClassData { fit_pos, fit_neg, held_pairs, evidence })
        })
        .collect::<Result<_>>()?;

    let mut edge_group: Vec<BTreeMap<EdgeId, usize>> = vec![BTreeMap::new(); k];
    for (g, group) in groups.iter().enumerate() {
        for &(n, e) in &group.members {
            edge_group[n].insert(e, g);
        }
    }

    let comps = components(k, groups);
    let mut slots: Vec<Option<Network>> = networks.iter_mut().map(|n| Some(std::mem::replace(n, n.clone()))).collect();
    let jobs: Vec<Vec<(usize, Network)>> = comps
        .iter()
        .map(|c| c.iter().map(|&i| (i, slots[i].take().expect("each class once"))).collect())
        .collect();

    type CompOut = (Vec<(usize, Network)>, Vec<String>, Vec<(usize, BTreeMap<EdgeId, usize>)>, BTreeMap<usize, BTreeMap<usize, usize>>);
    let results: Vec<CompOut> = jobs
        .into_par_iter()
        .map(|mut members| -> Result<CompOut> {
            let mut log = Vec::new();
            let mut rngs: Vec<ChaCha8Rng> =
                members.iter().map(|(c, _)| ChaCha8Rng::seed_from_u64(class_seed(config.seed, *c, 0xd15c))).collect();
            let score = |members: &[(usize, Network)]| -> Result<f64> {
                let mut s = 0.0;
                for (c, net) in members {
                    s += mean_margin(net, &data[*c])?;
                }
                Ok(s / members.len() as f64)
            };
            let mut best = score(&members)?;
            let tags: Vec<String> = members.iter().map(|(c, _)| c.to_string()).collect();
            let tags = tags.join(",");
            log.push(format!("classes {tags} stage disc start heldout_mean_margin {best:.6e}"));
            let mut snapshot: Vec<Network> = members.iter().map(|(_, n)| n.clone()).collect();
            let mut since_best = 0;
            let mut best_epoch: Option<usize> = None;
            let mut edge_counts: Vec<BTreeMap<EdgeId, usize>> = vec![BTreeMap::new(); members.len()];
            let mut group_counts: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
            for epoch in 0..config.discriminative_epochs {
                let mut group_acc: BTreeMap<usize, f64> = BTreeMap::new();
                for (slot, (c, net)) in members.iter_mut().enumerate() {
                    let d = &data[*c];
                    if d.fit_pos.is_empty() || d.fit_neg.is_empty() {
                        continue;
                    }
                    let n_pairs = config.max_pairs_per_epoch.min(d.fit_pos.len() * d.fit_neg.len());
                    let (mut violations, mut slack_sum) = (0usize, 0.0);
                    for _ in 0..n_pairs {
                        let m = d.fit_pos[rngs[slot].random_range(0..d.fit_pos.len())];
                        let n = d.fit_neg[rngs[slot].random_range(0..d.fit_neg.len())];
                        let (slack, deltas) = deltas_from_leaves(net, &d.evidence[m], &d.evidence[n], config.learning_rate)?;
                        slack_sum += slack;
                        if slack > 0.0 {
                            violations += 1;
                        }
                        let mut private = BTreeMap::new();
                        for (e, delta) in deltas {
                            *edge_counts[slot].entry(e).or_insert(0) += 1;
                            match edge_group[*c].get(&e) {
                                Some(&g) => {
                                    *group_acc.entry(g).or_insert(0.0) += delta;
                                    *group_counts.entry(g).or_default().entry(*c).or_insert(0) += 1;
                                }
                                None => {
                                    private.insert(e, delta);
                                }
                            }
                        }
                        if !private.is_empty() {
                            apply_deltas(net, &private)?;
                        }
                    }
                    let denom = n_pairs.max(1) as f64;
                    log.push(format!(
                        "class {c} stage disc epoch {epoch} mean_slack {:.6} violation_rate {:.4}",
                        slack_sum / denom,
                        violations as f64 / denom
                    ));
                }
                // shared parameters move together
                let mut per_member: Vec<BTreeMap<EdgeId, f64>> = vec![BTreeMap::new(); members.len()];
                for (&g, &delta) in &group_acc {
                    for &(n, e) in &groups[g].members {
                        if let Some(slot) = members.iter().position(|(c, _)| *c == n) {
                            *per_member[slot].entry(e).or_insert(0.0) += delta;
                        }
                    }
                }
                for (slot, deltas) in per_member.iter().enumerate() {
                    if !deltas.is_empty() {
                        apply_deltas(&mut members[slot].1, deltas)?;
                    }
                }
                let now = score(&members)?;
                log.push(format!("classes {tags} stage disc epoch {epoch} heldout_mean_margin {now:.6e}"));
                if now > best {
                    best = now;
                    best_epoch = Some(epoch);
                    snapshot = members.iter().map(|(_, n)| n.clone()).collect();
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= config.early_stop_patience {
                        break;
                    }
                }
            }
            let kept = best_epoch.map_or_else(|| "start".to_string(), |e| format!("epoch {e}"));
            log.push(format!("classes {tags} stage disc keep {kept} heldout_mean_margin {best:.6e}"));
            for ((_, net), snap) in members.iter_mut().zip(snapshot) {
                *net = snap;
            }
            let counts = members.iter().map(|(c, _)| *c).zip(edge_counts).collect();
            Ok((members, log, counts, group_counts))
        })
        .collect::<Result<_>>()?;

    let mut log = Vec::new();
    let mut counts = UpdateCounts { per_network: vec![BTreeMap::new(); k], per_group: vec![Vec::new(); groups.len()] };
    for (members, l, edge_counts, group_counts) in results {
        for (c, net) in members {
            slots[c] = Some(net);
        }
        log.extend(l);
        for (c, m) in edge_counts {
            counts.per_network[c] = m;
        }
        for (g, per) in group_counts {
            counts.per_group[g] = per.into_iter().collect();
        }
    }
    for (dst, src) in networks.iter_mut().zip(slots) {
        *dst = src.expect("every class returned");
    }
    Ok((log, counts))
}

/// Joint margin training of class networks whose shared edges are given by
/// `groups` (from structure sharing).
pub fn joint_train(
    networks: &mut [Network],
    records: &[&ImageRecord],
    groups: &[SharedGroup],
    config: &TrainConfig,
) -> Result<(Vec<String>, UpdateCounts)> {
    if config.mode != Mode::JhsSpn {
        return Err(Error::Contract(format!("joint training requires mode jhs-spn, got {}", config.mode)));
    }
    train_discriminative(networks, records, groups, config)
}
