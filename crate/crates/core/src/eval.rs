//! Ranking and accuracy metrics, and pair ablation.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::data::{Dataset, ImageRecord};
use crate::error::{Error, Result};
use crate::learning::{classify, ModelBundle};
use crate::network::{forward_from_leaves, image_indicators, leaf_log_values, ClassId, NodeId, Semantics, VariableId};
use crate::spatial::PairKey;
use crate::structure::modeled_pairs;

/// Interpolation-free average precision: mean of precision@rank over the
/// positives, ranking by descending score (ties keep input order).
/// Returns 0 with no positives.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> f64 {
    assert_eq!(scores.len(), positive.len(), "one label per score");
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    let (mut hits, mut total) = (0usize, 0.0);
    for (rank, &i) in order.iter().enumerate() {
        if positive[i] {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    if hits == 0 { 0.0 } else { total / hits as f64 }
}

pub fn mean_average_precision(aps: &[f64]) -> f64 {
    if aps.is_empty() { 0.0 } else { aps.iter().sum::<f64>() / aps.len() as f64 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub average_precision: Vec<f64>,
    pub mean_average_precision: f64,
    /// Fraction of each class's images labelled correctly.
    pub class_accuracy: Vec<f64>,
    pub accuracy: f64,
    /// confusion[true][predicted]
    pub confusion: Vec<Vec<usize>>,
}

impl EvalReport {
    /// `key: value` lines in a fixed order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let k = self.average_precision.len();
        let _ = writeln!(s, "classes: {k}");
        let _ = writeln!(s, "accuracy: {:.6}", self.accuracy);
        let _ = writeln!(s, "map: {:.6}", self.mean_average_precision);
        for c in 0..k {
            let _ = writeln!(s, "ap.{c}: {:.6}", self.average_precision[c]);
        }
        for c in 0..k {
            let _ = writeln!(s, "accuracy.{c}: {:.6}", self.class_accuracy[c]);
        }
        for (c, row) in self.confusion.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(usize::to_string).collect();
            let _ = writeln!(s, "confusion.{c}: {}", cells.join(" "));
        }
        s
    }
}

fn check_vocabulary(bundle: &ModelBundle, dataset: &Dataset) -> Result<()> {
    if dataset.num_parts != bundle.num_parts || dataset.num_classes as usize != bundle.num_classes() {
        return Err(Error::VocabularyMismatch(format!(
            "model has {} parts / {} classes, data has {} / {}",
            bundle.num_parts,
            bundle.num_classes(),
            dataset.num_parts,
            dataset.num_classes
        )));
    }
    dataset.check()
}

pub fn report_from_scores(scores: &[Vec<f64>], labels: &[ClassId], k: usize) -> EvalReport {
    let mut confusion = vec![vec![0usize; k]; k];
    for (s, &l) in scores.iter().zip(labels) {
        let mut pred = 0;
        for c in 1..k {
            if s[c] > s[pred] {
                pred = c;
            }
        }
        confusion[l.0 as usize][pred] += 1;
    }
    let average_precision: Vec<f64> = (0..k)
        .map(|c| {
            let col: Vec<f64> = scores.iter().map(|s| s[c]).collect();
            let pos: Vec<bool> = labels.iter().map(|l| l.0 as usize == c).collect();
            average_precision(&col, &pos)
        })
        .collect();
    let class_accuracy = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let n: usize = row.iter().sum();
            if n == 0 { 0.0 } else { row[c] as f64 / n as f64 }
        })
        .collect();
    let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
    EvalReport {
        mean_average_precision: mean_average_precision(&average_precision),
        average_precision,
        class_accuracy,
        accuracy: if labels.is_empty() { 0.0 } else { correct as f64 / labels.len() as f64 },
        confusion,
    }
}

/// Scores every image with every class network and summarizes.
pub fn evaluate_bundle(bundle: &ModelBundle, dataset: &Dataset) -> Result<EvalReport> {
    check_vocabulary(bundle, dataset)?;
    let scores: Vec<Vec<f64>> = dataset
        .records
        .par_iter()
        .map(|r| classify(bundle, r).map(|c| c.scores))
        .collect::<Result<_>>()?;
    let labels: Vec<ClassId> = dataset.records.iter().map(|r| r.class).collect();
    Ok(report_from_scores(&scores, &labels, bundle.num_classes()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairAblation {
    pub pair: PairKey,
    pub accuracy: f64,
    /// Baseline accuracy minus accuracy with the pair disabled.
    pub drop: f64,
}

/// Leaf log values of every image under every class network.
fn leaf_table(bundle: &ModelBundle, images: &[ImageRecord]) -> Result<Vec<Vec<Vec<f64>>>> {
    images
        .par_iter()
        .map(|img| {
            bundle.networks.iter().map(|net| leaf_log_values(net, &image_indicators(net, img))).collect()
        })
        .collect()
}

/// Accuracy with the indicators of `ablate` (every region) forced to 1.
fn accuracy_with(
    bundle: &ModelBundle,
    images: &[ImageRecord],
    leaves: &[Vec<Vec<f64>>],
    ablate: Option<PairKey>,
) -> Result<f64> {
    let ablated: Vec<Vec<NodeId>> = bundle
        .networks
        .iter()
        .map(|net| {
            net.indicators()
                .filter(|(_, ind)| matches!(ind.variable(), VariableId::Pair { pair, .. } if Some(pair) == ablate))
                .map(|(node, _)| node)
                .collect()
        })
        .collect();
    let correct: Vec<bool> = images
        .par_iter()
        .zip(leaves)
        .map(|(img, per_class)| -> Result<bool> {
            let mut best: Option<(usize, f64)> = None;
            for (c, net) in bundle.networks.iter().enumerate() {
                let mut values = per_class[c].clone();
                for node in &ablated[c] {
                    values[node.index()] = 0.0;
                }
                let s = forward_from_leaves(net, values, Semantics::Sum)?.root_log();
                if s.is_nan() {
                    return Err(Error::NonFinite { node: net.root(), message: format!("image {}", img.id) });
                }
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((c, s));
                }
            }
            Ok(best.map(|(c, _)| c) == Some(img.class.0 as usize))
        })
        .collect::<Result<_>>()?;
    Ok(correct.iter().filter(|&&c| c).count() as f64 / images.len().max(1) as f64)
}

/// Disables each modeled pair in turn (all its relation indicators set to 1
/// in every region of every class network) and measures the accuracy drop.
/// Sorted by drop, largest first; ties by pair.
pub fn ablate_pairs(bundle: &ModelBundle, dataset: &Dataset) -> Result<(f64, Vec<PairAblation>)> {
    check_vocabulary(bundle, dataset)?;
    let leaves = leaf_table(bundle, &dataset.records)?;
    let base = accuracy_with(bundle, &dataset.records, &leaves, None)?;
    let pairs: BTreeSet<PairKey> = bundle.networks.iter().flat_map(modeled_pairs).collect();
    let mut out = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let accuracy = accuracy_with(bundle, &dataset.records, &leaves, Some(pair))?;
        out.push(PairAblation { pair, accuracy, drop: base - accuracy });
    }
    out.sort_by(|a, b| b.drop.total_cmp(&a.drop).then(a.pair.cmp(&b.pair)));
    Ok((base, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ap_definitions() {
        assert_eq!(average_precision(&[0.9, 0.8, 0.1, 0.0], &[true, true, false, false]), 1.0);
        assert_eq!(average_precision(&[0.9, 0.1, 0.2], &[true, false, false]), 1.0);
        // positives at ranks 2 and 3: (1/2 + 2/3) / 2
        let ap = average_precision(&[0.9, 0.5, 0.4, 0.1], &[false, true, true, false]);
        assert!((ap - (0.5 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(average_precision(&[0.3], &[false]), 0.0);
    }

    #[test]
    fn random_ranking_ap_near_prevalence() {
        use rand::{Rng, SeedableRng};
        let mut total = 0.0;
        for seed in 0..20 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let scores: Vec<f64> = (0..400).map(|_| rng.random()).collect();
            let labels: Vec<bool> = (0..400).map(|i| i % 2 == 0).collect();
            total += average_precision(&scores, &labels);
        }
        assert!((total / 20.0 - 0.5).abs() < 0.1);
    }

    #[test]
    fn report_counts() {
        let scores = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let labels = vec![ClassId(0), ClassId(1), ClassId(1)];
        let r = report_from_scores(&scores, &labels, 2);
        // the tie goes to class 0
        assert_eq!(r.confusion, vec![vec![1, 0], vec![1, 1]]);
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.class_accuracy, vec![1.0, 0.5]);
        let text = r.to_text();
        assert!(text.starts_with("classes: 2\naccuracy: 0.666667\nmap: "));
        assert!(text.contains("confusion.1: 1 1\n"));
    }
}
