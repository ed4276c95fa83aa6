//! Hard EM on a class's own images: count max-tree traversals, then set
//! each sum edge to its smoothed share of its siblings' counts.

use std::collections::BTreeSet;

use rayon::prelude::*;

use super::TrainConfig;
use crate::data::ImageRecord;
use crate::error::{Error, Result};
use crate::inference::{mpe, to_mpn, TraversalCounts};
use crate::network::{image_indicators, IndicatorValues, Network};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerativeReport {
    /// Mean log max-network value over the images before each epoch's update,
    /// followed by the value after the last update.
    pub mean_log: Vec<f64>,
    pub epochs: usize,
    pub converged: bool,
}

/// Mean log max-network value and summed traversal counts over the images.
fn sweep(network: &Network, evidence: &[IndicatorValues]) -> Result<(f64, TraversalCounts)> {
    let none = BTreeSet::new();
    let per: Vec<(f64, TraversalCounts)> = evidence
        .par_iter()
        .map(|ev| mpe(to_mpn(network), ev, &none).map(|r| (r.root_log, r.traversal)))
        .collect::<Result<_>>()?;
    let mut counts = TraversalCounts::new(network.edge_count());
    let mut total = 0.0;
    for (lv, c) in &per {
        total += lv;
        if lv.is_finite() {
            counts.merge(c);
        }
    }
    Ok((total / per.len() as f64, counts))
}

/// Sets every sum edge to (count + α) / (Σ sibling counts + α · fanout).
/// Sum nodes with nothing to distribute keep their weights.
pub(crate) fn count_update(network: &mut Network, counts: &TraversalCounts, alpha: f64) {
    let sums: Vec<_> = network.sum_nodes().collect();
    for s in sums {
        let outs = network.out_edges(s).to_vec();
        let total: f64 = outs.iter().map(|&e| counts.get(e) as f64).sum::<f64>() + alpha * outs.len() as f64;
        if total <= 0.0 {
            continue;
        }
        for e in outs {
            network.set_weight(e, (counts.get(e) as f64 + alpha) / total);
        }
    }
}

/// Runs hard EM until the mean log value improves by less than 1e-6 or the
/// epoch cap is reached.
pub fn generative_train(network: &mut Network, positives: &[&ImageRecord], config: &TrainConfig) -> Result<GenerativeReport> {
    if positives.is_empty() {
        return Err(Error::InsufficientData("generative training needs at least one positive image".into()));
    }
    let evidence: Vec<IndicatorValues> = positives.iter().map(|img| image_indicators(network, img)).collect();
    let mut report = GenerativeReport::default();
    let mut prev = f64::NEG_INFINITY;
    for epoch in 0..config.generative_epochs {
        let (mean, counts) = sweep(network, &evidence)?;
        if mean.is_nan() {
            return Err(Error::NonFinite { node: network.root(), message: format!("mean log value is NaN at epoch {epoch}") });
        }
        report.mean_log.push(mean);
        if epoch > 0 && mean - prev < 1e-6 {
            report.converged = true;
            break;
        }
        prev = mean;
        count_update(network, &counts, config.alpha);
        report.epochs = epoch + 1;
    }
    if !report.converged {
        let (mean, _) = sweep(network, &evidence)?;
        report.mean_log.push(mean);
    }
    Ok(report)
}
