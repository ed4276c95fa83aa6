//! Proxy classifier used to rank candidate partitions: L2-regularized
//! logistic regression over concatenated region-local bags of parts.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Partition;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::ClassId;
use crate::spatial::Region;

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionScore {
    pub partition: Partition,
    /// Balanced accuracy on the held-out split.
    pub accuracy: f64,
}

const ITERATIONS: usize = 300;
const STEP: f64 = 1.0;
const L2: f64 = 1e-3;

/// A one-vs-rest problem with a fixed, seeded, stratified 70/30 split.
#[derive(Debug)]
pub struct ProxyScorer<'a> {
    dataset: &'a Dataset,
    labels: Vec<bool>,
    train: Vec<usize>,
    test: Vec<usize>,
}

impl<'a> ProxyScorer<'a> {
    pub fn new(dataset: &'a Dataset, class: ClassId, seed: u64) -> Result<Self> {
        let labels: Vec<bool> = dataset.records.iter().map(|r| r.class == class).collect();
        let positives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
        let negatives: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
        if positives.len() < 4 {
            return Err(Error::InsufficientData(format!(
                "class {class} has {} positive images, at least 4 are needed",
                positives.len()
            )));
        }
        if negatives.len() < 2 {
            return Err(Error::InsufficientData(format!("class {class} has no negative images to score against")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (u64::from(class.0) << 32) ^ 0x5eed);
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for mut group in [positives, negatives] {
            group.shuffle(&mut rng);
            let cut = ((group.len() as f64) * 0.7).round() as usize;
            let cut = cut.clamp(1, group.len() - 1);
            train.extend_from_slice(&group[..cut]);
            test.extend_from_slice(&group[cut..]);
        }
        Ok(ProxyScorer { dataset, labels, train, test })
    }

    /// Indices of the active features; the last index is the bias.
    fn features(&self, image: usize, regions: &[Region]) -> Vec<usize> {
        let rec = &self.dataset.records[image];
        let t = self.dataset.num_parts as usize;
        let mut x = Vec::new();
        for d in &rec.detections {
            if d.part.0 as usize >= t {
                continue;
            }
            for (k, r) in regions.iter().enumerate() {
                if r.contains(d.location, f64::from(rec.width), f64::from(rec.height)) {
                    x.push(k * t + d.part.0 as usize);
                }
            }
        }
        x.sort_unstable();
        x.dedup();
        x.push(regions.len() * t);
        x
    }

    /// Held-out balanced accuracy of a classifier on the bag-of-parts of the
    /// given regions, concatenated.
    pub fn score(&self, regions: &[Region]) -> f64 {
        let xs: Vec<Vec<usize>> = (0..self.labels.len()).map(|i| self.features(i, regions)).collect();
        let dim = regions.len() * self.dataset.num_parts as usize + 1;
        let n_pos = self.train.iter().filter(|&&i| self.labels[i]).count() as f64;
        let n_neg = self.train.len() as f64 - n_pos;
        // class-balanced sample weights
        let weight = |i: usize| if self.labels[i] { 0.5 / n_pos } else { 0.5 / n_neg };
        let mut w = vec![0.0; dim];
        let mut grad = vec![0.0; dim];
        for _ in 0..ITERATIONS {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in &self.train {
                let z: f64 = xs[i].iter().map(|&k| w[k]).sum();
                let p = 1.0 / (1.0 + (-z).exp());
                let y = if self.labels[i] { 1.0 } else { 0.0 };
                let c = weight(i) * (p - y);
                for &k in &xs[i] {
                    grad[k] += c;
                }
            }
            for (k, (wk, g)) in w.iter_mut().zip(&grad).enumerate() {
                let reg = if k + 1 == dim { 0.0 } else { L2 * *wk };
                *wk -= STEP * (g + reg);
            }
        }
        let (mut tp, mut np, mut tn, mut nn) = (0.0, 0.0, 0.0, 0.0);
        for &i in &self.test {
            let z: f64 = xs[i].iter().map(|&k| w[k]).sum();
            let predicted = z > 0.0;
            if self.labels[i] {
                np += 1.0;
                tp += f64::from(u8::from(predicted));
            } else {
                nn += 1.0;
                tn += f64::from(u8::from(!predicted));
            }
        }
        0.5 * (tp / np + tn / nn)
    }
}

/// Scores one candidate partition for `class`.
pub fn score_partition(partition: &Partition, dataset: &Dataset, class: ClassId, seed: u64) -> Result<PartitionScore> {
    let scorer = ProxyScorer::new(dataset, class, seed)?;
    Ok(PartitionScore { partition: partition.clone(), accuracy: scorer.score(&partition.children) })
}

