//! Parameter learning: hard-EM on positives, pruning, the max-product
//! margin update, joint training of shared edges, and the training driver.

mod bundle;
mod discriminative;
mod generative;
mod prune;
mod train;

use std::fmt;
use std::str::FromStr;

pub use bundle::{ModelBundle, MANIFEST_VERSION};
pub use discriminative::{apply_deltas, discriminative_step, joint_train, margin_deltas, MarginRecord, UpdateCounts};
pub use generative::{generative_train, GenerativeReport};
pub use prune::{prune, PruneReport};
pub use train::{classify, image_score, train_all, Classification, ClassReport, TrainReport};

use crate::error::{Error, Result};
use crate::network::WEIGHT_FLOOR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Whole-image bag of parts, no spatial leaves.
    Spn,
    /// Every pair of the vocabulary at whole-image scale.
    FsSpn,
    /// Hierarchical, classes trained independently.
    IhsSpn,
    /// Hierarchical with shared edges trained jointly.
    JhsSpn,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Spn, Mode::FsSpn, Mode::IhsSpn, Mode::JhsSpn];

    pub fn tag(self) -> &'static str {
        match self {
            Mode::Spn => "spn",
            Mode::FsSpn => "fs-spn",
            Mode::IhsSpn => "ihs-spn",
            Mode::JhsSpn => "jhs-spn",
        }
    }

    pub fn is_hierarchical(self) -> bool {
        matches!(self, Mode::IhsSpn | Mode::JhsSpn)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| format!("unknown mode `{s}` (expected spn, fs-spn, ihs-spn or jhs-spn)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    pub generative_epochs: usize,
    /// Additive smoothing of hard-EM counts (α).
    pub alpha: f64,
    /// Sum edges at or below this weight are pruned (ε_p).
    pub prune_threshold: f64,
    /// Margin step size (η).
    pub learning_rate: f64,
    pub max_pairs_per_epoch: usize,
    pub discriminative_epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::JhsSpn,
            generative_epochs: 20,
            alpha: 0.1,
            prune_threshold: 1e-6,
            learning_rate: 1e-3,
            max_pairs_per_epoch: 2000,
            discriminative_epochs: 10,
            early_stop_patience: 3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| Err(Error::Spec { field: field.into(), message });
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate", format!("{} must be positive", self.learning_rate));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad("alpha", format!("{} must be nonnegative", self.alpha));
        }
        if !(self.prune_threshold >= WEIGHT_FLOOR) {
            return bad("prune_threshold", format!("{} is below the weight floor {WEIGHT_FLOOR}", self.prune_threshold));
        }
        if self.generative_epochs == 0 {
            return bad("generative_epochs", "at least one epoch is required".into());
        }
        Ok(())
    }
}
