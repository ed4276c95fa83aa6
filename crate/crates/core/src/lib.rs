//! Hierarchical spatial sum-product networks for part-based image
//! classification.
//!
//! Images are bags of detected parts with center locations. Each class gets
//! a network whose leaves are part-presence indicators and pairwise spatial
//! relation indicators, organised over a learned hierarchy of image
//! partitions. Weights are fit with hard EM on positives and then refined
//! with a max-product margin update.

// `!(x >= 0.0)` is used on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod inference;
pub mod learning;
pub mod network;
pub mod oracle;
pub mod spatial;
pub mod structure;
pub mod verify;

pub use error::{Error, Result};
