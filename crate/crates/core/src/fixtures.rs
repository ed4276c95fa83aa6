//! Small hand-built networks used by tests, the oracle suite and `verify`.

use crate::network::{Network, NetworkBuilder, NodeId, Polarity, VariableId};
use crate::spatial::{build_pair_gadget, PairKey, PartId, Region};

pub const X1: PartId = PartId(0);
pub const X2: PartId = PartId(1);

/// The two-variable network of the classic worked example:
/// root = 0.8·P1 + 0.2·P2, P1 = S1·S2, P2 = S3·S4 with
/// S1 = 0.3 x1 + 0.7 x̄1, S2 = 0.8 x2 + 0.2 x̄2,
/// S3 = 0.4 x1 + 0.6 x̄1, S4 = 0.1 x2 + 0.9 x̄2.
pub fn worked_example() -> Network {
    worked_example_perturbed(0.0)
}

/// [`worked_example`] with `delta` added to the 0.3 weight of S1 (not renormalized).
pub fn worked_example_perturbed(delta: f64) -> Network {
    let r = Region::FULL;
    let mut b = NetworkBuilder::new();
    let x1 = b.part_leaf(X1, r, Polarity::Positive);
    let nx1 = b.part_leaf(X1, r, Polarity::Negative);
    let x2 = b.part_leaf(X2, r, Polarity::Positive);
    let nx2 = b.part_leaf(X2, r, Polarity::Negative);
    let s1 = b.sum(&[(x1, 0.3 + delta), (nx1, 0.7)]);
    let s2 = b.sum(&[(x2, 0.8), (nx2, 0.2)]);
    let s3 = b.sum(&[(x1, 0.4), (nx1, 0.6)]);
    let s4 = b.sum(&[(x2, 0.1), (nx2, 0.9)]);
    let p1 = b.product(&[s1, s2]);
    let p2 = b.product(&[s3, s4]);
    let root = b.sum(&[(p1, 0.8), (p2, 0.2)]);
    b.finish(root)
}

pub fn x_var(part: PartId) -> VariableId {
    VariableId::Part { part, region: Region::FULL }
}

/// A lone pair gadget over parts 0 and 1 on the whole image.
pub fn gadget() -> (Network, NodeId) {
    let mut b = NetworkBuilder::new();
    let g = build_pair_gadget(&mut b, PairKey::new(X1, X2).expect("distinct parts"), Region::FULL);
    (b.finish(g.sum), g.sum)
}

/// Chain of `depth` alternating sum/product layers over parts `0..depth+1`.
/// Every sum node lies on every root-to-leaf path through its scope.
pub fn chain(depth: usize, weights: &[(f64, f64)]) -> Network {
    let r = Region::FULL;
    let mut b = NetworkBuilder::new();
    let leaf_sum = |b: &mut NetworkBuilder, p: u32, w: (f64, f64)| {
        let pos = b.part_leaf(PartId(p), r, Polarity::Positive);
        let neg = b.part_leaf(PartId(p), r, Polarity::Negative);
        b.sum(&[(pos, w.0), (neg, w.1)])
    };
    let w = |i: usize| weights.get(i).copied().unwrap_or((0.5, 0.5));
    let mut top = leaf_sum(&mut b, 0, w(0));
    for d in 1..=depth {
        let other = leaf_sum(&mut b, d as u32, w(d));
        let prod = b.product(&[top, other]);
        top = b.sum(&[(prod, 1.0)]);
    }
    b.finish(top)
}
