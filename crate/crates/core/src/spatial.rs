//! Part locations, pairwise spatial relations and image regions.
//!
//! Image coordinates follow the usual convention: `x` grows rightward and `y`
//! grows downward, so a smaller `y` is *above*.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::network::{NetworkBuilder, NodeId};

/// Index of a part in the dataset vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PartId(pub u32);

impl fmt::Display for PartId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Unordered part pair stored canonically with `a < b`. Relations are always
/// expressed as `a` relative to `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PairKey {
    a: PartId,
    b: PartId,
}

impl PairKey {
    /// Returns `None` for a part paired with itself.
    pub fn new(p: PartId, q: PartId) -> Option<Self> {
        match p.cmp(&q) {
            std::cmp::Ordering::Less => Some(PairKey { a: p, b: q }),
            std::cmp::Ordering::Greater => Some(PairKey { a: q, b: p }),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn a(&self) -> PartId {
        self.a
    }

    pub fn b(&self) -> PartId {
        self.b
    }

    pub fn contains(&self, p: PartId) -> bool {
        self.a == p || self.b == p
    }
}

impl fmt::Display for PairKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.a, self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpatialRelation {
    LeftOf,
    RightOf,
    Above,
    Below,
}

impl SpatialRelation {
    pub const ALL: [SpatialRelation; 4] =
        [SpatialRelation::LeftOf, SpatialRelation::RightOf, SpatialRelation::Above, SpatialRelation::Below];

    pub fn index(self) -> usize {
        match self {
            SpatialRelation::LeftOf => 0,
            SpatialRelation::RightOf => 1,
            SpatialRelation::Above => 2,
            SpatialRelation::Below => 3,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            SpatialRelation::LeftOf => "left",
            SpatialRelation::RightOf => "right",
            SpatialRelation::Above => "above",
            SpatialRelation::Below => "below",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.tag() == tag)
    }

    /// The relation seen from the other part of the pair.
    pub fn inverse(self) -> Self {
        match self {
            SpatialRelation::LeftOf => SpatialRelation::RightOf,
            SpatialRelation::RightOf => SpatialRelation::LeftOf,
            SpatialRelation::Above => SpatialRelation::Below,
            SpatialRelation::Below => SpatialRelation::Above,
        }
    }
}

impl fmt::Display for SpatialRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Center pixel of a detected part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub x: f64,
    pub y: f64,
}

impl Location {
    pub fn new(x: f64, y: f64) -> Self {
        Location { x, y }
    }
}

/// The four relation indicators (f_l, f_r, f_a, f_b) of one part relative to another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Relations {
    pub left: bool,
    pub right: bool,
    pub above: bool,
    pub below: bool,
}

impl Relations {
    pub fn get(&self, relation: SpatialRelation) -> bool {
        match relation {
            SpatialRelation::LeftOf => self.left,
            SpatialRelation::RightOf => self.right,
            SpatialRelation::Above => self.above,
            SpatialRelation::Below => self.below,
        }
    }

    pub fn as_array(&self) -> [bool; 4] {
        [self.left, self.right, self.above, self.below]
    }

    /// Indicator values in relation order, 1.0 for a set relation.
    pub fn indicator_values(&self) -> [f64; 4] {
        self.as_array().map(|b| if b { 1.0 } else { 0.0 })
    }

    /// The nine geometrically realisable states: horizontal outcome
    /// (left, right, tie) crossed with vertical outcome (above, below, tie).
    pub fn realizable() -> [Relations; 9] {
        let mut out = [Relations::default(); 9];
        let mut i = 0;
        for h in 0..3 {
            for v in 0..3 {
                out[i] = Relations { left: h == 0, right: h == 1, above: v == 0, below: v == 1 };
                i += 1;
            }
        }
        out
    }
}

/// Relations of `p1` relative to `p2`. Equal coordinates on an axis leave both
/// indicators of that axis unset.
pub fn compute_relations(p1: Location, p2: Location) -> Relations {
    Relations { left: p1.x < p2.x, right: p1.x > p2.x, above: p1.y < p2.y, below: p1.y > p2.y }
}

/// Resolution of the partition cut grid: region coordinates are multiples of 1/GRID.
pub const GRID: u8 = 20;

/// Axis-aligned rectangle on the cut grid, in grid units `[x0, x1) x [y0, y1)`
/// of the normalized image plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Region {
    pub x0: u8,
    pub y0: u8,
    pub x1: u8,
    pub y1: u8,
}

impl Region {
    pub const FULL: Region = Region { x0: 0, y0: 0, x1: GRID, y1: GRID };

    pub fn new(x0: u8, y0: u8, x1: u8, y1: u8) -> Option<Self> {
        (x0 < x1 && y0 < y1 && x1 <= GRID && y1 <= GRID).then_some(Region { x0, y0, x1, y1 })
    }

    pub fn width(&self) -> u8 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u8 {
        self.y1 - self.y0
    }

    /// Area in grid cells.
    pub fn cells(&self) -> u32 {
        u32::from(self.width()) * u32::from(self.height())
    }

    /// Area as a fraction of the image.
    pub fn area(&self) -> f64 {
        f64::from(self.cells()) / f64::from(u32::from(GRID) * u32::from(GRID))
    }

    /// Whether a pixel location inside a `width x height` image falls in this region.
    pub fn contains(&self, loc: Location, width: f64, height: f64) -> bool {
        let g = f64::from(GRID);
        let gx = loc.x * g;
        let gy = loc.y * g;
        gx >= f64::from(self.x0) * width
            && gx < f64::from(self.x1) * width
            && gy >= f64::from(self.y0) * height
            && gy < f64::from(self.y1) * height
    }

    pub fn contains_region(&self, other: &Region) -> bool {
        other.x0 >= self.x0 && other.x1 <= self.x1 && other.y0 >= self.y0 && other.y1 <= self.y1
    }

    pub fn intersects(&self, other: &Region) -> bool {
        self.x0 < other.x1 && other.x0 < self.x1 && self.y0 < other.y1 && other.y0 < self.y1
    }

    /// Grid cell holding a pixel location.
    pub fn cell_of(loc: Location, width: f64, height: f64) -> (u8, u8) {
        let g = f64::from(GRID);
        let cx = ((loc.x * g / width).floor() as i64).clamp(0, i64::from(GRID) - 1);
        let cy = ((loc.y * g / height).floor() as i64).clamp(0, i64::from(GRID) - 1);
        (cx as u8, cy as u8)
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x0, self.y0, self.x1, self.y1)
    }
}

impl FromStr for Region {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 4 {
            return Err(format!("region `{s}` must be x0,y0,x1,y1"));
        }
        let mut v = [0u8; 4];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p.parse().map_err(|_| format!("bad region coordinate `{p}`"))?;
        }
        Region::new(v[0], v[1], v[2], v[3]).ok_or_else(|| format!("degenerate region `{s}`"))
    }
}

/// Node ids of a pair gadget: the combining sum node and its four relation products.
#[derive(Debug, Clone, Copy)]
pub struct PairGadget {
    pub sum: NodeId,
    pub products: [NodeId; 4],
}

/// Adds the pair sub-network: one sum node over four product nodes, each
/// product holding the positive indicators of both parts and one relation
/// indicator. Sum edges start uniform at 0.25, in relation order
/// left, right, above, below.
pub fn build_pair_gadget(builder: &mut NetworkBuilder, pair: PairKey, region: Region) -> PairGadget {
    let xa = builder.part_leaf(pair.a(), region, crate::network::Polarity::Positive);
    let xb = builder.part_leaf(pair.b(), region, crate::network::Polarity::Positive);
    let mut products = [NodeId(0); 4];
    for (slot, relation) in products.iter_mut().zip(SpatialRelation::ALL) {
        let f = builder.spatial_leaf(pair, region, relation);
        *slot = builder.product(&[xa, xb, f]);
    }
    let sum = builder.sum(&products.map(|p| (p, 0.25)));
    PairGadget { sum, products }
}
