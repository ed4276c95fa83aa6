//! Synthetic scenes with planted part placements and pairwise relations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Detection, ImageRecord};
use crate::error::{Error, Result};
use crate::network::ClassId;
use crate::spatial::{compute_relations, Location, PartId, SpatialRelation};

/// A planted placement. Regions are `[x0, y0, x1, y1]` in normalized image
/// coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Rule {
    /// The part appears uniformly inside the region.
    Part { part: u32, region: [f64; 4] },
    /// Part `a` stands in `relation` to part `b`, both inside the region, `gap`
    /// pixels apart along the relation axis (before jitter).
    Pair { a: u32, b: u32, relation: SpatialRelation, region: [f64; 4], gap: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    #[serde(default)]
    pub rules: Vec<Rule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_parts: u32,
    pub width: u32,
    pub height: u32,
    pub images_per_class: usize,
    /// Per-part probability of a background detection anywhere in the image.
    pub rho_bg: f64,
    /// Probability that a planted rule is left out of an image.
    pub rho_drop: f64,
    /// Gaussian jitter (pixels) applied to planted locations.
    pub jitter: f64,
    pub seed: u64,
    pub classes: Vec<ClassSpec>,
}

fn spec_err(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Spec { field: field.into(), message: message.into() }
}

impl SyntheticSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: SyntheticSpec = toml::from_str(text).map_err(|e| {
            let field = e.span().map(|s| text[s].to_string()).unwrap_or_else(|| "<file>".into());
            spec_err(field, e.message())
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(spec_err("classes", "at least one class is required"));
        }
        if self.width < 2 || self.height < 2 {
            return Err(spec_err("width", "image must be at least 2x2 pixels"));
        }
        for (name, v) in [("rho_bg", self.rho_bg), ("rho_drop", self.rho_drop)] {
            if !(0.0..1.0).contains(&v) {
                return Err(spec_err(name, format!("{v} is outside [0, 1)")));
            }
        }
        if !(self.jitter >= 0.0) || !self.jitter.is_finite() {
            return Err(spec_err("jitter", format!("{} is not a nonnegative number", self.jitter)));
        }
        let (w, h) = (f64::from(self.width), f64::from(self.height));
        for (c, class) in self.classes.iter().enumerate() {
            for (r, rule) in class.rules.iter().enumerate() {
                let field = |f: &str| format!("classes[{c}].rules[{r}].{f}");
                let (parts, region): (Vec<u32>, [f64; 4]) = match *rule {
                    Rule::Part { part, region } => (vec![part], region),
                    Rule::Pair { a, b, region, gap, relation } => {
                        if a == b {
                            return Err(spec_err(field("b"), "a pair needs two distinct parts"));
                        }
                        if !(gap >= 0.0) {
                            return Err(spec_err(field("gap"), "gap must be nonnegative"));
                        }
                        let extent = match relation {
                            SpatialRelation::LeftOf | SpatialRelation::RightOf => (region[2] - region[0]) * w,
                            SpatialRelation::Above | SpatialRelation::Below => (region[3] - region[1]) * h,
                        };
                        if extent < gap + 2.0 {
                            return Err(spec_err(
                                field("region"),
                                format!("{extent:.1}px along the relation axis cannot host a {gap}px gap"),
                            ));
                        }
                        (vec![a, b], region)
                    }
                };
                if let Some(p) = parts.iter().find(|&&p| p >= self.num_parts) {
                    return Err(spec_err(field("part"), format!("part {p} outside vocabulary of {}", self.num_parts)));
                }
                let [x0, y0, x1, y1] = region;
                if !(0.0 <= x0 && x0 < x1 && x1 <= 1.0 && 0.0 <= y0 && y0 < y1 && y1 <= 1.0) {
                    return Err(spec_err(field("region"), format!("{region:?} is not a box inside [0,1]^2")));
                }
                if (x1 - x0) * w < 2.0 || (y1 - y0) * h < 2.0 {
                    return Err(spec_err(field("region"), "region is smaller than 2 pixels"));
                }
            }
        }
        Ok(())
    }
}

struct PixelBox {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl PixelBox {
    fn new(region: [f64; 4], w: f64, h: f64) -> Self {
        // keep strictly inside the image so x < width holds after rounding
        PixelBox { x0: region[0] * w, y0: region[1] * h, x1: region[2] * w - 0.01, y1: region[3] * h - 0.01 }
    }

    fn clip(&self, x: f64, y: f64) -> Location {
        Location::new(x.clamp(self.x0, self.x1), y.clamp(self.y0, self.y1))
    }

    fn uniform(&self, rng: &mut impl Rng) -> Location {
        Location::new(rng.random_range(self.x0..self.x1), rng.random_range(self.y0..self.y1))
    }
}

fn place_pair(
    rng: &mut impl Rng,
    bx: &PixelBox,
    relation: SpatialRelation,
    gap: f64,
    jitter: &Normal<f64>,
) -> (Location, Location) {
    let horizontal = matches!(relation, SpatialRelation::LeftOf | SpatialRelation::RightOf);
    // sign: +1 when `a` sits at the larger coordinate
    let sign = match relation {
        SpatialRelation::LeftOf | SpatialRelation::Above => -1.0,
        SpatialRelation::RightOf | SpatialRelation::Below => 1.0,
    };
    for _ in 0..100 {
        let (lo, hi) = if horizontal { (bx.x0, bx.x1) } else { (bx.y0, bx.y1) };
        let mid = rng.random_range(lo + gap / 2.0..=hi - gap / 2.0);
        let (olo, ohi) = if horizontal { (bx.y0, bx.y1) } else { (bx.x0, bx.x1) };
        let other = rng.random_range(olo..ohi);
        let a_axis = mid + sign * gap / 2.0 + jitter.sample(rng);
        let b_axis = mid - sign * gap / 2.0 + jitter.sample(rng);
        let a_other = other + jitter.sample(rng);
        let b_other = other + jitter.sample(rng);
        let (la, lb) = if horizontal {
            (bx.clip(a_axis, a_other), bx.clip(b_axis, b_other))
        } else {
            (bx.clip(a_other, a_axis), bx.clip(b_other, b_axis))
        };
        if compute_relations(la, lb).get(relation) {
            return (la, lb);
        }
    }
    // jitter kept flipping the order; fall back to the noiseless placement
    let (lo, hi) = if horizontal { (bx.x0, bx.x1) } else { (bx.y0, bx.y1) };
    let mid = (lo + hi) / 2.0;
    let half = (gap / 2.0).max(0.5);
    let (a_axis, b_axis) = (mid + sign * half, mid - sign * half);
    if horizontal {
        let y = (bx.y0 + bx.y1) / 2.0;
        (Location::new(a_axis, y), Location::new(b_axis, y))
    } else {
        let x = (bx.x0 + bx.x1) / 2.0;
        (Location::new(x, a_axis), Location::new(x, b_axis))
    }
}

/// Draws `images_per_class` images for every class of the spec.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let jitter = Normal::new(0.0, spec.jitter).map_err(|e| spec_err("jitter", e.to_string()))?;
    let (w, h) = (f64::from(spec.width), f64::from(spec.height));
    let full = PixelBox::new([0.0, 0.0, 1.0, 1.0], w, h);
    let mut records = Vec::new();
    for i in 0..spec.images_per_class {
        for (c, class) in spec.classes.iter().enumerate() {
            let mut detections = Vec::new();
            for rule in &class.rules {
                if rng.random::<f64>() < spec.rho_drop {
                    continue;
                }
                match *rule {
                    Rule::Part { part, region } => {
                        let loc = PixelBox::new(region, w, h).uniform(&mut rng);
                        detections.push(Detection { part: PartId(part), location: loc });
                    }
                    Rule::Pair { a, b, relation, region, gap } => {
                        let (la, lb) = place_pair(&mut rng, &PixelBox::new(region, w, h), relation, gap, &jitter);
                        detections.push(Detection { part: PartId(a), location: la });
                        detections.push(Detection { part: PartId(b), location: lb });
                    }
                }
            }
            for p in 0..spec.num_parts {
                if rng.random::<f64>() < spec.rho_bg {
                    detections.push(Detection { part: PartId(p), location: full.uniform(&mut rng) });
                }
            }
            let mut record = ImageRecord {
                id: format!("c{c}-{i:05}"),
                class: ClassId(c as u32),
                width: spec.width,
                height: spec.height,
                detections,
            };
            record.dedup_cells();
            records.push(record);
        }
    }
    Ok(Dataset { num_parts: spec.num_parts, num_classes: spec.classes.len() as u32, records })
}

fn pair(a: u32, b: u32, relation: SpatialRelation, region: [f64; 4], gap: f64) -> Rule {
    Rule::Pair { a, b, relation, region, gap }
}

/// Two classes, each the left-right mirror image of the other, with the same
/// parts: parts 0 and 1 sit side by side near the center, 0 left of 1 in
/// class 0 and right of it in class 1; a second pair (2 above 3) sits in the
/// top-left corner in class 0 and the top-right corner in class 1.
pub fn mirror_preset(images_per_class: usize, seed: u64) -> SyntheticSpec {
    let center = [0.35, 0.35, 0.65, 0.65];
    let class = |rel, corner| ClassSpec {
        rules: vec![pair(0, 1, rel, center, 8.0), pair(2, 3, SpatialRelation::Above, corner, 8.0)],
    };
    SyntheticSpec {
        num_parts: 8,
        width: 100,
        height: 100,
        images_per_class,
        rho_bg: 0.05,
        rho_drop: 0.1,
        jitter: 1.0,
        seed,
        classes: vec![
            class(SpatialRelation::LeftOf, [0.05, 0.05, 0.3, 0.3]),
            class(SpatialRelation::RightOf, [0.7, 0.05, 0.95, 0.3]),
        ],
    }
}

/// Four classes in two mirror-image couples. Classes 0 and 1 both contain
/// "4 above 5" in the same bottom-center sub-image, place parts 0 and 1 in
/// opposite order near the top, and put part 8 on opposite sides. Classes 2
/// and 3 do the same with "6 below 7", parts 2 and 3, and part 9.
pub fn shared_preset(images_per_class: usize, seed: u64) -> SyntheticSpec {
    let top = [0.3, 0.05, 0.7, 0.35];
    let bottom = [0.3, 0.55, 0.7, 0.95];
    let left = [0.05, 0.35, 0.25, 0.65];
    let right = [0.75, 0.35, 0.95, 0.65];
    let couple = |a, b, side_part, shared: Rule| {
        [(SpatialRelation::LeftOf, left), (SpatialRelation::RightOf, right)].map(|(rel, side)| ClassSpec {
            rules: vec![pair(a, b, rel, top, 8.0), shared.clone(), Rule::Part { part: side_part, region: side }],
        })
    };
    let mut classes = Vec::new();
    classes.extend(couple(0, 1, 8, pair(4, 5, SpatialRelation::Above, bottom, 8.0)));
    classes.extend(couple(2, 3, 9, pair(6, 7, SpatialRelation::Below, bottom, 8.0)));
    SyntheticSpec {
        num_parts: 10,
        width: 100,
        height: 100,
        images_per_class,
        rho_bg: 0.05,
        rho_drop: 0.1,
        jitter: 1.0,
        seed,
        classes,
    }
}

/// Two classes separated by a planted vertical cut at x = 0.4: part 0 sits
/// left of the cut in class 0 and right of it in class 1, part 1 the other
/// way round. Inside the left sub-image a weaker, overlapping second-level
/// split puts part 2 mostly above y = 0.5 in class 0 and mostly below it in
/// class 1.
pub fn two_level_preset(images_per_class: usize, seed: u64) -> SyntheticSpec {
    let part = |part, region| Rule::Part { part, region };
    let (left, right) = ([0.0, 0.0, 0.4, 1.0], [0.4, 0.0, 1.0, 1.0]);
    let c0 = vec![part(0, left), part(1, right), part(2, [0.0, 0.0, 0.4, 0.6])];
    let c1 = vec![part(0, right), part(1, left), part(2, [0.0, 0.4, 0.4, 1.0])];
    SyntheticSpec {
        num_parts: 6,
        width: 100,
        height: 100,
        images_per_class,
        rho_bg: 0.05,
        rho_drop: 0.0,
        jitter: 0.0,
        seed,
        classes: vec![ClassSpec { rules: c0 }, ClassSpec { rules: c1 }],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::to_dataset_string;

    #[test]
    fn noiseless_images_satisfy_every_planted_relation() {
        let mut spec = mirror_preset(50, 3);
        spec.rho_bg = 0.0;
        spec.rho_drop = 0.0;
        let ds = generate_synthetic(&spec).unwrap();
        for r in &ds.records {
            let rel = if r.class.0 == 0 { SpatialRelation::LeftOf } else { SpatialRelation::RightOf };
            let loc = |p| r.detections.iter().find(|d| d.part == PartId(p)).unwrap().location;
            assert!(compute_relations(loc(0), loc(1)).get(rel));
            assert!(compute_relations(loc(2), loc(3)).above);
        }
    }

    #[test]
    fn fixed_seed_gives_identical_bytes() {
        let a = generate_synthetic(&mirror_preset(20, 7)).unwrap();
        let b = generate_synthetic(&mirror_preset(20, 7)).unwrap();
        assert_eq!(to_dataset_string(&a), to_dataset_string(&b));
        let c = generate_synthetic(&mirror_preset(20, 8)).unwrap();
        assert_ne!(to_dataset_string(&a), to_dataset_string(&c));
    }

    #[test]
    fn mirror_classes_share_activation_marginals() {
        let ds = generate_synthetic(&mirror_preset(1000, 11)).unwrap();
        for p in 0..8 {
            let rate = |c: u32| {
                ds.of_class(ClassId(c)).filter(|r| r.has_part(PartId(p))).count() as f64 / 1000.0
            };
            assert!((rate(0) - rate(1)).abs() < 0.05, "part {p}: {} vs {}", rate(0), rate(1));
        }
        // relation statistics of the planted pair are disjoint
        let left = |c: u32| {
            ds.of_class(ClassId(c))
                .filter(|r| {
                    let a = r.detections.iter().find(|d| d.part == PartId(0));
                    let b = r.detections.iter().find(|d| d.part == PartId(1));
                    matches!((a, b), (Some(a), Some(b)) if compute_relations(a.location, b.location).left)
                })
                .count()
        };
        assert!(left(0) > 800 && left(1) < 100);
    }

    #[test]
    fn spec_errors_name_the_field() {
        let mut spec = mirror_preset(10, 1);
        spec.rho_bg = 1.5;
        assert!(matches!(spec.validate(), Err(Error::Spec { ref field, .. }) if field == "rho_bg"));
        let mut spec = mirror_preset(10, 1);
        spec.classes[0].rules[0] = pair(0, 1, SpatialRelation::LeftOf, [0.5, 0.5, 0.51, 0.9], 4.0);
        assert!(matches!(spec.validate(), Err(Error::Spec { ref field, .. }) if field.ends_with("region")));
    }

    #[test]
    fn toml_round_trip() {
        let spec = shared_preset(5, 2);
        assert_eq!(SyntheticSpec::from_toml_str(&spec.to_toml_string()).unwrap(), spec);
    }
}
