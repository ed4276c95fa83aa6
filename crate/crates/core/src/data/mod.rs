//! Datasets of detected parts, synthetic scene generation and feature-space
//! part clustering.

mod cluster;
mod features;
mod synthetic;

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

pub use cluster::{agglomerate, average_link, euclidean, kmeans, merge_closest, AgglomerateConfig, Cluster};
pub use features::{from_features_str, read_features, to_clusters_string, to_features_string, FeatureVector};
pub use synthetic::{generate_synthetic, mirror_preset, shared_preset, two_level_preset, ClassSpec, Rule, SyntheticSpec};

use crate::error::{Error, Result};
use crate::network::ClassId;
use crate::spatial::{Location, PartId, Region};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub part: PartId,
    pub location: Location,
}

/// One image: its label, pixel extent and the part detections (center
/// pixels) in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub class: ClassId,
    pub width: u32,
    pub height: u32,
    pub detections: Vec<Detection>,
}

impl ImageRecord {
    /// Builds a record from a binary activation vector over the vocabulary
    /// and per-part locations. An active part must carry a location.
    pub fn from_activations(
        id: impl Into<String>,
        class: ClassId,
        width: u32,
        height: u32,
        activations: &[bool],
        locations: &[Option<Location>],
    ) -> Result<Self> {
        let id = id.into();
        let mut detections = Vec::new();
        for (j, &active) in activations.iter().enumerate() {
            if !active {
                continue;
            }
            let location = locations.get(j).copied().flatten().ok_or_else(|| Error::MalformedRecord {
                record: id.clone(),
                message: format!("part {j} is active but has no location"),
            })?;
            detections.push(Detection { part: PartId(j as u32), location });
        }
        Ok(ImageRecord { id, class, width, height, detections })
    }

    /// First detection of `part` (in input order) whose center lies in `region`.
    pub fn locate(&self, part: PartId, region: Region) -> Option<Location> {
        let (w, h) = (f64::from(self.width), f64::from(self.height));
        self.detections.iter().find(|d| d.part == part && region.contains(d.location, w, h)).map(|d| d.location)
    }

    pub fn has_part(&self, part: PartId) -> bool {
        self.detections.iter().any(|d| d.part == part)
    }

    /// Drops later detections of a part that share a grid cell with an
    /// earlier one. Returns the number dropped.
    pub fn dedup_cells(&mut self) -> usize {
        let (w, h) = (f64::from(self.width), f64::from(self.height));
        let mut seen = HashSet::new();
        let before = self.detections.len();
        self.detections.retain(|d| seen.insert((d.part, Region::cell_of(d.location, w, h))));
        before - self.detections.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub num_parts: u32,
    pub num_classes: u32,
    pub records: Vec<ImageRecord>,
}

impl Dataset {
    pub fn vocabulary(&self) -> impl Iterator<Item = PartId> {
        (0..self.num_parts).map(PartId)
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassId> {
        (0..self.num_classes).map(ClassId)
    }

    pub fn of_class(&self, class: ClassId) -> impl Iterator<Item = &ImageRecord> + '_ {
        self.records.iter().filter(move |r| r.class == class)
    }

    /// Checks every detection and label against the vocabulary.
    pub fn check(&self) -> Result<()> {
        for r in &self.records {
            if r.class.0 >= self.num_classes {
                return Err(Error::VocabularyMismatch(format!("image {} has unknown class {}", r.id, r.class)));
            }
            if let Some(d) = r.detections.iter().find(|d| d.part.0 >= self.num_parts) {
                return Err(Error::VocabularyMismatch(format!("image {} has unknown part {}", r.id, d.part)));
            }
        }
        Ok(())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            num_parts: self.num_parts,
            num_classes: self.num_classes,
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    /// Detections dropped because an earlier detection of the same part sat in
    /// the same grid cell.
    pub deduplicated: usize,
}

pub fn to_dataset_string(dataset: &Dataset) -> String {
    let mut out = format!("spn-data v1 t={} classes={}\n", dataset.num_parts, dataset.num_classes);
    for r in &dataset.records {
        let _ = writeln!(out, "img {} {} {} {}", r.id, r.class.0, r.width, r.height);
        for d in &r.detections {
            let _ = writeln!(out, "det {} {} {}", d.part.0, d.location.x, d.location.y);
        }
    }
    out
}

fn header_field(line: usize, tok: Option<&str>, key: &str) -> Result<u32> {
    let tok = tok.ok_or_else(|| Error::parse(line, format!("header is missing {key}=")))?;
    tok.strip_prefix(key)
        .and_then(|v| v.strip_prefix('='))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::parse(line, format!("bad header field `{tok}`")))
}

pub fn from_dataset_str(text: &str) -> Result<(Dataset, LoadReport)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let (n, header) = lines.next().ok_or_else(|| Error::parse(0, "empty dataset file"))?;
    let mut tok = header.split_whitespace();
    if tok.next() != Some("spn-data") || tok.next() != Some("v1") {
        return Err(Error::parse(n, format!("expected `spn-data v1` header, found `{header}`")));
    }
    let num_parts = header_field(n, tok.next(), "t")?;
    let num_classes = header_field(n, tok.next(), "classes")?;
    let mut records: Vec<ImageRecord> = Vec::new();
    let mut ids = HashSet::new();
    for (n, line) in lines {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("img") => {
                let id = tok.next().ok_or_else(|| Error::parse(n, "missing image id"))?.to_string();
                let class: u32 = parse_tok(n, tok.next(), "class")?;
                let width: u32 = parse_tok(n, tok.next(), "width")?;
                let height: u32 = parse_tok(n, tok.next(), "height")?;
                if class >= num_classes {
                    return Err(Error::parse(n, format!("unknown class {class} (classes={num_classes})")));
                }
                if width == 0 || height == 0 {
                    return Err(Error::parse(n, "image has zero extent"));
                }
                if !ids.insert(id.clone()) {
                    return Err(Error::parse(n, format!("duplicate image id `{id}`")));
                }
                records.push(ImageRecord { id, class: ClassId(class), width, height, detections: Vec::new() });
            }
            Some("det") => {
                let part: u32 = parse_tok(n, tok.next(), "part")?;
                let x: f64 = parse_tok(n, tok.next(), "x")?;
                let y: f64 = parse_tok(n, tok.next(), "y")?;
                let rec = records.last_mut().ok_or_else(|| Error::parse(n, "detection before any image"))?;
                if part >= num_parts {
                    return Err(Error::parse(n, format!("unknown part {part} (t={num_parts})")));
                }
                if !(x >= 0.0 && x < f64::from(rec.width)) || !(y >= 0.0 && y < f64::from(rec.height)) {
                    return Err(Error::parse(
                        n,
                        format!("detection ({x}, {y}) outside image {}x{}", rec.width, rec.height),
                    ));
                }
                rec.detections.push(Detection { part: PartId(part), location: Location::new(x, y) });
            }
            Some(other) => return Err(Error::parse(n, format!("unknown line kind `{other}`"))),
            None => continue,
        }
        if let Some(extra) = tok.next() {
            return Err(Error::parse(n, format!("unexpected trailing token `{extra}`")));
        }
    }
    let deduplicated = records.iter_mut().map(ImageRecord::dedup_cells).sum();
    if deduplicated > 0 {
        log::warn!("dropped {deduplicated} duplicate detection(s) sharing a part and grid cell");
    }
    Ok((Dataset { num_parts, num_classes, records }, LoadReport { deduplicated }))
}

fn parse_tok<T: std::str::FromStr>(line: usize, tok: Option<&str>, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::parse(line, format!("missing {what}")))?;
    tok.parse().map_err(|_| Error::parse(line, format!("bad {what} `{tok}`")))
}

pub fn load_dataset(path: &Path) -> Result<(Dataset, LoadReport)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_dataset_str(&text)
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, to_dataset_string(dataset)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "spn-data v1 t=8 classes=2\n\
        img a 0 100 100\n\
        det 0 10.5 20\n\
        det 7 50 50\n\
        img b 1 100 80\n\
        det 3 99.5 79.25\n";

    #[test]
    fn round_trip_is_lossless() {
        let (ds, report) = from_dataset_str(SAMPLE).unwrap();
        assert_eq!(report.deduplicated, 0);
        assert_eq!(ds.records.len(), 2);
        let (again, _) = from_dataset_str(&to_dataset_string(&ds)).unwrap();
        assert_eq!(again, ds);
    }

    #[test]
    fn detection_at_width_is_rejected_with_line() {
        let text = "spn-data v1 t=8 classes=2\nimg a 0 100 100\ndet 1 100 10\n";
        match from_dataset_str(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_class_is_rejected() {
        let text = "spn-data v1 t=8 classes=2\nimg a 2 100 100\n";
        assert!(matches!(from_dataset_str(text), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn duplicates_in_one_cell_keep_the_first() {
        let text = "spn-data v1 t=8 classes=1\nimg a 0 100 100\ndet 7 11 11\ndet 7 12 13\ndet 7 80 80\n";
        let (ds, report) = from_dataset_str(text).unwrap();
        assert_eq!(report.deduplicated, 1);
        let kept: Vec<f64> = ds.records[0].detections.iter().map(|d| d.location.x).collect();
        assert_eq!(kept, vec![11.0, 80.0]);
        // dedup is idempotent
        let (again, report) = from_dataset_str(&to_dataset_string(&ds)).unwrap();
        assert_eq!(report.deduplicated, 0);
        assert_eq!(again, ds);
    }

    #[test]
    fn active_part_without_location_is_malformed() {
        let err = ImageRecord::from_activations("x", ClassId(0), 10, 10, &[true, false], &[None, None]);
        assert!(matches!(err, Err(Error::MalformedRecord { .. })));
    }
}
