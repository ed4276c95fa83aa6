//! Feature-vector files (`feat v1 dim=<d>`) and cluster listings.

use std::fmt::Write as _;
use std::path::Path;

use super::Cluster;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub id: String,
    pub values: Vec<f64>,
}

pub fn to_features_string(features: &[FeatureVector]) -> String {
    let dim = features.first().map_or(0, |f| f.values.len());
    let mut out = format!("feat v1 dim={dim}\n");
    for f in features {
        out.push_str(&f.id);
        for v in &f.values {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    out
}

pub fn from_features_str(text: &str) -> Result<Vec<FeatureVector>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let (n, header) = lines.next().ok_or_else(|| Error::parse(0, "empty feature file"))?;
    let dim: usize = header
        .strip_prefix("feat v1 dim=")
        .and_then(|d| d.trim().parse().ok())
        .ok_or_else(|| Error::parse(n, format!("expected `feat v1 dim=<d>` header, found `{header}`")))?;
    let mut out = Vec::new();
    for (n, line) in lines {
        let mut tok = line.split_whitespace();
        let id = tok.next().unwrap_or_default().to_string();
        let values = tok
            .map(|t| match t.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::parse(n, format!("bad feature value `{t}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != dim {
            return Err(Error::parse(n, format!("expected {dim} values, found {}", values.len())));
        }
        out.push(FeatureVector { id, values });
    }
    Ok(out)
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureVector>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_features_str(&text)
}

/// `cluster <idx>: <id list>` lines.
pub fn to_clusters_string(clusters: &[Cluster]) -> String {
    let mut out = String::new();
    for (i, c) in clusters.iter().enumerate() {
        let _ = writeln!(out, "cluster {i}: {}", c.ids.join(" "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_round_trip() {
        let fs = vec![
            FeatureVector { id: "a".into(), values: vec![0.1, -2.5] },
            FeatureVector { id: "b".into(), values: vec![1e-300, 3.0] },
        ];
        assert_eq!(from_features_str(&to_features_string(&fs)).unwrap(), fs);
    }

    #[test]
    fn wrong_dimension_names_line() {
        let err = from_features_str("feat v1 dim=2\na 1 2\nb 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        assert!(from_features_str("feat v1 dim=1\na NaN\n").is_err());
    }
}
