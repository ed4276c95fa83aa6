//! Line-oriented model file.
//!
//! ```text
//! spn-model v1
//! class 0
//! node 0 part 3 pos 0,0,20,20
//! node 1 spatial 1 4 left 0,0,20,20
//! node 2 marginal pair 1 4 0,0,20,20
//! node 3 const
//! node 4 sum
//! node 5 product
//! edge 4 0 2.5000000000000000e-01
//! edge 5 4
//! root 5
//! shared 0
//! partition 0 0,0,20,20 0,0,20,4 0,4,20,10 0,10,20,20
//! ```
//!
//! Edge ids are the order of `edge` lines. Weights carry 17 significant digits.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use super::{ClassId, Edge, EdgeId, Indicator, Network, NodeId, NodeKind, PartitionRecord, Polarity, VariableId};
use crate::error::{Error, Result};
use crate::spatial::{PairKey, PartId, Region, SpatialRelation};

pub const FORMAT_VERSION: u32 = 1;
const HEADER: &str = "spn-model v1";

fn region_of(line: usize, s: Option<&str>) -> Result<Region> {
    let s = s.ok_or_else(|| Error::parse(line, "missing region"))?;
    s.parse().map_err(|m: String| Error::parse(line, m))
}

fn int<T: std::str::FromStr>(line: usize, s: Option<&str>, what: &str) -> Result<T> {
    let s = s.ok_or_else(|| Error::parse(line, format!("missing {what}")))?;
    s.parse().map_err(|_| Error::parse(line, format!("bad {what} `{s}`")))
}

fn pair_of(line: usize, a: Option<&str>, b: Option<&str>) -> Result<PairKey> {
    let a = PartId(int(line, a, "part")?);
    let b = PartId(int(line, b, "part")?);
    match PairKey::new(a, b) {
        Some(k) if k.a() == a => Ok(k),
        _ => Err(Error::parse(line, format!("pair ({a},{b}) is not canonical"))),
    }
}

pub fn to_model_string(network: &Network) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    if let Some(c) = network.class_label() {
        let _ = writeln!(out, "class {}", c.0);
    }
    for (id, kind) in network.nodes() {
        let _ = write!(out, "node {} ", id.0);
        match kind {
            NodeKind::Sum => out.push_str("sum"),
            NodeKind::Product => out.push_str("product"),
            NodeKind::Constant => out.push_str("const"),
            NodeKind::Indicator(Indicator::Part { part, region, polarity }) => {
                let _ = write!(out, "part {part} {} {region}", polarity.tag());
            }
            NodeKind::Indicator(Indicator::Spatial { pair, region, relation }) => {
                let _ = write!(out, "spatial {} {} {} {region}", pair.a(), pair.b(), relation.tag());
            }
            NodeKind::Marginal(VariableId::Part { part, region }) => {
                let _ = write!(out, "marginal part {part} {region}");
            }
            NodeKind::Marginal(VariableId::Pair { pair, region }) => {
                let _ = write!(out, "marginal pair {} {} {region}", pair.a(), pair.b());
            }
        }
        out.push('\n');
    }
    for (_, e) in network.edges() {
        match e.weight {
            Some(w) => {
                let _ = writeln!(out, "edge {} {} {w:.16e}", e.parent.0, e.child.0);
            }
            None => {
                let _ = writeln!(out, "edge {} {}", e.parent.0, e.child.0);
            }
        }
    }
    let _ = writeln!(out, "root {}", network.root().0);
    for e in network.shared_edges() {
        let _ = writeln!(out, "shared {}", e.0);
    }
    for p in network.partitions() {
        let _ = write!(out, "partition {} {}", p.depth, p.parent);
        for c in &p.children {
            let _ = write!(out, " {c}");
        }
        out.push('\n');
    }
    out
}

pub fn from_model_str(text: &str) -> Result<Network> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, HEADER)) => {}
        Some((n, other)) => {
            return Err(Error::parse(n, format!("expected header `{HEADER}`, found `{other}`")));
        }
        None => return Err(Error::parse(0, "empty model file")),
    }
    let mut nodes: Vec<NodeKind> = Vec::new();
    let mut edges: Vec<Edge> = Vec::new();
    let mut root: Option<NodeId> = None;
    let mut class: Option<ClassId> = None;
    let mut shared = BTreeSet::new();
    let mut partitions = Vec::new();
    let mut last_line = 1;

    for (n, line) in lines {
        last_line = n;
        let mut tok = line.split_whitespace();
        let key = tok.next().unwrap_or_default();
        match key {
            "class" => class = Some(ClassId(int(n, tok.next(), "class id")?)),
            "node" => {
                let id: u32 = int(n, tok.next(), "node id")?;
                if id as usize != nodes.len() {
                    return Err(Error::parse(n, format!("node id {id} out of sequence (expected {})", nodes.len())));
                }
                let tag = tok.next().ok_or_else(|| Error::parse(n, "missing node kind"))?;
                let kind = match tag {
                    "sum" => NodeKind::Sum,
                    "product" => NodeKind::Product,
                    "const" => NodeKind::Constant,
                    "part" => {
                        let part = PartId(int(n, tok.next(), "part")?);
                        let polarity = match tok.next() {
                            Some("pos") => Polarity::Positive,
                            Some("neg") => Polarity::Negative,
                            other => return Err(Error::parse(n, format!("bad polarity {other:?}"))),
                        };
                        let region = region_of(n, tok.next())?;
                        NodeKind::Indicator(Indicator::Part { part, region, polarity })
                    }
                    "spatial" => {
                        let pair = pair_of(n, tok.next(), tok.next())?;
                        let rel = tok.next().unwrap_or_default();
                        let relation = SpatialRelation::from_tag(rel)
                            .ok_or_else(|| Error::parse(n, format!("unknown relation `{rel}`")))?;
                        let region = region_of(n, tok.next())?;
                        NodeKind::Indicator(Indicator::Spatial { pair, region, relation })
                    }
                    "marginal" => match tok.next() {
                        Some("part") => {
                            let part = PartId(int(n, tok.next(), "part")?);
                            NodeKind::Marginal(VariableId::Part { part, region: region_of(n, tok.next())? })
                        }
                        Some("pair") => {
                            let pair = pair_of(n, tok.next(), tok.next())?;
                            NodeKind::Marginal(VariableId::Pair { pair, region: region_of(n, tok.next())? })
                        }
                        other => return Err(Error::parse(n, format!("unknown marginal variable {other:?}"))),
                    },
                    other => return Err(Error::parse(n, format!("unknown node kind `{other}`"))),
                };
                nodes.push(kind);
            }
            "edge" => {
                let parent: u32 = int(n, tok.next(), "parent id")?;
                let child: u32 = int(n, tok.next(), "child id")?;
                for id in [parent, child] {
                    if id as usize >= nodes.len() {
                        return Err(Error::parse(n, format!("edge references undeclared node {id}")));
                    }
                }
                let parent_kind = nodes[parent as usize];
                let weight = match tok.next() {
                    Some(w) => {
                        let w: f64 = w.parse().map_err(|_| Error::parse(n, format!("bad weight `{w}`")))?;
                        if w.is_nan() || !w.is_finite() {
                            return Err(Error::parse(n, format!("weight {w} is not finite")));
                        }
                        if w < 0.0 {
                            return Err(Error::parse(n, format!("negative weight {w}")));
                        }
                        Some(w)
                    }
                    None => None,
                };
                match (parent_kind, weight) {
                    (NodeKind::Sum, None) => return Err(Error::parse(n, "sum edge without weight")),
                    (NodeKind::Sum, Some(_)) | (_, None) => {}
                    (_, Some(_)) => return Err(Error::parse(n, "weight on an edge whose parent is not a sum")),
                }
                edges.push(Edge { parent: NodeId(parent), child: NodeId(child), weight });
            }
            "root" => {
                let id: u32 = int(n, tok.next(), "root id")?;
                if id as usize >= nodes.len() {
                    return Err(Error::parse(n, format!("root {id} is not a declared node")));
                }
                root = Some(NodeId(id));
            }
            "shared" => {
                let e: u32 = int(n, tok.next(), "edge id")?;
                if e as usize >= edges.len() {
                    return Err(Error::parse(n, format!("shared edge {e} is not declared")));
                }
                shared.insert(EdgeId(e));
            }
            "partition" => {
                let depth: u8 = int(n, tok.next(), "depth")?;
                let parent = region_of(n, tok.next())?;
                let children = tok.map(|t| region_of(n, Some(t))).collect::<Result<Vec<_>>>()?;
                if children.is_empty() {
                    return Err(Error::parse(n, "partition without children"));
                }
                partitions.push(PartitionRecord { depth, parent, children });
                continue;
            }
            other => return Err(Error::parse(n, format!("unknown line kind `{other}`"))),
        }
        if let Some(extra) = tok.next() {
            return Err(Error::parse(n, format!("unexpected trailing token `{extra}`")));
        }
    }
    let root = root.ok_or_else(|| Error::parse(last_line, "truncated model: no root line"))?;
    let mut net = Network::from_parts(nodes, edges, root)?;
    net.set_class_label(class);
    net.set_shared_edges(shared);
    net.set_partitions(partitions);
    Ok(net)
}

pub fn write_model(network: &Network, path: &Path) -> Result<()> {
    std::fs::write(path, to_model_string(network)).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<Network> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_model_str(&text)
}
