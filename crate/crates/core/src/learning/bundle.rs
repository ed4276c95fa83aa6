//! Model bundle directory:
//!
//! ```text
//! <dir>/manifest      spn-bundle v1 / mode / parts / classes / model / group lines
//! <dir>/class-<k>.spn one model file per class
//! <dir>/train.log     one line per class, stage and epoch
//! ```
//!
//! A `group` line lists the `network:edge` members that share one weight.

use std::fmt::Write as _;
use std::path::Path;

use super::Mode;
use crate::error::{Error, Result};
use crate::network::{from_model_str, to_model_string, ClassId, EdgeId, Network};
use crate::structure::SharedGroup;

pub const MANIFEST_VERSION: u32 = 1;
const HEADER: &str = "spn-bundle v1";

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub mode: Mode,
    pub num_parts: u32,
    /// Index k holds the network of class k.
    pub networks: Vec<Network>,
    pub shared_groups: Vec<SharedGroup>,
    pub log: Vec<String>,
}

impl ModelBundle {
    pub fn num_classes(&self) -> usize {
        self.networks.len()
    }

    pub fn manifest_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{HEADER}");
        let _ = writeln!(s, "mode {}", self.mode);
        let _ = writeln!(s, "parts {}", self.num_parts);
        let _ = writeln!(s, "classes {}", self.networks.len());
        for k in 0..self.networks.len() {
            let _ = writeln!(s, "model {k} class-{k}.spn");
        }
        for g in &self.shared_groups {
            let members: Vec<String> = g.members.iter().map(|(n, e)| format!("{n}:{}", e.0)).collect();
            let _ = writeln!(s, "group {}", members.join(" "));
        }
        s
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: &str| {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(path, e))
        };
        write("manifest", &self.manifest_string())?;
        for (k, net) in self.networks.iter().enumerate() {
            write(&format!("class-{k}.spn"), &to_model_string(net))?;
        }
        let mut log = self.log.join("\n");
        log.push('\n');
        write("train.log", &log)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|e| Error::io(path, e))
        };
        let manifest = read("manifest")?;
        let mut lines = manifest.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, HEADER)) => {}
            Some((n, other)) => return Err(Error::parse(n, format!("expected `{HEADER}`, found `{other}`"))),
            None => return Err(Error::parse(1, "empty manifest")),
        }
        let (mut mode, mut parts, mut classes) = (None, None, None);
        let mut files: Vec<(usize, String)> = Vec::new();
        let mut groups = Vec::new();
        for (n, line) in lines {
            let mut tok = line.split_whitespace();
            let Some(kind) = tok.next() else { continue };
            let mut next = |what: &str| tok.next().ok_or_else(|| Error::parse(n, format!("missing {what}")));
            match kind {
                "mode" => mode = Some(next("mode")?.parse::<Mode>().map_err(|m| Error::parse(n, m))?),
                "parts" => parts = Some(next("part count")?.parse::<u32>().map_err(|_| Error::parse(n, "bad part count"))?),
                "classes" => {
                    classes = Some(next("class count")?.parse::<usize>().map_err(|_| Error::parse(n, "bad class count"))?)
                }
                "model" => {
                    let k = next("class")?.parse::<usize>().map_err(|_| Error::parse(n, "bad class index"))?;
                    let file = next("file")?.to_string();
                    if file.contains('/') || file.contains("..") {
                        return Err(Error::parse(n, format!("model file `{file}` must be a plain name")));
                    }
                    files.push((k, file));
                }
                "group" => {
                    let members = tok
                        .map(|t| {
                            let (a, b) = t.split_once(':').ok_or_else(|| Error::parse(n, format!("bad member `{t}`")))?;
                            let net = a.parse::<usize>().map_err(|_| Error::parse(n, format!("bad member `{t}`")))?;
                            let e = b.parse::<u32>().map_err(|_| Error::parse(n, format!("bad member `{t}`")))?;
                            Ok((net, EdgeId(e)))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    groups.push((n, SharedGroup { members }));
                }
                other => return Err(Error::parse(n, format!("unknown manifest line `{other}`"))),
            }
        }
        let mode = mode.ok_or_else(|| Error::parse(0, "manifest has no mode line"))?;
        let num_parts = parts.ok_or_else(|| Error::parse(0, "manifest has no parts line"))?;
        let classes = classes.ok_or_else(|| Error::parse(0, "manifest has no classes line"))?;
        files.sort();
        if files.iter().map(|(k, _)| *k).ne(0..classes) {
            return Err(Error::Contract(format!("manifest must list exactly one model per class 0..{classes}")));
        }
        let mut networks = Vec::with_capacity(classes);
        for (k, file) in files {
            let net = from_model_str(&read(&file)?).map_err(|e| match e {
                Error::Parse { line, message } => Error::Parse { line, message: format!("{file}: {message}") },
                other => other,
            })?;
            if net.class_label() != Some(ClassId(k as u32)) {
                return Err(Error::Contract(format!("{file} is not labelled class {k}")));
            }
            networks.push(net);
        }
        let mut shared_groups = Vec::new();
        for (n, g) in groups {
            for &(net, e) in &g.members {
                if net >= networks.len() || networks[net].weight(e).is_none() {
                    return Err(Error::parse(n, format!("group member {net}:{} is not a sum edge", e.0)));
                }
            }
            shared_groups.push(g);
        }
        let log = read("train.log").map(|t| t.lines().map(str::to_string).collect()).unwrap_or_default();
        Ok(ModelBundle { mode, num_parts, networks, shared_groups, log })
    }
}
