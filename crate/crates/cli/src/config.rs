//! Run configuration: defaults, then a `key = value` file, then flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use hsspn::learning::{Mode, TrainConfig};
use hsspn::structure::StructureConfig;

use crate::Failure;

/// Every key the config file accepts. Flags use the same names with `-`.
pub const KEYS: &[&str] = &[
    "seed",
    "mode",
    "s",
    "candidates",
    "keep",
    "depth",
    "min_region_area",
    "tau",
    "generative_epochs",
    "alpha",
    "prune_threshold",
    "learning_rate",
    "max_pairs_per_epoch",
    "discriminative_epochs",
    "early_stop_patience",
    "k_init",
    "n_c",
    "drop_fraction",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub structure: StructureConfig,
    pub train: TrainConfig,
    pub k_init: Option<usize>,
    pub n_c: Option<usize>,
    pub drop_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            structure: StructureConfig::default(),
            train: TrainConfig::default(),
            k_init: None,
            n_c: None,
            drop_fraction: 0.0,
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment. Keys may use `-` or `_`.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, Failure> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Failure::Input(format!("config line {}: expected `key = value`, found `{line}`", i + 1)))?;
        let key = k.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(Failure::Input(format!("config line {}: unknown key `{}`", i + 1, k.trim())));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, Failure>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| Failure::Input(format!("config key `{key}`: bad value `{value}`: {e}")))
}

impl RunConfig {
    /// Resolves defaults < config file < flags. `flags` holds the values given
    /// on the command line, keyed like the config file.
    pub fn resolve(file: Option<&Path>, flags: &BTreeMap<&str, String>) -> Result<Self, Failure> {
        let mut values = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
                parse_config_file(&text)?
            }
            None => BTreeMap::new(),
        };
        for (k, v) in flags {
            values.insert(k.to_string(), v.clone());
        }
        let mut rc = RunConfig::default();
        for (key, v) in &values {
            let v = v.as_str();
            let (sc, tc) = (&mut rc.structure, &mut rc.train);
            match key.as_str() {
                "seed" => rc.seed = parse(key, v)?,
                "mode" => tc.mode = v.parse::<Mode>().map_err(|e| Failure::Input(format!("config key `mode`: {e}")))?,
                "s" => sc.s = parse(key, v)?,
                "candidates" => sc.candidates = parse(key, v)?,
                "keep" => sc.keep = parse(key, v)?,
                "depth" => sc.depth = parse(key, v)?,
                "min_region_area" => sc.min_region_area = parse(key, v)?,
                "tau" => sc.tau = parse(key, v)?,
                "generative_epochs" => tc.generative_epochs = parse(key, v)?,
                "alpha" => tc.alpha = parse(key, v)?,
                "prune_threshold" => tc.prune_threshold = parse(key, v)?,
                "learning_rate" => tc.learning_rate = parse(key, v)?,
                "max_pairs_per_epoch" => tc.max_pairs_per_epoch = parse(key, v)?,
                "discriminative_epochs" => tc.discriminative_epochs = parse(key, v)?,
                "early_stop_patience" => tc.early_stop_patience = parse(key, v)?,
                "k_init" => rc.k_init = Some(parse(key, v)?),
                "n_c" => rc.n_c = Some(parse(key, v)?),
                "drop_fraction" => rc.drop_fraction = parse(key, v)?,
                other => return Err(Failure::Input(format!("unknown config key `{other}`"))),
            }
        }
        rc.structure.seed = rc.seed;
        rc.train.seed = rc.seed;
        Ok(rc)
    }

    /// Resolved value of every key, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let (sc, tc) = (&self.structure, &self.train);
        let opt = |v: Option<usize>| v.map_or_else(|| "unset".to_string(), |v| v.to_string());
        vec![
            ("seed", self.seed.to_string()),
            ("mode", tc.mode.to_string()),
            ("s", sc.s.to_string()),
            ("candidates", sc.candidates.to_string()),
            ("keep", sc.keep.to_string()),
            ("depth", sc.depth.to_string()),
            ("min_region_area", sc.min_region_area.to_string()),
            ("tau", sc.tau.to_string()),
            ("generative_epochs", tc.generative_epochs.to_string()),
            ("alpha", tc.alpha.to_string()),
            ("prune_threshold", tc.prune_threshold.to_string()),
            ("learning_rate", tc.learning_rate.to_string()),
            ("max_pairs_per_epoch", tc.max_pairs_per_epoch.to_string()),
            ("discriminative_epochs", tc.discriminative_epochs.to_string()),
            ("early_stop_patience", tc.early_stop_patience.to_string()),
            ("k_init", opt(self.k_init)),
            ("n_c", opt(self.n_c)),
            ("drop_fraction", self.drop_fraction.to_string()),
        ]
    }

    /// Writes the keys relevant to `command` to stderr.
    pub fn echo(&self, command: &str, keys: &[&str]) {
        eprintln!("command: {command}");
        for (k, v) in self.entries() {
            if keys.contains(&k) {
                eprintln!("config {k} = {v}");
            }
        }
    }
}
