//! `hsspn`: generate synthetic part data, learn and train class networks,
//! classify, evaluate, inspect, and run the oracle checks.

mod commands;
mod config;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

/// Why a command stopped; each kind has its own exit code.
#[derive(Debug)]
pub enum Failure {
    /// A verification check failed (exit 1).
    Verify(String),
    /// Unreadable or invalid input, spec or configuration (exit 2).
    Input(String),
    /// Training could not complete (exit 3).
    Training(String),
    /// Model and data disagree on vocabulary or classes (exit 4).
    Mismatch(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Verify(_) => 1,
            Failure::Input(_) => 2,
            Failure::Training(_) => 3,
            Failure::Mismatch(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Verify(m) | Failure::Input(m) | Failure::Training(m) | Failure::Mismatch(m) => m,
        }
    }

    /// Loading and checking errors: mismatches keep their own code.
    pub fn input(e: hsspn::Error) -> Self {
        match e {
            hsspn::Error::VocabularyMismatch(_) => Failure::Mismatch(e.to_string()),
            e => Failure::Input(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "hsspn", version, about = "Hierarchical spatial sum-product networks over part detections")]
struct Cli {
    /// Seed for every random choice of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `key = value` file with any of the tuning keys; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// spn, fs-spn, ihs-spn or jhs-spn.
    #[arg(long, global = true)]
    mode: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset from a TOML spec or a built-in preset.
    Generate {
        /// TOML scene spec.
        spec: Option<PathBuf>,
        /// mirror, shared or two-level.
        #[arg(long, conflicts_with = "spec")]
        preset: Option<String>,
        /// Images per class (overrides the spec).
        #[arg(long)]
        images: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Discover parts by clustering a feature file.
    Cluster {
        features: PathBuf,
        /// Over-segmentation size of the k-means stage.
        #[arg(long)]
        k_init: Option<usize>,
        /// Number of parts to keep.
        #[arg(long)]
        n_c: Option<usize>,
        /// Small-cluster drop threshold as a fraction of the mean size.
        #[arg(long)]
        drop_fraction: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn structure and weights for every class and write a model bundle.
    Train {
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Print the predicted class and per-class scores of every image.
    Classify {
        model: PathBuf,
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Average precision per class, mAP, accuracy and the confusion matrix.
    Evaluate {
        model: PathBuf,
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Network statistics per class, optionally with pair ablation on data.
    ///
    /// Flat pair counts are reported both as unordered pairs t(t-1)/2, which
    /// is what a flat model needs, and as ordered pairs t(t-1); published
    /// figures for the flat model sometimes quote the latter.
    Inspect {
        model: PathBuf,
        /// Held-out data for ablation.
        data: Option<PathBuf>,
        /// Report the k pairs whose removal costs the most accuracy.
        #[arg(long, requires = "data")]
        ablate_pairs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the oracle checks and print a pass/fail table.
    Verify {
        /// Add this to a worked-example weight (tests the checks themselves).
        #[arg(long, hide = true, default_value_t = 0.0)]
        perturb: f64,
    },
}

/// Structure and training knobs; see the config keys of the same names.
#[derive(Args, Debug, Default)]
struct Tuning {
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    candidates: Option<usize>,
    #[arg(long)]
    keep: Option<usize>,
    #[arg(long)]
    depth: Option<u8>,
    #[arg(long)]
    min_region_area: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    generative_epochs: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    prune_threshold: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_pairs_per_epoch: Option<usize>,
    #[arg(long)]
    discriminative_epochs: Option<usize>,
    #[arg(long)]
    early_stop_patience: Option<usize>,
}

impl Tuning {
    fn flags(&self, out: &mut BTreeMap<&'static str, String>) {
        macro_rules! put {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    out.insert(stringify!($field), v.to_string());
                }
            )*};
        }
        put!(
            s,
            candidates,
            keep,
            depth,
            min_region_area,
            tau,
            generative_epochs,
            alpha,
            prune_threshold,
            learning_rate,
            max_pairs_per_epoch,
            discriminative_epochs,
            early_stop_patience
        );
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut flags: BTreeMap<&'static str, String> = BTreeMap::new();
    if let Some(seed) = cli.seed {
        flags.insert("seed", seed.to_string());
    }
    if let Some(mode) = &cli.mode {
        flags.insert("mode", mode.clone());
    }
    match &cli.command {
        Command::Train { tuning, .. } => tuning.flags(&mut flags),
        Command::Cluster { k_init, n_c, drop_fraction, .. } => {
            if let Some(v) = k_init {
                flags.insert("k_init", v.to_string());
            }
            if let Some(v) = n_c {
                flags.insert("n_c", v.to_string());
            }
            if let Some(v) = drop_fraction {
                flags.insert("drop_fraction", v.to_string());
            }
        }
        _ => {}
    }
    let rc = RunConfig::resolve(cli.config.as_deref(), &flags)?;
    let seed_given = cli.seed.is_some() || rc.seed != 0;
    match cli.command {
        Command::Generate { spec, preset, images, out } => {
            rc.echo("generate", &["seed"]);
            commands::generate(spec.as_deref(), preset.as_deref(), images, seed_given.then_some(rc.seed), &out)
        }
        Command::Cluster { features, out, .. } => {
            rc.echo("cluster", &["seed", "k_init", "n_c", "drop_fraction"]);
            commands::cluster(&features, &rc, &out)
        }
        Command::Train { data, out, .. } => {
            rc.echo("train", &config::KEYS[..15]);
            commands::train(&data, &rc, &out)
        }
        Command::Classify { model, data, out } => {
            rc.echo("classify", &[]);
            commands::classify(&model, &data, out.as_deref())
        }
        Command::Evaluate { model, data, out } => {
            rc.echo("evaluate", &[]);
            commands::evaluate(&model, &data, out.as_deref())
        }
        Command::Inspect { model, data, ablate_pairs, out } => {
            rc.echo("inspect", &[]);
            commands::inspect(&model, data.as_deref(), ablate_pairs, out.as_deref())
        }
        Command::Verify { perturb } => {
            rc.echo("verify", &["seed"]);
            commands::verify(rc.seed, perturb)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
