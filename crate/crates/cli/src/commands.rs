use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use hsspn::data::{
    agglomerate, generate_synthetic, load_dataset, mirror_preset, read_features, save_dataset, shared_preset,
    to_clusters_string, two_level_preset, AgglomerateConfig, Dataset, SyntheticSpec,
};
use hsspn::eval::{ablate_pairs, evaluate_bundle};
use hsspn::learning::{classify as classify_image, train_all, ModelBundle};
use hsspn::structure::{modeled_pairs, pair_count};
use hsspn::verify::{run_suite, SuiteConfig};

use crate::config::RunConfig;
use crate::Failure;

/// Prints `text` and, when asked, also writes it to `out`.
fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    print!("{text}");
    if let Some(path) = out {
        std::fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn load_data(path: &Path) -> Result<Dataset, Failure> {
    let (dataset, _) = load_dataset(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    dataset.check().map_err(Failure::input)?;
    Ok(dataset)
}

fn load_model(dir: &Path) -> Result<ModelBundle, Failure> {
    ModelBundle::load(dir).map_err(|e| Failure::Input(format!("{}: {e}", dir.display())))
}

pub fn generate(
    spec_path: Option<&Path>,
    preset: Option<&str>,
    images: Option<usize>,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), Failure> {
    let mut spec = match (spec_path, preset) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            SyntheticSpec::from_toml_str(&text).map_err(|e| Failure::Input(e.to_string()))?
        }
        (None, Some(name)) => {
            let (n, s) = (images.unwrap_or(200), seed.unwrap_or(0));
            match name {
                "mirror" => mirror_preset(n, s),
                "shared" => shared_preset(n, s),
                "two-level" => two_level_preset(n, s),
                other => {
                    return Err(Failure::Input(format!(
                        "unknown preset `{other}` (expected mirror, shared or two-level)"
                    )))
                }
            }
        }
        _ => return Err(Failure::Input("give either a spec file or --preset".into())),
    };
    if let Some(n) = images {
        spec.images_per_class = n;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    let dataset = generate_synthetic(&spec).map_err(|e| Failure::Input(e.to_string()))?;
    save_dataset(&dataset, out).map_err(|e| Failure::Input(e.to_string()))?;
    println!("images: {}", dataset.records.len());
    println!("classes: {}", dataset.num_classes);
    println!("parts: {}", dataset.num_parts);
    Ok(())
}

pub fn cluster(features: &Path, rc: &RunConfig, out: &Path) -> Result<(), Failure> {
    let features = read_features(features).map_err(|e| Failure::Input(e.to_string()))?;
    let n_c = rc.n_c.ok_or_else(|| Failure::Input("--n-c is required".into()))?;
    let k_init = rc.k_init.unwrap_or(n_c);
    let config = AgglomerateConfig { k_init, n_c, drop_fraction: rc.drop_fraction, seed: rc.seed };
    let clusters = agglomerate(&features, &config).map_err(|e| Failure::Input(e.to_string()))?;
    let text = to_clusters_string(&clusters);
    std::fs::write(out, &text).map_err(|e| Failure::Input(format!("{}: {e}", out.display())))?;
    println!("features: {}", features.len());
    println!("clusters: {}", clusters.len());
    Ok(())
}

pub fn train(data: &Path, rc: &RunConfig, out: &Path) -> Result<(), Failure> {
    let dataset = load_data(data)?;
    rc.structure.validate().map_err(|e| Failure::Input(e.to_string()))?;
    rc.train.validate().map_err(|e| Failure::Input(e.to_string()))?;
    let (bundle, report) =
        train_all(&dataset, &rc.structure, &rc.train).map_err(|e| Failure::Training(format!("training failed: {e}")))?;
    bundle.save(out).map_err(|e| Failure::Training(format!("writing the model failed: {e}")))?;

    let mut text = String::new();
    let _ = writeln!(text, "mode: {}", report.mode);
    let _ = writeln!(text, "classes: {}", report.classes.len());
    let _ = writeln!(text, "flat_pair_count: {}", report.flat_pair_count);
    for c in &report.classes {
        let _ = writeln!(text, "gadgets.{}: {}", c.class, c.gadgets);
    }
    for c in &report.classes {
        let _ = writeln!(text, "modeled_pairs.{}: {}", c.class, c.modeled_pairs);
    }
    let _ = writeln!(text, "total_gadgets: {}", report.total_gadgets());
    let _ = writeln!(text, "shared_groups: {}", bundle.shared_groups.len());
    print!("{text}");
    Ok(())
}

pub fn classify(model: &Path, data: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let bundle = load_model(model)?;
    let dataset = load_data(data)?;
    let mut text = String::new();
    for img in &dataset.records {
        let c = classify_image(&bundle, img).map_err(Failure::input)?;
        let scores: Vec<String> = c.scores.iter().map(|s| format!("{s:.6}")).collect();
        let _ = writeln!(text, "image {}: label {} scores {}", img.id, c.label, scores.join(" "));
    }
    emit(&text, out)
}

pub fn evaluate(model: &Path, data: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let bundle = load_model(model)?;
    let dataset = load_data(data)?;
    let report = evaluate_bundle(&bundle, &dataset).map_err(Failure::input)?;
    emit(&report.to_text(), out)
}

pub fn inspect(model: &Path, data: Option<&Path>, ablate: Option<usize>, out: Option<&Path>) -> Result<(), Failure> {
    let bundle = load_model(model)?;
    let mut text = String::new();
    let t = u64::from(bundle.num_parts);
    let _ = writeln!(text, "mode: {}", bundle.mode);
    let _ = writeln!(text, "classes: {}", bundle.num_classes());
    let _ = writeln!(text, "parts: {t}");
    let _ = writeln!(text, "flat_pairs_unordered: {}", pair_count(t));
    let _ = writeln!(text, "flat_pairs_ordered: {}", t * t.saturating_sub(1));
    let _ = writeln!(text, "shared_groups: {}", bundle.shared_groups.len());
    let mut all_pairs = BTreeSet::new();
    for (k, net) in bundle.networks.iter().enumerate() {
        let pairs = modeled_pairs(net);
        let _ = writeln!(
            text,
            "class {k}: nodes {} edges {} shared_edges {} gadgets {} modeled_pairs {}",
            net.node_count(),
            net.edge_count(),
            net.shared_edges().len(),
            net.gadgets().len(),
            pairs.len()
        );
        all_pairs.extend(pairs);
    }
    let _ = writeln!(text, "modeled_pairs: {}", all_pairs.len());

    if let (Some(k), Some(data)) = (ablate, data) {
        let dataset = load_data(data)?;
        let (base, ranked) = ablate_pairs(&bundle, &dataset).map_err(Failure::input)?;
        let shown = if k > ranked.len() {
            log::warn!("--ablate-pairs {k} exceeds the {} modeled pairs; showing all", ranked.len());
            ranked.len()
        } else {
            k
        };
        let _ = writeln!(text, "ablation_base_accuracy: {base:.6}");
        for (i, a) in ranked.iter().take(shown).enumerate() {
            let _ = writeln!(
                text,
                "ablation {}: pair {}-{} accuracy {:.6} drop {:.6}",
                i + 1,
                a.pair.a(),
                a.pair.b(),
                a.accuracy,
                a.drop
            );
        }
    }
    emit(&text, out)
}

pub fn verify(seed: u64, perturb: f64) -> Result<(), Failure> {
    let config = SuiteConfig { perturb, seed, ..SuiteConfig::default() };
    let checks = run_suite(&config).map_err(|e| Failure::Verify(format!("oracle suite aborted: {e}")))?;
    for c in &checks {
        println!("{}", c.line());
    }
    let passed = checks.iter().filter(|c| c.passed).count();
    println!("verify: {passed}/{} passed", checks.len());
    if passed == checks.len() {
        Ok(())
    } else {
        Err(Failure::Verify(format!("{} check(s) failed", checks.len() - passed)))
    }
}
