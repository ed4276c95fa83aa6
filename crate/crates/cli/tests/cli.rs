use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsspn")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = run(args, cwd);
    assert!(out.status.success(), "hsspn {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// `key: value` lookup in a report.
fn field<'a>(report: &'a str, key: &str) -> &'a str {
    report
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(": ")))
        .unwrap_or_else(|| panic!("no `{key}` in\n{report}"))
}

const QUICK: &str = "generative_epochs = 5\ndiscriminative_epochs = 2\n";

fn small_mirror(dir: &Path, images: &str) {
    ok(&["generate", "--preset", "mirror", "--images", images, "--seed", "3", "--out", "train.txt"], dir);
    ok(&["generate", "--preset", "mirror", "--images", images, "--seed", "4", "--out", "test.txt"], dir);
    std::fs::write(dir.join("quick.cfg"), QUICK).unwrap();
}

#[test]
fn generate_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ok(&["generate", "--preset", "mirror", "--images", "200", "--seed", "7", "--out", "a.txt"], d);
    assert_eq!(field(&out, "images"), "400");
    assert_eq!(field(&out, "classes"), "2");
    ok(&["generate", "--preset", "mirror", "--images", "200", "--seed", "7", "--out", "b.txt"], d);
    assert_eq!(std::fs::read(d.join("a.txt")).unwrap(), std::fs::read(d.join("b.txt")).unwrap());
}

#[test]
fn generate_rejects_bad_specs_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = "num_parts = 4\nwidth = 100\nheight = 100\nimages_per_class = 5\nrho_bg = 1.5\nrho_drop = 0.0\n\
                jitter = 0.0\nseed = 1\n[[classes]]\nrules = []\n";
    std::fs::write(d.join("bad.toml"), spec).unwrap();
    let out = run(&["generate", "bad.toml", "--out", "x.txt"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("rho_bg"), "{}", stderr(&out));

    let out = run(&["generate", "--preset", "spiral", "--out", "x.txt"], d);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["generate", "--out", "x.txt"], d);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn generate_from_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = "num_parts = 3\nwidth = 50\nheight = 50\nimages_per_class = 4\nrho_bg = 0.0\nrho_drop = 0.0\n\
                jitter = 0.0\nseed = 1\n[[classes]]\nrules = [{ kind = \"part\", part = 0, region = [0.0, 0.0, 0.5, 0.5] }]\n\
                [[classes]]\nrules = [{ kind = \"part\", part = 2, region = [0.5, 0.5, 1.0, 1.0] }]\n";
    std::fs::write(d.join("s.toml"), spec).unwrap();
    let out = ok(&["generate", "s.toml", "--images", "6", "--out", "x.txt"], d);
    assert_eq!(field(&out, "images"), "12");
    assert_eq!(field(&out, "parts"), "3");
}

#[test]
fn train_reports_pair_counts_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_mirror(d, "60");
    let flat = ok(&["train", "train.txt", "--mode", "fs-spn", "--config", "quick.cfg", "--out", "flat"], d);
    assert_eq!(field(&flat, "flat_pair_count"), "28");
    assert_eq!(field(&flat, "modeled_pairs.0"), "28");
    assert_eq!(field(&flat, "gadgets.1"), "28");

    let hier = ok(&["train", "train.txt", "--mode", "ihs-spn", "--config", "quick.cfg", "--out", "m1"], d);
    for c in ["0", "1"] {
        let n: u64 = field(&hier, &format!("modeled_pairs.{c}")).parse().unwrap();
        assert!(n < 28, "class {c} models {n} pairs");
    }
    ok(&["train", "train.txt", "--mode", "ihs-spn", "--config", "quick.cfg", "--out", "m2"], d);
    for file in ["manifest", "class-0.spn", "class-1.spn", "train.log"] {
        assert_eq!(std::fs::read(d.join("m1").join(file)).unwrap(), std::fs::read(d.join("m2").join(file)).unwrap());
    }

    let eval = ok(&["evaluate", "m1", "test.txt", "--out", "eval.txt"], d);
    let keys: Vec<&str> = eval.lines().map(|l| l.split(':').next().unwrap()).collect();
    assert_eq!(&keys[..5], ["classes", "accuracy", "map", "ap.0", "ap.1"]);
    let acc: f64 = field(&eval, "accuracy").parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(std::fs::read_to_string(d.join("eval.txt")).unwrap(), eval);

    let labels = ok(&["classify", "m1", "test.txt"], d);
    assert_eq!(labels.lines().count(), 120);
    assert!(labels.lines().all(|l| l.starts_with("image ") && l.contains(" label ")));

    let inspect = ok(&["inspect", "m1", "test.txt", "--ablate-pairs", "2"], d);
    assert_eq!(field(&inspect, "flat_pairs_unordered"), "28");
    assert_eq!(field(&inspect, "flat_pairs_ordered"), "56");
    assert!(inspect.lines().any(|l| l.starts_with("class 0: nodes ") && l.contains(" shared_edges 0 ")));
    assert_eq!(inspect.lines().filter(|l| l.starts_with("ablation ")).count(), 2);

    let out = run(&["inspect", "m1", "test.txt", "--ablate-pairs", "500"], d);
    assert!(out.status.success());
    assert!(stderr(&out).contains("exceeds"), "{}", stderr(&out));
}

#[test]
fn vocabulary_mismatch_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_mirror(d, "30");
    ok(&["train", "train.txt", "--mode", "spn", "--config", "quick.cfg", "--out", "m"], d);
    ok(&["generate", "--preset", "shared", "--images", "5", "--out", "other.txt"], d);
    for cmd in ["evaluate", "classify"] {
        let out = run(&[cmd, "m", "other.txt"], d);
        assert_eq!(out.status.code(), Some(4), "{cmd}: {}", stderr(&out));
    }
    let out = run(&["inspect", "m", "other.txt", "--ablate-pairs", "1"], d);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn training_failure_exits_3_and_bad_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("one.txt"), "spn-data v1 t=2 classes=1\nimg a 0 10 10\ndet 0 1 1\n").unwrap();
    let out = run(&["train", "one.txt", "--out", "m"], d);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));

    let out = run(&["train", "missing.txt", "--out", "m"], d);
    assert_eq!(out.status.code(), Some(2));
    small_mirror(d, "10");
    let out = run(&["train", "train.txt", "--keep", "60", "--out", "m"], d);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["train", "train.txt", "--mode", "deep", "--out", "m"], d);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["evaluate", "nowhere", "test.txt"], d);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_override_config_file_and_config_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_mirror(d, "20");
    std::fs::write(d.join("run.cfg"), "seed = 5\nmode = spn\ngenerative_epochs = 3\n").unwrap();
    let out = run(&["train", "train.txt", "--config", "run.cfg", "--seed", "9", "--out", "m"], d);
    assert!(out.status.success(), "{}", stderr(&out));
    let err = stderr(&out);
    assert!(err.contains("config seed = 9"), "{err}");
    assert!(err.contains("config mode = spn"), "{err}");
    assert!(err.contains("config generative_epochs = 3"), "{err}");

    std::fs::write(d.join("typo.cfg"), "sead = 5\n").unwrap();
    let out = run(&["verify", "--config", "typo.cfg"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sead"));
}

#[test]
fn verify_passes_and_detects_a_perturbed_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ok(&["verify"], d);
    assert!(out.lines().filter(|l| l.starts_with("check ")).all(|l| l.ends_with("PASS") || l.contains(" PASS (")));
    assert!(out.contains("worked-example-value: measured 1.2"));

    let out = run(&["verify", "--perturb", "0.01"], d);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text.lines().find(|l| l.starts_with("check worked-example-value:")).unwrap();
    assert!(line.ends_with("FAIL") && line.contains("expected 1.2") && line.contains("tolerance 1.0e-12"), "{line}");
}

fn blob_features(path: &Path) {
    let centers = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0), (10.0, 10.0)];
    let mut text = String::from("feat v1 dim=2\n");
    for i in 0..40 {
        let (x, y) = centers[i % 4];
        let jitter = (i / 4) as f64 * 0.05;
        text.push_str(&format!("f{i} {} {}\n", x + jitter, y - jitter));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn cluster_recovers_blobs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    blob_features(&d.join("f.txt"));
    let out = ok(&["cluster", "f.txt", "--k-init", "8", "--n-c", "4", "--seed", "2", "--out", "c1.txt"], d);
    assert_eq!(field(&out, "clusters"), "4");
    ok(&["cluster", "f.txt", "--k-init", "8", "--n-c", "4", "--seed", "2", "--out", "c2.txt"], d);
    let c1 = std::fs::read_to_string(d.join("c1.txt")).unwrap();
    assert_eq!(c1, std::fs::read_to_string(d.join("c2.txt")).unwrap());
    for line in c1.lines() {
        let ids: Vec<usize> = line.split(": ").nth(1).unwrap().split(' ').map(|t| t[1..].parse().unwrap()).collect();
        assert_eq!(ids.len(), 10);
        assert!(ids.iter().all(|i| i % 4 == ids[0] % 4), "{line}");
    }

    let out = run(&["cluster", "f.txt", "--k-init", "50", "--n-c", "41", "--out", "c3.txt"], d);
    assert_eq!(out.status.code(), Some(2));
}
