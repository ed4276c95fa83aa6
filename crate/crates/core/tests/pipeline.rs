use hsspn::data::{from_dataset_str, generate_synthetic, mirror_preset, shared_preset, to_dataset_string, Dataset};
use hsspn::eval::{ablate_pairs, evaluate_bundle};
use hsspn::learning::{classify, joint_train, train_all, Mode, ModelBundle, TrainConfig};
use hsspn::network::{evaluate, from_model_str, image_indicators, to_model_string, validate, ClassId};
use hsspn::structure::{pair_count, StructureConfig};
use hsspn::Error;

fn quick(mode: Mode, seed: u64) -> (StructureConfig, TrainConfig) {
    (
        StructureConfig { seed, ..StructureConfig::default() },
        TrainConfig { mode, seed, generative_epochs: 5, discriminative_epochs: 2, ..TrainConfig::default() },
    )
}

fn mirror(images: usize, seed: u64) -> Dataset {
    generate_synthetic(&mirror_preset(images, seed)).unwrap()
}

#[test]
fn dataset_text_round_trips() {
    let ds = mirror(20, 1);
    let text = to_dataset_string(&ds);
    let (back, report) = from_dataset_str(&text).unwrap();
    assert_eq!(report.deduplicated, 0);
    assert_eq!(back, ds);
    assert_eq!(to_dataset_string(&back), text);
}

#[test]
fn trained_networks_are_valid_and_survive_the_model_format() {
    let train = mirror(40, 2);
    let (sc, tc) = quick(Mode::IhsSpn, 2);
    let (bundle, _) = train_all(&train, &sc, &tc).unwrap();
    for net in &bundle.networks {
        assert!(validate(net).is_valid());
        let back = from_model_str(&to_model_string(net)).unwrap();
        for img in train.records.iter().take(10) {
            let a = evaluate(net, &image_indicators(net, img)).unwrap().root_log();
            let b = evaluate(&back, &image_indicators(&back, img)).unwrap().root_log();
            assert_eq!(a, b);
        }
    }
}

#[test]
fn bundle_round_trip_preserves_predictions() {
    let train = mirror(40, 3);
    let test = mirror(20, 4);
    let (sc, tc) = quick(Mode::JhsSpn, 3);
    let (bundle, _) = train_all(&train, &sc, &tc).unwrap();
    let dir = tempfile::tempdir().unwrap();
    bundle.save(dir.path()).unwrap();
    let back = ModelBundle::load(dir.path()).unwrap();
    assert_eq!(back.mode, Mode::JhsSpn);
    assert_eq!(back.shared_groups, bundle.shared_groups);
    for img in &test.records {
        assert_eq!(classify(&bundle, img).unwrap(), classify(&back, img).unwrap());
    }
    assert_eq!(evaluate_bundle(&bundle, &test).unwrap(), evaluate_bundle(&back, &test).unwrap());
}

#[test]
fn flat_mode_models_every_pair_and_hierarchy_models_fewer() {
    let train = mirror(40, 5);
    let (sc, tc) = quick(Mode::FsSpn, 5);
    let (_, flat) = train_all(&train, &sc, &tc).unwrap();
    assert_eq!(flat.flat_pair_count, pair_count(8));
    assert!(flat.classes.iter().all(|c| c.modeled_pairs as u64 == pair_count(8)));
    let (sc, tc) = quick(Mode::IhsSpn, 5);
    let (_, hier) = train_all(&train, &sc, &tc).unwrap();
    assert!(hier.classes.iter().all(|c| (c.modeled_pairs as u64) < pair_count(8)));
}

#[test]
fn training_is_deterministic() {
    let train = generate_synthetic(&shared_preset(20, 6)).unwrap();
    let (sc, tc) = quick(Mode::JhsSpn, 6);
    let (a, ra) = train_all(&train, &sc, &tc).unwrap();
    let (b, rb) = train_all(&train, &sc, &tc).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    assert!(!a.shared_groups.is_empty());
}

#[test]
fn joint_training_needs_joint_mode() {
    let train = mirror(10, 7);
    let (sc, tc) = quick(Mode::IhsSpn, 7);
    let (mut bundle, _) = train_all(&train, &sc, &tc).unwrap();
    let records: Vec<_> = train.records.iter().collect();
    let err = joint_train(&mut bundle.networks, &records, &[], &tc).unwrap_err();
    assert!(matches!(err, Error::Contract(_)));
}

#[test]
fn single_class_data_cannot_be_trained() {
    let mut ds = mirror(10, 8);
    ds.records.retain(|r| r.class == ClassId(0));
    ds.num_classes = 1;
    let (sc, tc) = quick(Mode::Spn, 8);
    assert!(train_all(&ds, &sc, &tc).is_err());
}

#[test]
fn ablating_pairs_that_never_co_occur_changes_nothing() {
    let train = mirror(40, 9);
    let (sc, tc) = quick(Mode::FsSpn, 9);
    let (bundle, _) = train_all(&train, &sc, &tc).unwrap();
    // test images carrying only parts 0..4: pairs touching 5..7 never occur
    let mut test = mirror(20, 10);
    for r in &mut test.records {
        r.detections.retain(|d| d.part.0 < 5);
    }
    let (_, ranked) = ablate_pairs(&bundle, &test).unwrap();
    assert_eq!(ranked.len() as u64, pair_count(8));
    for a in ranked.iter().filter(|a| a.pair.b().0 >= 5) {
        assert_eq!(a.drop, 0.0, "{:?}", a.pair);
    }
}

#[test]
fn vocabulary_mismatch_is_reported() {
    let train = mirror(10, 11);
    let (sc, tc) = quick(Mode::Spn, 11);
    let (bundle, _) = train_all(&train, &sc, &tc).unwrap();
    let other = generate_synthetic(&shared_preset(5, 1)).unwrap();
    assert!(matches!(evaluate_bundle(&bundle, &other), Err(Error::VocabularyMismatch(_))));
    let foreign = other.records.iter().find(|r| r.detections.iter().any(|d| d.part.0 >= 8)).unwrap();
    assert!(matches!(classify(&bundle, foreign), Err(Error::VocabularyMismatch(_))));
}
