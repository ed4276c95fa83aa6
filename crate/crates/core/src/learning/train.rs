//! Training driver and classification.

use rayon::prelude::*;

use super::discriminative::train_discriminative;
use super::{generative_train, prune, GenerativeReport, ModelBundle, Mode, PruneReport, TrainConfig, UpdateCounts};
use crate::data::{Dataset, ImageRecord};
use crate::error::{Error, Result};
use crate::network::{evaluate, image_indicators, ClassId, Network};
use crate::structure::{
    build_bag_network, build_class_network, build_flat_network, find_shared_structures, learn_partition_tree,
    modeled_pairs, pair_count, StructureConfig,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub class: ClassId,
    pub nodes: usize,
    pub edges: usize,
    pub shared_edges: usize,
    /// Pair gadget sub-networks in the final network.
    pub gadgets: usize,
    /// Distinct part pairs with at least one gadget.
    pub modeled_pairs: usize,
    pub generative: GenerativeReport,
    pub prune: PruneReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub mode: Mode,
    pub classes: Vec<ClassReport>,
    /// t(t−1)/2 for the vocabulary, what a flat model has to cover.
    pub flat_pair_count: u64,
    pub updates: UpdateCounts,
}

impl TrainReport {
    pub fn total_gadgets(&self) -> usize {
        self.classes.iter().map(|c| c.gadgets).sum()
    }
}

fn initial_network(dataset: &Dataset, class: ClassId, sc: &StructureConfig, mode: Mode) -> Result<Network> {
    match mode {
        Mode::Spn => Ok(build_bag_network(dataset.num_parts, class)),
        Mode::FsSpn => Ok(build_flat_network(dataset.num_parts, class)),
        Mode::IhsSpn | Mode::JhsSpn => {
            let tree = learn_partition_tree(dataset, class, sc)?;
            build_class_network(&tree, dataset, class, sc)
        }
    }
}

/// Structure, hard EM and pruning per class (in parallel), sharing for
/// JHS-SPN, then margin training: jointly over shared edges for JHS-SPN,
/// per class otherwise.
pub fn train_all(dataset: &Dataset, sc: &StructureConfig, tc: &TrainConfig) -> Result<(ModelBundle, TrainReport)> {
    dataset.check()?;
    sc.validate()?;
    tc.validate()?;
    if dataset.num_classes < 2 {
        return Err(Error::InsufficientData("training needs at least two classes".into()));
    }
    let records: Vec<&ImageRecord> = dataset.records.iter().collect();
    let per_class: Vec<(Network, GenerativeReport, PruneReport, Vec<String>)> = (0..dataset.num_classes)
        .into_par_iter()
        .map(|k| -> Result<_> {
            let class = ClassId(k);
            let positives: Vec<&ImageRecord> = dataset.of_class(class).collect();
            let mut net = initial_network(dataset, class, sc, tc.mode)?;
            let gen = generative_train(&mut net, &positives, tc)?;
            let mut log: Vec<String> = gen
                .mean_log
                .iter()
                .enumerate()
                .map(|(e, v)| format!("class {k} stage gen epoch {e} mean_log {v:.6}"))
                .collect();
            let (pruned, report) = prune(&net, tc.prune_threshold)?;
            log.push(format!(
                "class {k} stage prune edges_removed {} nodes_removed {}",
                report.edges_removed, report.nodes_removed
            ));
            Ok((pruned, gen, report, log))
        })
        .collect::<Result<_>>()?;

    let mut networks = Vec::new();
    let mut log = vec![format!("mode {}", tc.mode)];
    let mut stage1 = Vec::new();
    for (net, gen, pr, l) in per_class {
        networks.push(net);
        stage1.push((gen, pr));
        log.extend(l);
    }
    let groups = if tc.mode == Mode::JhsSpn {
        let sharing = find_shared_structures(&mut networks);
        log.push(format!("sharing groups {}", sharing.groups.len()));
        sharing.groups
    } else {
        Vec::new()
    };
    let (disc_log, updates) = train_discriminative(&mut networks, &records, &groups, tc)?;
    log.extend(disc_log);

    let classes = networks
        .iter()
        .zip(stage1)
        .enumerate()
        .map(|(k, (net, (generative, prune)))| ClassReport {
            class: ClassId(k as u32),
            nodes: net.node_count(),
            edges: net.edge_count(),
            shared_edges: net.shared_edges().len(),
            gadgets: net.gadgets().len(),
            modeled_pairs: modeled_pairs(net).len(),
            generative,
            prune,
        })
        .collect();
    let report = TrainReport { mode: tc.mode, classes, flat_pair_count: pair_count(u64::from(dataset.num_parts)), updates };
    let bundle = ModelBundle { mode: tc.mode, num_parts: dataset.num_parts, networks, shared_groups: groups, log };
    Ok((bundle, report))
}

/// Log root value of the sum network on the image.
pub fn image_score(network: &Network, image: &ImageRecord) -> Result<f64> {
    let v = evaluate(network, &image_indicators(network, image))?.root_log();
    if v.is_nan() {
        return Err(Error::NonFinite { node: network.root(), message: format!("NaN score on image {}", image.id) });
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    /// Log root value per class.
    pub scores: Vec<f64>,
    pub label: ClassId,
}

pub fn classify(bundle: &ModelBundle, image: &ImageRecord) -> Result<Classification> {
    if let Some(d) = image.detections.iter().find(|d| d.part.0 >= bundle.num_parts) {
        return Err(Error::VocabularyMismatch(format!(
            "image {} uses part {} but the model knows {} parts",
            image.id, d.part.0, bundle.num_parts
        )));
    }
    let scores = bundle.networks.iter().map(|n| image_score(n, image)).collect::<Result<Vec<_>>>()?;
    let mut label = 0;
    for (k, &s) in scores.iter().enumerate() {
        if s > scores[label] {
            label = k;
        }
    }
    Ok(Classification { scores, label: ClassId(label as u32) })
}
