//! Part discovery by over-segmenting k-means followed by average-link merging.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::FeatureVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Indices into the input feature list, ascending.
    pub members: Vec<usize>,
    pub ids: Vec<String>,
    pub centroid: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgglomerateConfig {
    pub k_init: usize,
    pub n_c: usize,
    /// Clusters smaller than this fraction of the mean size are dropped when
    /// they are also far from the rest. Zero disables dropping.
    pub drop_fraction: f64,
    pub seed: u64,
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean pairwise distance between the members of two clusters.
pub fn average_link<A, B>(c1: &[A], c2: &[B], dist: impl Fn(&[f64], &[f64]) -> f64) -> Result<f64>
where
    A: AsRef<[f64]>,
    B: AsRef<[f64]>,
{
    if c1.is_empty() || c2.is_empty() {
        return Err(Error::Contract("average link of an empty cluster".into()));
    }
    let mut total = 0.0;
    for x in c1 {
        for y in c2 {
            total += dist(x.as_ref(), y.as_ref());
        }
    }
    Ok(total / (c1.len() * c2.len()) as f64)
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's k-means with farthest-point seeding (first center drawn from the
/// seed). Returns a cluster index per point; every index in `0..k` is used.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::Contract(format!("k-means with k={k} over {n} points")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq(p, &centers[0])).collect();
    while centers.len() < k {
        let far = (0..n).fold(0, |best, i| if nearest[i] > nearest[best] { i } else { best });
        centers.push(points[far].clone());
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(sq(p, &points[far]));
        }
    }
    let dim = points[0].len();
    let mut assign = vec![0usize; n];
    let mut prev = f64::INFINITY;
    for _ in 0..100 {
        let mut inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (best, d) = centers
                .iter()
                .enumerate()
                .map(|(c, ctr)| (c, sq(p, ctr)))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            assign[i] = best;
            inertia += d;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assign) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed an emptied center at the worst-served point
                let far = (0..n)
                    .max_by(|&i, &j| sq(&points[i], &centers[assign[i]]).total_cmp(&sq(&points[j], &centers[assign[j]])))
                    .unwrap_or(0);
                centers[c] = points[far].clone();
                assign[far] = c;
                continue;
            }
            centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        }
        if prev.is_finite() && (prev - inertia).abs() <= 1e-6 * prev.max(f64::MIN_POSITIVE) {
            break;
        }
        prev = inertia;
    }
    // compact labels so every index in 0..k' is used
    let mut remap = vec![usize::MAX; k];
    let mut next = 0;
    for a in assign.iter_mut() {
        if remap[*a] == usize::MAX {
            remap[*a] = next;
            next += 1;
        }
        *a = remap[*a];
    }
    Ok(assign)
}

/// Merges the closest pair of groups by average link until `n_c` remain.
/// Distances are maintained with the Lance–Williams update. Returns the final
/// groups and the merge sequence as (surviving slot, absorbed slot); ties go
/// to the lexicographically smallest slot pair.
pub fn merge_closest(points: &[Vec<f64>], groups: Vec<Vec<usize>>, n_c: usize) -> (Vec<Vec<usize>>, Vec<(usize, usize)>) {
    let g = groups.len();
    let mut dist: Vec<Vec<f64>> = (0..g)
        .into_par_iter()
        .map(|i| {
            (0..g)
                .map(|j| {
                    let a: Vec<&[f64]> = groups[i].iter().map(|&m| points[m].as_slice()).collect();
                    let b: Vec<&[f64]> = groups[j].iter().map(|&m| points[m].as_slice()).collect();
                    if i == j { 0.0 } else { average_link(&a, &b, euclidean).unwrap_or(f64::INFINITY) }
                })
                .collect()
        })
        .collect();
    let mut groups: Vec<Option<Vec<usize>>> = groups.into_iter().map(Some).collect();
    let mut alive = g;
    let mut merges = Vec::new();
    while alive > n_c.max(1) {
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..g {
            if groups[i].is_none() {
                continue;
            }
            for j in i + 1..g {
                if groups[j].is_some() && dist[i][j] < best.0 {
                    best = (dist[i][j], i, j);
                }
            }
        }
        let (_, i, j) = best;
        let absorbed = groups[j].take().expect("alive group");
        let (ni, nj) = (groups[i].as_ref().map_or(0, Vec::len) as f64, absorbed.len() as f64);
        for k in 0..g {
            if k != i && groups[k].is_some() {
                let d = (ni * dist[i][k] + nj * dist[j][k]) / (ni + nj);
                dist[i][k] = d;
                dist[k][i] = d;
            }
        }
        let merged = groups[i].as_mut().expect("alive group");
        merged.extend(absorbed);
        merged.sort_unstable();
        merges.push((i, j));
        alive -= 1;
    }
    (groups.into_iter().flatten().collect(), merges)
}

/// Over-segments with k-means, drops small far-away clusters, then merges by
/// average link down to `n_c` clusters.
pub fn agglomerate(features: &[FeatureVector], config: &AgglomerateConfig) -> Result<Vec<Cluster>> {
    let n = features.len();
    if config.n_c == 0 || n < config.n_c {
        return Err(Error::InsufficientData(format!("{n} feature vectors cannot form {} clusters", config.n_c)));
    }
    if config.k_init < config.n_c {
        return Err(Error::Contract(format!("k_init {} is below n_c {}", config.k_init, config.n_c)));
    }
    if let Some(f) = features.iter().find(|f| f.values.len() != features[0].values.len()) {
        return Err(Error::Contract(format!("feature `{}` has a different dimension", f.id)));
    }
    let points: Vec<Vec<f64>> = features.iter().map(|f| f.values.clone()).collect();
    let assign = kmeans(&points, config.k_init.min(n), config.seed)?;
    let k = assign.iter().max().map_or(0, |m| m + 1);
    let mut groups = vec![Vec::new(); k];
    for (i, &a) in assign.iter().enumerate() {
        groups[a].push(i);
    }
    groups.sort_by_key(|g| g[0]);

    if config.drop_fraction > 0.0 && groups.len() > config.n_c {
        groups = drop_outliers(&points, groups, config);
    }
    let (mut merged, _) = merge_closest(&points, groups, config.n_c);
    merged.sort_by_key(|g| g[0]);
    Ok(merged
        .into_iter()
        .map(|members| {
            let dim = points[0].len();
            let mut centroid = vec![0.0; dim];
            for &m in &members {
                for (c, v) in centroid.iter_mut().zip(&points[m]) {
                    *c += v;
                }
            }
            centroid.iter_mut().for_each(|c| *c /= members.len() as f64);
            let ids = members.iter().map(|&m| features[m].id.clone()).collect();
            Cluster { members, ids, centroid }
        })
        .collect())
}

fn drop_outliers(points: &[Vec<f64>], groups: Vec<Vec<usize>>, config: &AgglomerateConfig) -> Vec<Vec<usize>> {
    let vecs: Vec<Vec<&[f64]>> = groups.iter().map(|g| g.iter().map(|&m| points[m].as_slice()).collect()).collect();
    let nearest: Vec<f64> = (0..groups.len())
        .into_par_iter()
        .map(|i| {
            (0..groups.len())
                .filter(|&j| j != i)
                .map(|j| average_link(&vecs[i], &vecs[j], euclidean).unwrap_or(f64::INFINITY))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut sorted = nearest.clone();
    sorted.sort_by(f64::total_cmp);
    let p90 = sorted[((sorted.len() - 1) as f64 * 0.9).round() as usize];
    let mean_size = points.len() as f64 / groups.len() as f64;
    let mut keep = Vec::new();
    let mut dropped = 0;
    let droppable = groups.len() - config.n_c;
    for (g, d) in groups.into_iter().zip(nearest) {
        if dropped < droppable && (g.len() as f64) < config.drop_fraction * mean_size && d > p90 {
            dropped += 1;
            continue;
        }
        keep.push(g);
    }
    if dropped > 0 {
        log::info!("dropped {dropped} small outlying cluster(s)");
    }
    keep
}
