//! The oracle comparison suite behind `hsspn verify`: worked-example values,
//! fast inference against exhaustive enumeration, the margin gradient against
//! finite differences, and clustering against full recomputation.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{average_link, euclidean, merge_closest};
use crate::error::Result;
use crate::fixtures::{worked_example_perturbed, x_var, X1, X2};
use crate::inference::{backtrack, mpe, to_mpn, traversal_difference};
use crate::network::{evaluate, IndicatorValues, Network};
use crate::oracle::{
    brute_force_agglomerate, brute_force_marginal, brute_force_mpe, finite_difference_gradient, random_evidence,
    random_network, Gradient,
};
use crate::spatial::Region;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Extra context, e.g. how many cases were compared.
    pub note: String,
}

impl Check {
    fn abs(name: &'static str, measured: f64, expected: f64, tolerance: f64) -> Self {
        let passed = (measured - expected).abs() <= tolerance;
        Check { name, measured, expected, tolerance, passed, note: String::new() }
    }

    /// Worst observed error against an upper bound.
    fn worst(name: &'static str, error: f64, tolerance: f64, note: String) -> Self {
        Check { name, measured: error, expected: 0.0, tolerance, passed: error <= tolerance, note }
    }

    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let mut s = format!(
            "check {}: measured {:.15e} expected {:.15e} tolerance {:.1e} {verdict}",
            self.name, self.measured, self.expected, self.tolerance
        );
        if !self.note.is_empty() {
            s.push_str(&format!(" ({})", self.note));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    /// Added to one weight of the worked-example fixture; nonzero values are
    /// for checking that the suite can fail.
    pub perturb: f64,
    pub random_networks: usize,
    pub gradient_fixtures: usize,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { perturb: 0.0, random_networks: 200, gradient_fixtures: 50, seed: 0 }
    }
}

fn worked_evidence(x1: Option<bool>, x2: Option<bool>) -> IndicatorValues {
    let mut ev = IndicatorValues::new();
    for (part, state) in [(X1, x1), (X2, x2)] {
        match state {
            Some(b) => ev.set_part(part, Region::FULL, b),
            None => ev.marginalize_part(part, Region::FULL),
        }
    }
    ev
}

fn worked_example(perturb: f64) -> Result<Vec<Check>> {
    let net = worked_example_perturbed(perturb);
    let mut out = Vec::new();
    let ev = worked_evidence(Some(true), Some(false));
    out.push(Check::abs("worked-example-value", evaluate(&net, &ev)?.root_value(), 0.12, 1e-12));
    out.push(Check::abs("worked-example-oracle-marginal", brute_force_marginal(&net, &ev)?, 0.12, 1e-12));
    let all = worked_evidence(None, None);
    out.push(Check::abs("worked-example-total-mass", evaluate(&net, &all)?.root_value(), 1.0, 1e-12));

    let ev = worked_evidence(Some(true), None);
    let query = BTreeSet::from([x_var(X2)]);
    let res = mpe(to_mpn(&net), &ev, &query)?;
    let x2 = res.completed.part_values(X2, Region::FULL).map_or(f64::NAN, |v| v[0]);
    out.push(Check::abs("worked-example-mpe-x2", x2, 1.0, 0.0));
    out.push(Check::abs("worked-example-mpe-value", res.root_value(), 0.192, 1e-12));
    let eval = to_mpn(&net).evaluate(&ev)?;
    let branches: Vec<f64> = net
        .out_edges(net.root())
        .iter()
        .map(|&e| net.weight(e).unwrap_or(1.0) * eval.value(net.edge(e).child))
        .collect();
    out.push(Check::abs("worked-example-mpe-branch-1", branches[0], 0.192, 1e-12));
    out.push(Check::abs("worked-example-mpe-branch-2", branches[1], 0.072, 1e-12));
    let (_, oracle) = brute_force_mpe(&net, &ev)?;
    out.push(Check::abs("worked-example-oracle-mpe", oracle, 0.192, 1e-12));
    Ok(out)
}

/// Worst relative marginal error and worst MPE errors (self-consistency,
/// oracle) over random networks with randomly marginalized parts.
pub fn random_inference_errors(count: usize, seed: u64) -> Result<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut marginal, mut consistency, mut oracle) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..count {
        let net = random_network(&mut rng, 10);
        let ev = random_evidence(&mut rng, &net, 0.5, false);
        let fast = evaluate(&net, &ev)?.root_value();
        let slow = brute_force_marginal(&net, &ev)?;
        marginal = marginal.max((fast - slow).abs() / slow.abs().max(1e-300));

        let query: BTreeSet<_> = net.variables().into_iter().filter(|&v| ev.is_marginalized(v)).collect();
        let res = mpe(to_mpn(&net), &ev, &query)?;
        let replay = to_mpn(&net).evaluate(&res.completed)?.root_value();
        consistency = consistency.max((replay - res.root_value()).abs());
        let (_, best) = brute_force_mpe(&net, &ev)?;
        oracle = oracle.max((best - res.root_value()).abs());
    }
    Ok((marginal, consistency, oracle))
}

/// Worst relative error of Δt_i / w_i against finite differences over every
/// sum edge of `count` random fully observed fixtures, and the number of
/// (edge, fixture) comparisons made and skipped as inconclusive.
pub fn gradient_errors(count: usize, seed: u64) -> Result<(f64, usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut compared, mut skipped) = (0.0f64, 0, 0);
    let tree = |net: &Network, ev: &IndicatorValues| -> Result<_> { Ok(backtrack(net, &to_mpn(net).evaluate(ev)?)?.0) };
    for _ in 0..count {
        let net = random_network(&mut rng, 10);
        let pos = random_evidence(&mut rng, &net, 0.0, false);
        let neg = random_evidence(&mut rng, &net, 0.0, false);
        let diff = traversal_difference(&tree(&net, &pos)?, &tree(&net, &neg)?)?;
        for e in net.weighted_edges().collect::<Vec<_>>() {
            let w = net.weight(e).expect("sum edge");
            let analytic = diff.get(&e).copied().unwrap_or(0) as f64 / w;
            match finite_difference_gradient(&net, &pos, &neg, e, 1e-6)? {
                Gradient::Value(fd) => {
                    compared += 1;
                    // a nonzero Δt/w is at least 1 in magnitude, so this is
                    // relative there and absolute where Δt = 0
                    worst = worst.max((analytic - fd).abs() / analytic.abs().max(1.0));
                }
                Gradient::Inconclusive => skipped += 1,
            }
        }
    }
    Ok((worst, compared, skipped))
}

/// Random clusters of random points: worst gap between `average_link` and
/// the explicit double sum, and merge sequences that disagree with the
/// recomputing agglomeration.
pub fn clustering_errors(count: usize, seed: u64) -> Result<(f64, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut mismatches = 0;
    for _ in 0..count {
        let dim = rng.random_range(1..5);
        let n = rng.random_range(4..20);
        let points: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
        let split = rng.random_range(1..n);
        let (a, b) = points.split_at(split);
        let mut total = 0.0;
        for x in a {
            for y in b {
                total += x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            }
        }
        let explicit = total / (a.len() * b.len()) as f64;
        worst = worst.max((average_link(a, b, euclidean)? - explicit).abs());

        let singletons: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let target = rng.random_range(1..n);
        let (_, fast) = merge_closest(&points, singletons.clone(), target);
        if fast != brute_force_agglomerate(&points, singletons, target) {
            mismatches += 1;
        }
    }
    Ok((worst, mismatches))
}

/// Runs every check. Errors are only returned for failures of the machinery
/// itself (which a pristine build never produces).
pub fn run_suite(config: &SuiteConfig) -> Result<Vec<Check>> {
    let mut out = worked_example(config.perturb)?;
    let n = config.random_networks;
    let (marginal, consistency, oracle) = random_inference_errors(n, config.seed)?;
    out.push(Check::worst("random-marginal-vs-oracle", marginal, 1e-9, format!("{n} networks, relative")));
    out.push(Check::worst("random-mpe-replay", consistency, 1e-12, format!("{n} networks")));
    out.push(Check::worst("random-mpe-vs-oracle", oracle, 1e-12, format!("{n} networks")));
    let (grad, compared, skipped) = gradient_errors(config.gradient_fixtures, config.seed)?;
    out.push(Check::worst(
        "margin-gradient-vs-finite-difference",
        grad,
        1e-4,
        format!("{compared} edges compared, {skipped} inconclusive"),
    ));
    let (link, mismatches) = clustering_errors(100, config.seed)?;
    out.push(Check::worst("average-link-vs-double-sum", link, 1e-12, "100 cluster pairs".into()));
    let mut merge = Check::worst("agglomeration-vs-recompute", mismatches as f64, 0.0, "100 runs".into());
    merge.passed = mismatches == 0;
    out.push(merge);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example_checks_pass_and_detect_perturbation() {
        assert!(worked_example(0.0).unwrap().iter().all(|c| c.passed));
        let perturbed = worked_example(0.01).unwrap();
        let value = perturbed.iter().find(|c| c.name == "worked-example-value").unwrap();
        assert!(!value.passed);
        assert!((value.measured - 0.1216).abs() < 1e-12);
    }
}
