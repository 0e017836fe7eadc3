//! Self-checks of the whole stack against exact oracles and planted data.
//!
//! Each check returns a [`CheckOutcome`]; [`run_all`] runs the full suite.
//! Random instances are drawn from ChaCha8 streams with fixed seeds, so every
//! outcome is reproducible.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cds::{alpha_bound, build_cds_graph, constrained_dominant_set, AlphaConfig, CdsGraph, ClusterBlock};
use crate::dataset::Dataset;
use crate::error::Result;
use crate::eval::{evaluate, AccuracyCurve, DEFAULT_THRESHOLDS_M};
use crate::graph::{check_sign_conditions, is_dominant_set, support, weight_w, AffinityMatrix, Dominance, NodeSet, SimplexVector};
use crate::image::ImageId;
use crate::nn::{build_index, dynamic_nn_select, prune_query_feature, DescriptorIndex, IndexConfig, Neighbor, NeighborList, PruneDecision};
use crate::pipeline::{run_pipeline, write_reports, LocalizationReport, Method, PipelineConfig};
use crate::stqp::{find_equilibrium, homogenize_scores, payoff_value, replicator_equilibrium, PayoffMatrix, SolverConfig};
use crate::synth::{generate_synthetic_city, CityConfig};

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} criterion {}: {} ({}; {:.2}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

fn outcome(id: usize, name: &'static str, start: Instant, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome {
        id,
        name,
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

/// Edge weights of the five-node example: a triangle {0,1,2} from
/// `triangle`, node 3 joined by `spoke`, node 4 joined to all by 1.
pub fn worked_example_graph(triangle: [f64; 3], spoke: [f64; 3]) -> AffinityMatrix {
    AffinityMatrix::from_edges(
        5,
        &[
            (0, 1, triangle[0]),
            (0, 2, triangle[1]),
            (1, 2, triangle[2]),
            (0, 3, spoke[0]),
            (1, 3, spoke[1]),
            (2, 3, spoke[2]),
            (0, 4, 1.0),
            (1, 4, 1.0),
            (2, 4, 1.0),
            (3, 4, 1.0),
        ],
    )
    .expect("valid example graph")
}

fn permutations(v: [f64; 3]) -> Vec<[f64; 3]> {
    let idx = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    idx.iter().map(|p| [v[p[0]], v[p[1]], v[p[2]]]).collect()
}

/// Sign claims of the worked five-node example under every edge assignment.
pub fn check_worked_example() -> Result<CheckOutcome> {
    let start = Instant::now();
    let four = NodeSet::range(4);
    let five = NodeSet::range(5);
    let mut sign_ok = 0;
    let mut total = 0;
    for t in permutations([20.0, 21.0, 22.0]) {
        for s in permutations([30.0, 35.0, 41.0]) {
            let b = worked_example_graph(t, s);
            total += 1;
            if weight_w(&four, 3, &b)? > 0.0 && weight_w(&five, 4, &b)? < 0.0 {
                sign_ok += 1;
            }
        }
    }
    let canonical = worked_example_graph([20.0, 21.0, 22.0], [30.0, 35.0, 41.0]);
    let dom4 = is_dominant_set(&four, &canonical)?;
    let dom5 = is_dominant_set(&five, &canonical)?;
    let secs = start.elapsed().as_secs_f64();
    let passed = sign_ok == total && dom4 && !dom5 && secs < 1.0;
    Ok(outcome(
        1,
        "worked example weights and dominance",
        start,
        passed,
        format!("sign claims hold in {sign_ok}/{total} assignments; dominant(1..4)={dom4}, dominant(1..5)={dom5}"),
    ))
}

fn random_affinity(rng: &mut ChaCha8Rng, n: usize) -> AffinityMatrix {
    AffinityMatrix::from_upper(n, |_, _| rng.random::<f64>()).expect("valid random affinity")
}

/// Solver supports satisfy both dominance sign conditions.
pub fn check_oracle_equivalence(instances: usize, seed: u64) -> Result<CheckOutcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut ok, mut bad, mut degenerate) = (0usize, 0usize, 0usize);
    let config = SolverConfig::default();
    for _ in 0..instances {
        let n = rng.random_range(4..=8);
        let a = random_affinity(&mut rng, n);
        let eq = find_equilibrium(&PayoffMatrix::from(&a), &SimplexVector::barycenter(n), &config)?;
        match check_sign_conditions(&support(&eq.x, config.support_cutoff), &a)? {
            Dominance::Dominant => ok += 1,
            Dominance::NotDominant => bad += 1,
            Dominance::Degenerate { .. } => degenerate += 1,
        }
    }
    let rate = ok as f64 / (ok + bad).max(1) as f64;
    let secs = start.elapsed().as_secs_f64();
    Ok(outcome(
        2,
        "solver supports pass the dominance oracle",
        start,
        rate >= 0.99 && ok + bad > 0 && secs < 60.0,
        format!("{ok}/{} non-degenerate instances dominant ({:.1}%), {degenerate} degenerate excluded", ok + bad, 100.0 * rate),
    ))
}

/// Infection-immunization and replicator dynamics reach the same support.
pub fn check_solver_agreement(instances: usize, seed: u64) -> Result<CheckOutcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tight = SolverConfig::default().with_tolerance(1e-16);
    let replicator = tight.clone().with_max_iterations(1_000_000);
    let (mut agree, mut objective_ok, mut worst_gap) = (0usize, 0usize, 0.0f64);
    for _ in 0..instances {
        let n = rng.random_range(2..=10);
        let b = PayoffMatrix::from(&random_affinity(&mut rng, n));
        let x0 = SimplexVector::barycenter(n);
        let i = find_equilibrium(&b, &x0, &tight)?;
        let r = replicator_equilibrium(&b, &x0, &replicator)?;
        if support(&i.x, tight.support_cutoff) == support(&r.x, tight.support_cutoff) {
            agree += 1;
            let gap = (i.objective - r.objective).abs();
            worst_gap = worst_gap.max(gap);
            if gap <= 1e-6 {
                objective_ok += 1;
            }
        }
    }
    let rate = agree as f64 / instances as f64;
    Ok(outcome(
        3,
        "infection-immunization vs replicator dynamics",
        start,
        rate >= 0.95 && objective_ok == agree,
        format!("supports agree on {agree}/{instances}; objectives within 1e-6 on {objective_ok}/{agree} (max gap {worst_gap:.1e})"),
    ))
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> SimplexVector {
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    SimplexVector::new(e.into_iter().map(|v| v / s).collect()).expect("normalized")
}

/// `x'Bx = x'Ax + 2 b'x` for the homogenized matrix.
pub fn check_homogenization(triples: usize, seed: u64) -> Result<CheckOutcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut ok, mut worst) = (0usize, 0.0f64);
    for _ in 0..triples {
        let n = rng.random_range(2..=20);
        let a = random_affinity(&mut rng, n);
        let b: Vec<f64> = (0..n).map(|_| 1.0 - rng.random::<f64>()).collect();
        let x = random_simplex(&mut rng, n);
        let hb = homogenize_scores(&a, &b)?;
        let lhs = payoff_value(&hb, &x)?;
        let rhs = payoff_value(&PayoffMatrix::from(&a), &x)? + 2.0 * b.iter().zip(x.values()).map(|(u, v)| u * v).sum::<f64>();
        let gap = (lhs - rhs).abs();
        worst = worst.max(gap / n as f64);
        if gap <= 1e-12 * n as f64 {
            ok += 1;
        }
    }
    Ok(outcome(
        4,
        "homogenization identity",
        start,
        ok == triples,
        format!("{ok}/{triples} triples within 1e-12*n (max gap/n {worst:.1e})"),
    ))
}

/// A random constrained graph: 1 to 3 clusters of 1 to 6 members with
/// affinities and query links in `(0, 1]`.
pub fn random_cds_graph(rng: &mut ChaCha8Rng) -> Result<CdsGraph> {
    let k = rng.random_range(1..=3);
    let mut blocks = Vec::with_capacity(k);
    for rank in 1..=k {
        let m = rng.random_range(1..=6);
        let vals: Vec<f64> = (0..m * m).map(|_| 1.0 - rng.random::<f64>()).collect();
        blocks.push(ClusterBlock {
            rank,
            matching_nodes: (0..m).collect(),
            images: (0..m).map(|i| ImageId::new(format!("c{rank}i{i}"))).collect(),
            affinity: PayoffMatrix::from_fn(m, |i, j| vals[i.min(j) * m + i.max(j)])?,
        });
    }
    build_cds_graph(&blocks, |_| Ok(1.0 - rng.random::<f64>()))
}

/// Every constrained solution keeps the query, at 1x, 2x and 10x alpha.
pub fn check_cds_containment(graphs: usize, seed: u64) -> Result<CheckOutcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let solver = SolverConfig::default();
    let mut held = [0usize; 3];
    for _ in 0..graphs {
        let g = random_cds_graph(&mut rng)?;
        let alpha = alpha_bound(&g.bhat, CdsGraph::QUERY, &AlphaConfig::default());
        for (slot, factor) in [1.0, 2.0, 10.0].into_iter().enumerate() {
            let x0 = SimplexVector::barycenter(g.len());
            match constrained_dominant_set(&g, CdsGraph::QUERY, factor * alpha, &x0, &solver) {
                Ok(s) if s.membership.contains_key(&CdsGraph::QUERY) => held[slot] += 1,
                Ok(_) | Err(crate::Error::QueryNotInSupport { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(outcome(
        5,
        "constrained solutions contain the query",
        start,
        held.iter().all(|&h| h == graphs) && secs < 60.0,
        format!("query kept in {}/{graphs} (1x), {}/{graphs} (2x), {}/{graphs} (10x alpha)", held[0], held[1], held[2]),
    ))
}

fn list(distances: &[f64]) -> NeighborList {
    NeighborList {
        query_feature: 0,
        neighbors: distances
            .iter()
            .enumerate()
            .map(|(i, &d)| Neighbor {
                descriptor: crate::nn::LocalDescriptor::new(vec![d as f32], ImageId::new(format!("r{i:03}")), i),
                distance: d,
            })
            .collect(),
    }
}

/// Dynamic neighbor selection and pruning traces, plus theta monotonicity.
pub fn check_selection_traces(lists: usize, seed: u64) -> Result<CheckOutcome> {
    let start = Instant::now();
    let traces = [
        dynamic_nn_select(&list(&[1.0, 1.05, 1.1, 5.0]), 0.7).len() == 3,
        dynamic_nn_select(&list(&[1.0, 2.0]), 0.7).len() == 1,
        dynamic_nn_select(&list(&[2.5; 10]), 0.7).len() == 9,
        prune_query_feature(&list(&[0.9, 1.0]), 0.7) == PruneDecision::Drop,
        prune_query_feature(&list(&[0.1, 1.0]), 0.7) == PruneDecision::Keep,
        prune_query_feature(&list(&[0.0, 0.0]), 0.7) == PruneDecision::Drop,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut monotone = 0;
    for _ in 0..lists {
        let len = rng.random_range(1..=50);
        let mut d: Vec<f64> = (0..len).map(|_| rng.random::<f64>() * 10.0).collect();
        d.sort_by(f64::total_cmp);
        let l = list(&d);
        let (a, b): (f64, f64) = (rng.random_range(0.01..0.99), rng.random_range(0.01..0.99));
        let (lo, hi) = (a.min(b), a.max(b));
        let small = dynamic_nn_select(&l, lo);
        let large = dynamic_nn_select(&l, hi);
        if small.len() >= large.len() && small[..large.len()] == *large {
            monotone += 1;
        }
    }
    let passed_traces = traces.iter().filter(|t| **t).count();
    Ok(outcome(
        6,
        "neighbor selection and pruning traces",
        start,
        passed_traces == traces.len() && monotone == lists,
        format!("{passed_traces}/{} traces reproduce; smaller theta selects a superset on {monotone}/{lists} lists", traces.len()),
    ))
}

pub fn reference_index(ds: &Dataset) -> Result<DescriptorIndex> {
    build_index(ds.references.iter().flat_map(|r| r.descriptors()).collect(), &IndexConfig::default())
}

/// Fraction of queries whose ground-truth image collects the most
/// exhaustive first-neighbor votes (ties count as recoverable).
pub fn planted_recoverability(ds: &Dataset, truth: &std::collections::BTreeMap<ImageId, ImageId>, index: &DescriptorIndex) -> Result<f64> {
    let mut ok = 0;
    for q in &ds.queries {
        let mut votes: std::collections::BTreeMap<ImageId, usize> = Default::default();
        for (i, d) in q.local_descriptors.iter().enumerate() {
            let nn = index.knn_exact(d, index.len(), i)?;
            let best = nn.neighbors[0].distance;
            for n in nn.neighbors.iter().take_while(|n| n.distance == best) {
                *votes.entry(n.descriptor.parent_image.clone()).or_default() += 1;
            }
        }
        let max = votes.values().copied().max().unwrap_or(0);
        if votes.get(&truth[&q.image_id]).copied().unwrap_or(0) == max && max > 0 {
            ok += 1;
        }
    }
    Ok(ok as f64 / ds.queries.len().max(1) as f64)
}

fn curve_for(reports: &[LocalizationReport], method: Method) -> Result<AccuracyCurve> {
    let errors: Vec<Option<f64>> = reports.iter().map(|r| r.error_m).collect();
    evaluate(method.as_str(), &errors, &DEFAULT_THRESHOLDS_M)
}

pub fn format_curve(c: &AccuracyCurve) -> String {
    let v: Vec<String> = c.accuracy.iter().map(|a| format!("{a:.2}")).collect();
    format!("[{}]", v.join(" "))
}

/// Planted recovery on the synthetic city and the tie-heavy variant.
pub fn check_planted_recovery(seed: u64) -> Result<CheckOutcome> {
    let start = Instant::now();
    let plain = generate_synthetic_city(&CityConfig { seed, ..CityConfig::default() })?;
    let plain_index = reference_index(&plain.dataset)?;
    let oracle = planted_recoverability(&plain.dataset, &plain.truth, &plain_index)?;
    let cds = run_pipeline(&plain.dataset, &plain_index, &PipelineConfig::default())?;
    let within30 = curve_for(&cds, Method::Cds)?.at(30.0).unwrap_or(0.0);

    let ties = generate_synthetic_city(&CityConfig { seed, ..CityConfig::tie_heavy() })?;
    let ties_index = reference_index(&ties.dataset)?;
    let tie_cds = curve_for(&run_pipeline(&ties.dataset, &ties_index, &PipelineConfig::default())?, Method::Cds)?;
    let vote_reports = run_pipeline(&ties.dataset, &ties_index, &PipelineConfig { method: Method::Vote, ..Default::default() })?;
    let vote_ties = vote_reports.iter().filter(|r| r.flags.vote_tie).count();
    let tie_vote = curve_for(&vote_reports, Method::Vote)?;
    let secs = start.elapsed().as_secs_f64();
    Ok(outcome(
        7,
        "planted recovery on the synthetic city",
        start,
        oracle >= 0.9 && within30 >= 0.9 && tie_cds.dominates(&tie_vote) && secs < 300.0,
        format!(
            "oracle recoverable {:.0}%; cds within 30 m {:.0}%; tie-heavy ({vote_ties} vote ties) cds {} vs vote {}",
            100.0 * oracle,
            100.0 * within30,
            format_curve(&tie_cds),
            format_curve(&tie_vote)
        ),
    ))
}

/// Serialized reports of the planted run, both methods, both variants.
pub fn planted_report_bytes(seed: u64) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for city in [CityConfig { seed, ..CityConfig::default() }, CityConfig { seed, ..CityConfig::tie_heavy() }] {
        let c = generate_synthetic_city(&city)?;
        let index = reference_index(&c.dataset)?;
        for method in [Method::Cds, Method::Vote] {
            write_reports(&run_pipeline(&c.dataset, &index, &PipelineConfig { method, ..Default::default() })?, &mut out)?;
        }
    }
    Ok(out)
}

/// Two planted runs with the same seed produce identical bytes.
pub fn check_determinism(seed: u64) -> Result<CheckOutcome> {
    let start = Instant::now();
    let a = planted_report_bytes(seed)?;
    let b = planted_report_bytes(seed)?;
    Ok(outcome(
        8,
        "byte-identical reports for identical seeds",
        start,
        a == b && !a.is_empty(),
        format!("{} report bytes per run, identical: {}", a.len(), a == b),
    ))
}

/// Seed of the synthetic city used by the planted checks.
pub const PLANTED_SEED: u64 = 7;

/// Criterion ids understood by [`run_check`].
pub const CRITERIA: std::ops::RangeInclusive<usize> = 1..=8;

/// Runs one criterion with its fixed seed (criterion `k` draws from seed `k`).
pub fn run_check(id: usize) -> Result<CheckOutcome> {
    match id {
        1 => check_worked_example(),
        2 => check_oracle_equivalence(500, 2),
        3 => check_solver_agreement(100, 3),
        4 => check_homogenization(1000, 4),
        5 => check_cds_containment(1000, 5),
        6 => check_selection_traces(1000, 6),
        7 => check_planted_recovery(PLANTED_SEED),
        8 => check_determinism(PLANTED_SEED),
        other => Err(crate::Error::Config(format!("unknown criterion {other} (1..=8)"))),
    }
}

pub fn run_all() -> Result<Vec<CheckOutcome>> {
    CRITERIA.map(run_check).collect()
}
