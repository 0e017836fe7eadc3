//! Constrained dominant sets anchored on the query.
//!
//! The graph holds the query node `Q` plus one node per member of each
//! extracted matching cluster. `Q` is linked to every reference node by a
//! fused global-feature similarity `rho`; members of the same cluster keep
//! their (max-normalized) matching payoffs; everything else is 0. Penalizing
//! the non-query diagonal by `alpha > lambda_max` forces every local
//! maximizer to contain `Q`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_similarity;
use crate::graph::{support, AffinityMatrix, SimplexVector};
use crate::image::ImageId;
use crate::matching::{vector_distance, FeatureMatchResult, MatchingGraph, DEFAULT_GAMMA};
use crate::stqp::{find_equilibrium, PayoffMatrix, SolverConfig};

/// Named global descriptors of one image.
pub type GlobalFeatures = BTreeMap<String, Vec<f64>>;

/// Curve areas below this are clamped before inversion.
pub const AREA_FLOOR: f64 = 1e-6;
pub const DEFAULT_ALPHA_MARGIN: f64 = 0.1;
/// Absolute lower bound on alpha when the off-query block is zero.
pub const ALPHA_FLOOR: f64 = 1e-6;
pub const DEFAULT_POWER_STEPS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeight {
    pub name: String,
    pub area: f64,
    pub weight: f64,
    /// Distances were all identical, so the area was floored.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeighting {
    pub features: Vec<FeatureWeight>,
}

impl FeatureWeighting {
    pub fn uniform(names: &[String]) -> Self {
        let w = 1.0 / names.len() as f64;
        Self {
            features: names
                .iter()
                .map(|n| FeatureWeight {
                    name: n.clone(),
                    area: 1.0,
                    weight: w,
                    degenerate: false,
                })
                .collect(),
        }
    }

    pub fn weight(&self, name: &str) -> Option<f64> {
        self.features.iter().find(|f| f.name == name).map(|f| f.weight)
    }

    pub fn any_degenerate(&self) -> bool {
        self.features.iter().any(|f| f.degenerate)
    }
}

/// Normalized score curve: `1 - (d - min) / (max - min)` per reference,
/// sorted descending. `None` when all distances are equal.
///
/// A feature that singles out few references drops quickly and encloses a
/// small area.
pub fn normalized_curve(distances: &[f64]) -> Option<Vec<f64>> {
    let lo = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = distances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return None;
    }
    let mut c: Vec<f64> = distances.iter().map(|d| 1.0 - (d - lo) / (hi - lo)).collect();
    c.sort_by(|a, b| b.total_cmp(a));
    Some(c)
}

/// Trapezoidal area under `curve` on an abscissa spread evenly over `[0, 1]`.
pub fn curve_area(curve: &[f64]) -> f64 {
    match curve.len() {
        0 => 0.0,
        1 => curve[0],
        n => {
            let h = 1.0 / (n - 1) as f64;
            curve.windows(2).map(|w| 0.5 * (w[0] + w[1]) * h).sum()
        }
    }
}

/// `w_i` proportional to `1 / A_i`, where `A_i` is the area under feature
/// `i`'s normalized query-to-reference score curve.
pub fn feature_weights(query: &GlobalFeatures, references: &[&GlobalFeatures], names: &[String]) -> Result<FeatureWeighting> {
    if names.is_empty() {
        return Err(Error::Config("no global features to weight".into()));
    }
    if references.is_empty() {
        return Err(Error::EmptyReferences);
    }
    let mut features = Vec::with_capacity(names.len());
    for name in names {
        let q = lookup(query, name, "query")?;
        let mut d = Vec::with_capacity(references.len());
        for (j, r) in references.iter().enumerate() {
            d.push(vector_distance(q, lookup(r, name, &format!("reference #{j}"))?)?);
        }
        let (area, degenerate) = match normalized_curve(&d) {
            Some(c) => (curve_area(&c).max(AREA_FLOOR), false),
            None => (AREA_FLOOR, true),
        };
        features.push(FeatureWeight {
            name: name.clone(),
            area,
            weight: 0.0,
            degenerate,
        });
    }
    let total: f64 = features.iter().map(|f| 1.0 / f.area).sum();
    for f in &mut features {
        f.weight = (1.0 / f.area) / total;
    }
    Ok(FeatureWeighting { features })
}

fn lookup<'a>(features: &'a GlobalFeatures, name: &str, image: &str) -> Result<&'a [f64]> {
    features
        .get(name)
        .map(Vec::as_slice)
        .ok_or_else(|| Error::MissingFeature {
            feature: name.into(),
            image: image.into(),
        })
}

/// Per-feature kernel bandwidths; features not listed use `default`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bandwidths {
    pub default: f64,
    #[serde(default)]
    pub per_feature: BTreeMap<String, f64>,
}

impl Default for Bandwidths {
    fn default() -> Self {
        Self {
            default: DEFAULT_GAMMA,
            per_feature: BTreeMap::new(),
        }
    }
}

impl Bandwidths {
    pub fn uniform(gamma: f64) -> Self {
        Self {
            default: gamma,
            per_feature: BTreeMap::new(),
        }
    }

    pub fn get(&self, name: &str) -> f64 {
        self.per_feature.get(name).copied().unwrap_or(self.default)
    }
}

/// `rho(i, j) = sum_f w_f exp(-||psi_f(i) - psi_f(j)||^2 / 2 gamma_f^2)`.
pub fn fused_global_similarity(i: &GlobalFeatures, j: &GlobalFeatures, weights: &FeatureWeighting, gammas: &Bandwidths) -> Result<f64> {
    let mut rho = 0.0;
    for f in &weights.features {
        let d = vector_distance(lookup(i, &f.name, "first image")?, lookup(j, &f.name, "second image")?)?;
        rho += f.weight * gaussian_similarity(d, gammas.get(&f.name));
    }
    Ok(rho)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CdsNode {
    Query,
    Reference {
        image: ImageId,
        /// Node index in the matching graph.
        matching_node: usize,
        /// 1-based extraction rank of the cluster.
        cluster: usize,
    },
}

/// One matching cluster as seen by the constrained graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterBlock {
    pub rank: usize,
    pub matching_nodes: Vec<usize>,
    pub images: Vec<ImageId>,
    /// Within-cluster payoffs divided by their maximum.
    pub affinity: PayoffMatrix,
}

impl ClusterBlock {
    /// Sub-matrix of the homogenized matching payoff `b` on the cluster support.
    pub fn from_match(result: &FeatureMatchResult, graph: &MatchingGraph, b: &PayoffMatrix) -> Vec<ClusterBlock> {
        result
            .clusters
            .iter()
            .map(|c| {
                let nodes = c.support.as_slice().to_vec();
                let sub = b.principal(&nodes);
                let max = sub.max_entry();
                let affinity = if max > 0.0 {
                    PayoffMatrix::from_fn(nodes.len(), |i, j| sub.get(i, j) / max).expect("finite")
                } else {
                    sub
                };
                ClusterBlock {
                    rank: c.rank,
                    images: nodes.iter().map(|&n| graph.nodes[n].parent_image().clone()).collect(),
                    matching_nodes: nodes,
                    affinity,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdsGraph {
    /// Node 0 is the query.
    pub nodes: Vec<CdsNode>,
    pub bhat: AffinityMatrix,
}

impl CdsGraph {
    pub const QUERY: usize = 0;

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn cluster_of(&self, node: usize) -> Option<usize> {
        match &self.nodes[node] {
            CdsNode::Query => None,
            CdsNode::Reference { cluster, .. } => Some(*cluster),
        }
    }

    pub fn image_of(&self, node: usize) -> Option<&ImageId> {
        match &self.nodes[node] {
            CdsNode::Query => None,
            CdsNode::Reference { image, .. } => Some(image),
        }
    }
}

/// Assembles `Bhat` of size `1 + sum |DS_n|`. `rho` gives the query's
/// similarity to a reference image.
pub fn build_cds_graph<F>(clusters: &[ClusterBlock], mut rho: F) -> Result<CdsGraph>
where
    F: FnMut(&ImageId) -> Result<f64>,
{
    if clusters.is_empty() || clusters.iter().all(|c| c.images.is_empty()) {
        return Err(Error::Contract("constrained graph needs at least one non-empty cluster".into()));
    }
    let mut nodes = vec![CdsNode::Query];
    let mut spans = Vec::with_capacity(clusters.len());
    for c in clusters {
        if c.affinity.len() != c.images.len() || c.matching_nodes.len() != c.images.len() {
            return Err(Error::DimensionMismatch {
                expected: c.images.len(),
                actual: c.affinity.len(),
            });
        }
        spans.push(nodes.len());
        for (image, &m) in c.images.iter().zip(&c.matching_nodes) {
            nodes.push(CdsNode::Reference {
                image: image.clone(),
                matching_node: m,
                cluster: c.rank,
            });
        }
    }
    let n = nodes.len();
    let mut e = vec![0.0; n * n];
    let mut cache: BTreeMap<ImageId, f64> = BTreeMap::new();
    for j in 1..n {
        let img = match &nodes[j] {
            CdsNode::Reference { image, .. } => image,
            CdsNode::Query => unreachable!(),
        };
        let r = match cache.get(img) {
            Some(&r) => r,
            None => {
                let r = rho(img)?;
                cache.insert(img.clone(), r);
                r
            }
        };
        e[j] = r;
        e[j * n] = r;
    }
    for (c, &start) in clusters.iter().zip(&spans) {
        let k = c.images.len();
        for a in 0..k {
            for b in 0..k {
                if a != b {
                    e[(start + a) * n + start + b] = c.affinity.get(a, b);
                }
            }
        }
    }
    Ok(CdsGraph {
        nodes,
        bhat: AffinityMatrix::new(n, e)?,
    })
}

/// How the eigenvalue upper bound is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaConfig {
    pub margin: f64,
    /// When set, also take the Collatz-Wielandt bound of a power-iteration
    /// vector and keep the smaller of the two.
    pub power_steps: Option<usize>,
}

impl Default for AlphaConfig {
    fn default() -> Self {
        Self {
            margin: DEFAULT_ALPHA_MARGIN,
            power_steps: None,
        }
    }
}

/// Upper bound on `lambda_max` of `bhat` with node `q` removed.
pub fn eigen_upper_bound(bhat: &AffinityMatrix, q: usize, power_steps: Option<usize>) -> f64 {
    let keep: Vec<usize> = (0..bhat.len()).filter(|&i| i != q).collect();
    let m = bhat.principal(&keep);
    let n = m.len();
    let gershgorin = (0..n).map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let Some(steps) = power_steps else {
        return gershgorin;
    };
    // Iterate on M + I so the vector stays strictly positive and the
    // iteration cannot oscillate on bipartite blocks.
    let mut v = vec![1.0; n];
    for _ in 0..steps {
        let mut w: Vec<f64> = (0..n).map(|i| v[i] + dot(m.row(i), &v)).collect();
        let s = w.iter().copied().fold(0.0, f64::max);
        if !(s > 0.0) {
            break;
        }
        w.iter_mut().for_each(|x| *x /= s);
        v = w;
    }
    // For nonnegative M and positive v, lambda_max <= max_i (Mv)_i / v_i.
    let cw = (0..n).map(|i| dot(m.row(i), &v) / v[i]).fold(0.0, f64::max);
    if cw.is_finite() {
        gershgorin.min(cw)
    } else {
        gershgorin
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `alpha = (1 + margin) U`, never below [`ALPHA_FLOOR`].
pub fn alpha_bound(bhat: &AffinityMatrix, q: usize, config: &AlphaConfig) -> f64 {
    ((1.0 + config.margin) * eigen_upper_bound(bhat, q, config.power_steps)).max(ALPHA_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdsSolution {
    pub x: SimplexVector,
    pub alpha: f64,
    pub objective: f64,
    pub iterations: usize,
    /// `x_i` for every support node.
    pub membership: BTreeMap<usize, f64>,
}

/// Maximizes `x'(Bhat - alpha I_Q)x`, where `I_Q` is 1 on every diagonal
/// entry except the query's.
pub fn constrained_dominant_set(graph: &CdsGraph, q: usize, alpha: f64, x0: &SimplexVector, solver: &SolverConfig) -> Result<CdsSolution> {
    let n = graph.len();
    if q >= n {
        return Err(Error::Contract(format!("query node {q} out of range {n}")));
    }
    let penalty: Vec<f64> = (0..n).map(|i| if i == q { 0.0 } else { alpha }).collect();
    let b = PayoffMatrix::from(&graph.bhat).minus_diagonal(&penalty)?;
    let eq = find_equilibrium(&b, x0, solver)?;
    let s = support(&eq.x, solver.support_cutoff);
    if !s.contains(q) {
        return Err(Error::QueryNotInSupport { support: s.into_vec() });
    }
    let membership = s.iter().map(|i| (i, eq.x.get(i))).collect();
    Ok(CdsSolution {
        x: eq.x,
        alpha,
        objective: eq.objective,
        iterations: eq.iterations,
        membership,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CdsMatch {
    Match {
        image: ImageId,
        node: usize,
        score: f64,
        tie: bool,
        low_confidence: bool,
    },
    /// Only the query survived in the support.
    NoMatch,
}

/// Below this total non-query mass the match is flagged low-confidence.
pub const LOW_CONFIDENCE_MASS: f64 = 0.01;

/// Non-query support node with the largest membership.
pub fn best_match(graph: &CdsGraph, solution: &CdsSolution) -> CdsMatch {
    let mut best: Option<(usize, f64)> = None;
    let mut tie = false;
    let mut rest = 0.0;
    for (&node, &x) in &solution.membership {
        let Some(img) = graph.image_of(node) else {
            continue;
        };
        rest += x;
        match best {
            None => best = Some((node, x)),
            Some((b, bx)) => {
                if x > bx {
                    best = Some((node, x));
                    tie = false;
                } else if x == bx {
                    let cur = graph.image_of(b).expect("reference node");
                    if img != cur {
                        tie = true;
                    }
                    if img < cur {
                        best = Some((node, x));
                    }
                }
            }
        }
    }
    match best {
        None => CdsMatch::NoMatch,
        Some((node, score)) => CdsMatch::Match {
            image: graph.image_of(node).expect("reference node").clone(),
            node,
            score,
            tie,
            low_confidence: rest < LOW_CONFIDENCE_MASS,
        },
    }
}
