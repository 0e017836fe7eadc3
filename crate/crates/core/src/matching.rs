//! Multi-neighbor matching graph and dominant-set feature matching.
//!
//! Every surviving candidate neighbor of every query feature becomes a node.
//! Nodes of different query features are joined by the Gaussian similarity of
//! their parent images' global vectors (GPS by default); each node also
//! carries its local-descriptor score `zeta`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_similarity;
use crate::graph::AffinityMatrix;
use crate::image::ImageId;
use crate::nn::{LocalDescriptor, Neighbor, NeighborList};
use crate::stqp::{extract_dominant_sets, homogenize_scaled, DominantSetResult, NodeScoreVector, SolverConfig};

/// Kernel bandwidth `2^7`.
pub const DEFAULT_GAMMA: f64 = 128.0;

/// One candidate reference feature for one query feature.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateNode {
    pub query_feature_id: usize,
    pub nn_rank: usize,
    pub descriptor: LocalDescriptor,
    pub zeta: f64,
}

impl CandidateNode {
    /// Scores the neighbor by `exp(-d^2 / 2 gamma^2)`.
    ///
    /// Scores that underflow are clamped to the smallest positive double so
    /// the node score stays in `(0, 1]`.
    pub fn from_neighbor(neighbor: &Neighbor, query_feature_id: usize, nn_rank: usize, gamma: f64) -> Self {
        Self {
            query_feature_id,
            nn_rank,
            descriptor: neighbor.descriptor.clone(),
            zeta: gaussian_similarity(neighbor.distance, gamma).max(f64::MIN_POSITIVE),
        }
    }

    pub fn parent_image(&self) -> &ImageId {
        &self.descriptor.parent_image
    }
}

/// Candidates for one query feature, in neighbor order.
pub fn candidates_from(list: &NeighborList, selected: &[Neighbor], gamma: f64) -> Vec<CandidateNode> {
    selected
        .iter()
        .enumerate()
        .map(|(rank, n)| CandidateNode::from_neighbor(n, list.query_feature, rank, gamma))
        .collect()
}

/// Named per-image global vectors, the `psi` accessor of the graph.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PsiTable {
    pub name: String,
    vectors: BTreeMap<ImageId, Vec<f64>>,
}

impl PsiTable {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            vectors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, image: ImageId, vector: Vec<f64>) {
        self.vectors.insert(image, vector);
    }

    pub fn get(&self, image: &ImageId) -> Result<&[f64]> {
        self.vectors
            .get(image)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingFeature {
                feature: self.name.clone(),
                image: image.to_string(),
            })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

pub(crate) fn vector_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// Gaussian similarity of the two candidates' parent-image global vectors.
pub fn edge_weight(u: &CandidateNode, v: &CandidateNode, psi: &PsiTable, gamma: f64) -> Result<f64> {
    if u.query_feature_id == v.query_feature_id {
        return Err(Error::Contract(format!(
            "no edge between candidates of the same query feature {}",
            u.query_feature_id
        )));
    }
    let d = vector_distance(psi.get(u.parent_image())?, psi.get(v.parent_image())?)?;
    Ok(gaussian_similarity(d, gamma))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchingGraph {
    pub nodes: Vec<CandidateNode>,
    pub a: AffinityMatrix,
    pub b: NodeScoreVector,
    pub gamma: f64,
}

impl MatchingGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Flattens candidates in `(query_feature_id, nn_rank)` order and fills `A`
/// with cross-feature edge weights; same-feature pairs stay 0.
pub fn build_matching_graph(selected: &[Vec<CandidateNode>], psi: &PsiTable, gamma: f64) -> Result<MatchingGraph> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Config(format!("gamma {gamma} must be positive")));
    }
    let survivors = selected.iter().filter(|c| !c.is_empty()).count();
    if survivors < 2 {
        return Err(Error::TooFewQueryFeatures { survivors });
    }
    let mut nodes: Vec<CandidateNode> = selected.iter().flatten().cloned().collect();
    nodes.sort_by_key(|c| (c.query_feature_id, c.nn_rank));

    let vectors: Vec<&[f64]> = nodes.iter().map(|c| psi.get(c.parent_image())).collect::<Result<_>>()?;
    let n = nodes.len();
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            if nodes[i].query_feature_id == nodes[j].query_feature_id {
                continue;
            }
            let w = gaussian_similarity(vector_distance(vectors[i], vectors[j])?, gamma);
            entries[i * n + j] = w;
            entries[j * n + i] = w;
        }
    }
    let a = AffinityMatrix::new(n, entries)?;
    let b = NodeScoreVector::new(nodes.iter().map(|c| c.zeta).collect())?;
    Ok(MatchingGraph { nodes, a, b, gamma })
}

/// Extracted clusters and the per-image vote tally over all their members.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatchResult {
    pub clusters: Vec<DominantSetResult>,
    pub votes: BTreeMap<ImageId, usize>,
}

impl FeatureMatchResult {
    /// Parent image with the largest summed membership inside one cluster.
    pub fn dominant_image(&self, graph: &MatchingGraph, cluster: usize) -> Option<ImageId> {
        let c = self.clusters.get(cluster)?;
        let mut mass: BTreeMap<&ImageId, f64> = BTreeMap::new();
        for (&node, &x) in &c.membership {
            *mass.entry(graph.nodes[node].parent_image()).or_default() += x;
        }
        mass.into_iter()
            .fold(None::<(&ImageId, f64)>, |best, (img, m)| match best {
                Some((_, bm)) if bm >= m => best,
                _ => Some((img, m)),
            })
            .map(|(img, _)| img.clone())
    }
}

/// Homogenizes `(A, scale * b)` and peels up to `k` dominant sets.
pub fn match_features(graph: &MatchingGraph, k: usize, node_score_scale: f64, solver: &SolverConfig) -> Result<FeatureMatchResult> {
    if k == 0 {
        return Err(Error::Config("cluster count must be at least 1".into()));
    }
    let b = homogenize_scaled(&graph.a, &graph.b, node_score_scale)?;
    let clusters = extract_dominant_sets(&b, k, solver)?;
    let mut votes = BTreeMap::new();
    for c in &clusters {
        for node in c.support.iter() {
            *votes.entry(graph.nodes[node].parent_image().clone()).or_insert(0) += 1;
        }
    }
    Ok(FeatureMatchResult { clusters, votes })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteOutcome {
    pub image: ImageId,
    pub votes: usize,
    /// Another image had the same count; the smallest id won.
    pub tie: bool,
}

/// Highest-vote image; ties go to the smallest id and are flagged.
pub fn vote_winner(votes: &BTreeMap<ImageId, usize>) -> Option<VoteOutcome> {
    let max = *votes.values().max()?;
    let mut top = votes.iter().filter(|(_, &v)| v == max);
    let (image, _) = top.next()?;
    Some(VoteOutcome {
        image: image.clone(),
        votes: max,
        tie: top.next().is_some(),
    })
}

pub fn vote_localize(result: &FeatureMatchResult) -> Option<VoteOutcome> {
    vote_winner(&result.votes)
}

/// Baseline: each query feature votes for the parent image of its first neighbor.
pub fn first_nn_vote(lists: &[NeighborList]) -> Option<VoteOutcome> {
    let mut votes = BTreeMap::new();
    for l in lists {
        if let Some(n) = l.neighbors.first() {
            *votes.entry(n.descriptor.parent_image.clone()).or_insert(0) += 1;
        }
    }
    vote_winner(&votes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DEFAULT_SUPPORT_CUTOFF;

    fn node(qf: usize, rank: usize, img: &str) -> CandidateNode {
        CandidateNode {
            query_feature_id: qf,
            nn_rank: rank,
            descriptor: LocalDescriptor::new(vec![0.0], ImageId::new(img), rank),
            zeta: 1.0,
        }
    }

    fn psi(entries: &[(&str, Vec<f64>)]) -> PsiTable {
        let mut t = PsiTable::new("gps");
        for (k, v) in entries {
            t.insert(ImageId::new(*k), v.clone());
        }
        t
    }

    #[test]
    fn edge_weight_closed_forms() {
        let t = psi(&[("x", vec![0.0, 0.0]), ("y", vec![256.0, 0.0]), ("z", vec![12.0, 0.0])]);
        assert_eq!(edge_weight(&node(0, 0, "x"), &node(1, 0, "x"), &t, 128.0).unwrap(), 1.0);
        let w = edge_weight(&node(0, 0, "x"), &node(1, 0, "y"), &t, 128.0).unwrap();
        assert!((w - (-2.0f64).exp()).abs() < 1e-15);
        let w = edge_weight(&node(0, 0, "x"), &node(1, 0, "z"), &t, 128.0).unwrap();
        assert!((w - (-144.0f64 / 32768.0).exp()).abs() < 1e-15);
        assert!((w - 0.99562).abs() < 1e-5);
        assert!(edge_weight(&node(0, 0, "x"), &node(0, 1, "z"), &t, 128.0).is_err());
    }

    #[test]
    fn missing_psi_is_named() {
        let t = psi(&[("x", vec![0.0])]);
        let err = edge_weight(&node(0, 0, "x"), &node(1, 0, "q"), &t, 128.0).unwrap_err();
        assert!(err.to_string().contains("`gps`") && err.to_string().contains("`q`"));
    }

    #[test]
    fn two_by_two_graph_has_eight_entries() {
        let t = psi(&[("x", vec![0.0]), ("y", vec![30.0])]);
        let sel = vec![vec![node(0, 0, "x"), node(0, 1, "y")], vec![node(1, 0, "x"), node(1, 1, "y")]];
        let g = build_matching_graph(&sel, &t, 128.0).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g.a.as_slice().iter().filter(|v| **v != 0.0).count(), 8);
        assert_eq!(g.a.get(0, 1), 0.0);
        assert_eq!(g.a.get(2, 3), 0.0);
    }

    #[test]
    fn single_query_feature_is_rejected() {
        let t = psi(&[("x", vec![0.0])]);
        let sel = vec![vec![node(0, 0, "x"), node(0, 1, "x")], vec![]];
        assert!(matches!(
            build_matching_graph(&sel, &t, 128.0),
            Err(Error::TooFewQueryFeatures { survivors: 1 })
        ));
    }

    #[test]
    fn nodes_are_ordered_by_feature_then_rank() {
        let t = psi(&[("x", vec![0.0])]);
        let sel = vec![vec![node(3, 1, "x"), node(3, 0, "x")], vec![node(1, 0, "x")]];
        let g = build_matching_graph(&sel, &t, 128.0).unwrap();
        let keys: Vec<_> = g.nodes.iter().map(|c| (c.query_feature_id, c.nn_rank)).collect();
        assert_eq!(keys, vec![(1, 0), (3, 0), (3, 1)]);
    }

    #[test]
    fn identical_single_image_gives_one_uniform_cluster() {
        let t = psi(&[("x", vec![0.0])]);
        let sel: Vec<Vec<CandidateNode>> = (0..4).map(|q| vec![node(q, 0, "x")]).collect();
        let g = build_matching_graph(&sel, &t, 128.0).unwrap();
        let r = match_features(&g, 3, 1.0, &SolverConfig::default()).unwrap();
        assert_eq!(r.clusters.len(), 1);
        assert_eq!(r.clusters[0].support.len(), 4);
        for &m in r.clusters[0].membership.values() {
            assert!((m - 0.25).abs() < 1e-9);
        }
        assert_eq!(r.votes[&ImageId::new("x")], 4);
    }

    #[test]
    fn planted_image_wins_first_cluster() {
        // Five query features each have their true match on x (tight GPS
        // neighborhood) plus a far-away distractor.
        let mut t = psi(&[("x", vec![0.0, 0.0]), ("x2", vec![6.0, 0.0])]);
        let mut sel = Vec::new();
        for q in 0..5 {
            let far = format!("d{q}");
            t.insert(ImageId::new(far.as_str()), vec![1000.0 * (q as f64 + 1.0), 500.0]);
            let true_img = if q == 4 { "x2" } else { "x" };
            let mut c = vec![node(q, 0, true_img), node(q, 1, &far)];
            c[1].zeta = 0.5;
            sel.push(c);
        }
        let g = build_matching_graph(&sel, &t, 128.0).unwrap();
        let r = match_features(&g, 3, 1.0, &SolverConfig::default()).unwrap();
        assert_eq!(r.dominant_image(&g, 0).unwrap(), ImageId::new("x"));
        let first = &r.clusters[0];
        let feats: Vec<usize> = first.support.iter().map(|i| g.nodes[i].query_feature_id).collect();
        let mut dedup = feats.clone();
        dedup.dedup();
        assert_eq!(feats, dedup, "at most one candidate per query feature");
        assert_eq!(vote_localize(&r).unwrap().image, ImageId::new("x"));
        assert!(first.membership.values().all(|&m| m > DEFAULT_SUPPORT_CUTOFF));
    }

    #[test]
    fn vote_ties_flagged() {
        let mut v = BTreeMap::new();
        v.insert(ImageId::new("X"), 5);
        v.insert(ImageId::new("Y"), 2);
        assert_eq!(
            vote_winner(&v).unwrap(),
            VoteOutcome {
                image: ImageId::new("X"),
                votes: 5,
                tie: false
            }
        );
        v.insert(ImageId::new("X"), 3);
        v.insert(ImageId::new("Y"), 3);
        let o = vote_winner(&v).unwrap();
        assert_eq!(o.image, ImageId::new("X"));
        assert!(o.tie);
        assert!(vote_winner(&BTreeMap::new()).is_none());
    }

    #[test]
    fn first_nn_baseline_counts_first_neighbors() {
        let mk = |img: &str| Neighbor {
            descriptor: LocalDescriptor::new(vec![0.0], ImageId::new(img), 0),
            distance: 1.0,
        };
        let lists = vec![
            NeighborList { query_feature: 0, neighbors: vec![mk("b"), mk("a")] },
            NeighborList { query_feature: 1, neighbors: vec![mk("b")] },
            NeighborList { query_feature: 2, neighbors: vec![mk("a")] },
        ];
        assert_eq!(first_nn_vote(&lists).unwrap().image, ImageId::new("b"));
    }
}
