use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{euclidean, LocalDescriptor, Neighbor, NeighborList};
use crate::error::{Error, Result};

/// Hierarchical k-means tree parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub branching: usize,
    /// Nodes with at most this many points become leaves.
    pub leaf_size: usize,
    /// Lloyd iterations per split.
    pub kmeans_iterations: usize,
    /// Descriptors whose exact distance is computed per query (best-bin-first budget).
    pub checks: usize,
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            branching: 16,
            leaf_size: 16,
            kmeans_iterations: 10,
            checks: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IndexBackend {
    Exact,
    KmeansTree(TreeParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexConfig {
    pub backend: IndexBackend,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            backend: IndexBackend::Exact,
        }
    }
}

impl IndexConfig {
    pub fn kmeans_tree() -> Self {
        Self {
            backend: IndexBackend::KmeansTree(TreeParams::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum TreeNode {
    Inner {
        centers: Vec<Vec<f32>>,
        children: Vec<usize>,
    },
    Leaf {
        points: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct KmeansTree {
    params: TreeParams,
    nodes: Vec<TreeNode>,
}

/// Reference descriptors plus an optional search tree. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorIndex {
    dim: usize,
    descriptors: Vec<LocalDescriptor>,
    tree: Option<KmeansTree>,
}

pub fn build_index(references: Vec<LocalDescriptor>, config: &IndexConfig) -> Result<DescriptorIndex> {
    let Some(first) = references.first() else {
        return Err(Error::EmptyIndex);
    };
    let dim = first.dim();
    for d in &references {
        if d.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: d.dim(),
            });
        }
        if d.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix(format!(
                "non-finite descriptor {} of {}",
                d.feature_id, d.parent_image
            )));
        }
    }
    let tree = match config.backend {
        IndexBackend::Exact => None,
        IndexBackend::KmeansTree(params) => {
            if params.branching < 2 || params.leaf_size == 0 || params.checks == 0 {
                return Err(Error::Config(
                    "k-means tree needs branching >= 2, leaf_size >= 1, checks >= 1".into(),
                ));
            }
            Some(KmeansTree::build(&references, params))
        }
    };
    Ok(DescriptorIndex {
        dim,
        descriptors: references,
        tree,
    })
}

/// Ascending distance, then `(parent_image, feature_id)`.
fn neighbor_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then_with(|| a.descriptor.parent_image.cmp(&b.descriptor.parent_image))
        .then_with(|| a.descriptor.feature_id.cmp(&b.descriptor.feature_id))
}

impl DescriptorIndex {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn descriptors(&self) -> &[LocalDescriptor] {
        &self.descriptors
    }

    pub fn backend(&self) -> IndexBackend {
        match &self.tree {
            None => IndexBackend::Exact,
            Some(t) => IndexBackend::KmeansTree(t.params),
        }
    }

    /// The `m` nearest references to `query`; shorter when the index holds fewer.
    pub fn knn(&self, query: &[f32], m: usize, query_feature: usize) -> Result<NeighborList> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        if m == 0 {
            return Err(Error::Config("knn needs m >= 1".into()));
        }
        let candidates: Vec<usize> = match &self.tree {
            None => (0..self.descriptors.len()).collect(),
            Some(tree) => tree.candidates(query, m),
        };
        Ok(NeighborList {
            query_feature,
            neighbors: self.rank(query, candidates, m),
        })
    }

    /// Exhaustive search regardless of backend.
    pub fn knn_exact(&self, query: &[f32], m: usize, query_feature: usize) -> Result<NeighborList> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        Ok(NeighborList {
            query_feature,
            neighbors: self.rank(query, (0..self.descriptors.len()).collect(), m.max(1)),
        })
    }

    fn rank(&self, query: &[f32], candidates: Vec<usize>, m: usize) -> Vec<Neighbor> {
        let mut all: Vec<Neighbor> = candidates
            .into_iter()
            .map(|i| Neighbor {
                distance: self.descriptors[i].distance(query),
                descriptor: self.descriptors[i].clone(),
            })
            .collect();
        if all.len() > m {
            all.select_nth_unstable_by(m - 1, neighbor_order);
            all.truncate(m);
        }
        all.sort_by(neighbor_order);
        all
    }
}

impl KmeansTree {
    fn build(data: &[LocalDescriptor], params: TreeParams) -> Self {
        let mut tree = KmeansTree {
            params,
            nodes: Vec::new(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        tree.split(data, (0..data.len()).collect(), &mut rng);
        tree
    }

    fn split(&mut self, data: &[LocalDescriptor], points: Vec<usize>, rng: &mut ChaCha8Rng) -> usize {
        let id = self.nodes.len();
        if points.len() <= self.params.leaf_size.max(self.params.branching) {
            self.nodes.push(TreeNode::Leaf { points });
            return id;
        }
        let (centers, groups) = kmeans(data, &points, self.params.branching, self.params.kmeans_iterations, rng);
        if groups.iter().filter(|g| !g.is_empty()).count() < 2 {
            // All points coincide; further splitting cannot separate them.
            self.nodes.push(TreeNode::Leaf { points });
            return id;
        }
        self.nodes.push(TreeNode::Leaf { points: Vec::new() });
        let mut kept_centers = Vec::new();
        let mut children = Vec::new();
        for (c, g) in centers.into_iter().zip(groups) {
            if g.is_empty() {
                continue;
            }
            kept_centers.push(c);
            children.push(self.split(data, g, rng));
        }
        self.nodes[id] = TreeNode::Inner {
            centers: kept_centers,
            children,
        };
        id
    }

    /// Best-bin-first descent: always expand the closest unexplored branch
    /// until the checks budget is spent.
    fn candidates(&self, query: &[f32], m: usize) -> Vec<usize> {
        let budget = self.params.checks.max(m);
        let mut out = Vec::new();
        let mut heap = BinaryHeap::new();
        heap.push(Reverse((OrdF64(0.0), 0usize)));
        while let Some(Reverse((_, node))) = heap.pop() {
            match &self.nodes[node] {
                TreeNode::Leaf { points } => {
                    out.extend_from_slice(points);
                    if out.len() >= budget {
                        break;
                    }
                }
                TreeNode::Inner { centers, children } => {
                    for (c, &child) in centers.iter().zip(children) {
                        heap.push(Reverse((OrdF64(euclidean(c, query)), child)));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn squared(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// k-means++ seeding followed by Lloyd iterations over `points`.
fn kmeans(
    data: &[LocalDescriptor],
    points: &[usize],
    k: usize,
    iterations: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<f32>>, Vec<Vec<usize>>) {
    let k = k.min(points.len());
    let mut centers: Vec<Vec<f32>> = vec![data[points[rng.random_range(0..points.len())]].values.clone()];
    let mut nearest: Vec<f64> = points.iter().map(|&p| squared(&data[p].values, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = points.len() - 1;
        for (i, &w) in nearest.iter().enumerate() {
            if target < w {
                pick = i;
                break;
            }
            target -= w;
        }
        let c = data[points[pick]].values.clone();
        for (i, &p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(squared(&data[p].values, &c));
        }
        centers.push(c);
    }

    let dim = centers[0].len();
    let mut assign = vec![0usize; points.len()];
    for iter in 0..=iterations {
        let mut changed = false;
        for (i, &p) in points.iter().enumerate() {
            let best = centers
                .iter()
                .enumerate()
                .map(|(c, v)| (squared(&data[p].values, v), c))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .map(|(_, c)| c)
                .unwrap_or(0);
            if best != assign[i] || iter == 0 {
                changed |= best != assign[i];
                assign[i] = best;
            }
        }
        if iter > 0 && !changed {
            break;
        }
        if iter == iterations {
            break;
        }
        let mut sums = vec![vec![0.0f64; dim]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (i, &p) in points.iter().enumerate() {
            counts[assign[i]] += 1;
            for (s, &v) in sums[assign[i]].iter_mut().zip(&data[p].values) {
                *s += v as f64;
            }
        }
        for (c, (s, &n)) in centers.iter_mut().zip(sums.iter().zip(&counts)) {
            if n > 0 {
                for (cv, sv) in c.iter_mut().zip(s) {
                    *cv = (sv / n as f64) as f32;
                }
            }
        }
    }

    let mut groups = vec![Vec::new(); centers.len()];
    for (i, &p) in points.iter().enumerate() {
        groups[assign[i]].push(p);
    }
    (centers, groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageId;
    use rand_distr::{Distribution, Uniform};

    fn desc(v: Vec<f32>, img: &str, f: usize) -> LocalDescriptor {
        LocalDescriptor::new(v, ImageId::new(img), f)
    }

    #[test]
    fn one_dimensional_nearest() {
        let refs = vec![desc(vec![0.0], "a", 0), desc(vec![1.0], "a", 1), desc(vec![10.0], "b", 0)];
        for cfg in [IndexConfig::default(), IndexConfig::kmeans_tree()] {
            let idx = build_index(refs.clone(), &cfg).unwrap();
            let nn = idx.knn(&[0.4], 2, 0).unwrap();
            assert_eq!(nn.neighbors[0].descriptor.values, vec![0.0]);
            assert_eq!(nn.len(), 2);
        }
    }

    #[test]
    fn duplicates_return_zero_first_with_tie_break() {
        let refs = vec![
            desc(vec![1.0, 1.0], "b", 3),
            desc(vec![1.0, 1.0], "a", 7),
            desc(vec![1.0, 1.0], "a", 2),
            desc(vec![5.0, 5.0], "a", 0),
        ];
        let idx = build_index(refs, &IndexConfig::default()).unwrap();
        let nn = idx.knn(&[1.0, 1.0], 3, 0).unwrap();
        let keys: Vec<(String, usize)> = nn
            .neighbors
            .iter()
            .map(|n| (n.descriptor.parent_image.to_string(), n.descriptor.feature_id))
            .collect();
        assert_eq!(keys, vec![("a".into(), 2), ("a".into(), 7), ("b".into(), 3)]);
        assert!(nn.distances().all(|d| d == 0.0));
    }

    #[test]
    fn truncates_to_reference_count() {
        let idx = build_index(vec![desc(vec![0.0], "a", 0)], &IndexConfig::default()).unwrap();
        assert_eq!(idx.knn(&[3.0], 10, 0).unwrap().len(), 1);
    }

    #[test]
    fn rejects_empty_and_ragged() {
        assert!(matches!(build_index(vec![], &IndexConfig::default()), Err(Error::EmptyIndex)));
        let ragged = vec![desc(vec![0.0], "a", 0), desc(vec![0.0, 1.0], "a", 1)];
        assert!(build_index(ragged, &IndexConfig::default()).is_err());
        let idx = build_index(vec![desc(vec![0.0], "a", 0)], &IndexConfig::default()).unwrap();
        assert!(idx.knn(&[0.0, 0.0], 1, 0).is_err());
    }

    fn random_refs(n: usize, dim: usize, seed: u64) -> Vec<LocalDescriptor> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Uniform::new(0.0f32, 1.0).unwrap();
        (0..n)
            .map(|i| desc((0..dim).map(|_| u.sample(&mut rng)).collect(), &format!("img{:03}", i / 10), i % 10))
            .collect()
    }

    #[test]
    fn exact_matches_full_sort() {
        let refs = random_refs(300, 8, 3);
        let idx = build_index(refs.clone(), &IndexConfig::default()).unwrap();
        let q = &random_refs(1, 8, 99)[0].values;
        let nn = idx.knn(q, 20, 0).unwrap();
        let mut all: Vec<Neighbor> = refs
            .iter()
            .map(|d| Neighbor {
                distance: d.distance(q),
                descriptor: d.clone(),
            })
            .collect();
        all.sort_by(neighbor_order);
        assert_eq!(nn.neighbors, all[..20].to_vec());
    }

    #[test]
    fn tree_top1_agrees_with_exact() {
        let refs = random_refs(1000, 16, 5);
        let exact = build_index(refs.clone(), &IndexConfig::default()).unwrap();
        let tree = build_index(refs, &IndexConfig::kmeans_tree()).unwrap();
        let queries = random_refs(100, 16, 6);
        let agree = queries
            .iter()
            .filter(|q| {
                let a = exact.knn(&q.values, 1, 0).unwrap();
                let b = tree.knn(&q.values, 1, 0).unwrap();
                a.neighbors[0] == b.neighbors[0]
            })
            .count();
        assert!(agree >= 95, "agreement {agree}/100");
    }

    #[test]
    fn index_serde_round_trip() {
        let idx = build_index(random_refs(100, 4, 1), &IndexConfig::kmeans_tree()).unwrap();
        let s = serde_json::to_string(&idx).unwrap();
        let back: DescriptorIndex = serde_json::from_str(&s).unwrap();
        assert_eq!(back, idx);
    }
}
