//! Definition-level dominant-set machinery.
//!
//! Everything here follows the combinatorial definition directly: the
//! relative similarity `phi`, the recursive node weights `W_S(l)`, the
//! dominance test and weighted characteristic vectors. The recursion is
//! exponential in `|S|`, so this module is the reference oracle the solvers are
//! checked against, not a production path.

use std::cell::RefCell;
use std::collections::HashMap;

use crate::error::{Error, Result};

/// Sum-to-one tolerance for [`SimplexVector`].
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Default cutoff for [`support`]: components at or below it are dust.
pub const DEFAULT_SUPPORT_CUTOFF: f64 = 1e-8;

/// Weights with `|w| <= DEGENERACY_BAND` are reported as degenerate instead of
/// being classified by sign.
pub const DEGENERACY_BAND: f64 = 1e-12;

/// Largest node count the exact dominance test accepts.
pub const ORACLE_NODE_LIMIT: usize = 20;

/// Symmetric, nonnegative, zero-diagonal similarity matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl AffinityMatrix {
    /// Validates and wraps a row-major `n x n` buffer.
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                actual: entries.len(),
            });
        }
        for i in 0..n {
            let d = entries[i * n + i];
            if d != 0.0 {
                return Err(Error::InvalidMatrix(format!(
                    "diagonal entry ({i},{i}) is {d}, expected 0"
                )));
            }
            for j in 0..n {
                let v = entries[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidMatrix(format!(
                        "entry ({i},{j}) = {v} is not a finite nonnegative value"
                    )));
                }
                if v != entries[j * n + i] {
                    return Err(Error::InvalidMatrix(format!(
                        "entries ({i},{j}) and ({j},{i}) differ"
                    )));
                }
            }
        }
        Ok(Self { n, entries })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![0.0; n * n],
        }
    }

    /// Builds a matrix from an upper-triangle generator; `f(i, j)` is only
    /// called for `i < j`.
    pub fn from_upper<F>(n: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> f64,
    {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = f(i, j);
                entries[i * n + j] = v;
                entries[j * n + i] = v;
            }
        }
        Self::new(n, entries)
    }

    /// Builds a matrix from an undirected weighted edge list.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut entries = vec![0.0; n * n];
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidMatrix(format!(
                    "edge ({i},{j}) out of range for {n} nodes"
                )));
            }
            entries[i * n + j] = w;
            entries[j * n + i] = w;
        }
        Self::new(n, entries)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    /// Principal submatrix on `nodes`, in their order.
    pub fn principal(&self, nodes: &[usize]) -> Self {
        let m = nodes.len();
        let mut entries = Vec::with_capacity(m * m);
        for &i in nodes {
            for &j in nodes {
                entries.push(self.get(i, j));
            }
        }
        Self { n: m, entries }
    }

    /// Copy padded with `extra` isolated nodes (all-zero rows and columns).
    pub fn padded(&self, extra: usize) -> Self {
        let m = self.n + extra;
        let mut entries = vec![0.0; m * m];
        for i in 0..self.n {
            entries[i * m..i * m + self.n].copy_from_slice(self.row(i));
        }
        Self { n: m, entries }
    }
}

/// Ordered set of distinct node indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct NodeSet(Vec<usize>);

impl NodeSet {
    /// Sorts the members and rejects duplicates.
    pub fn new(mut members: Vec<usize>) -> Result<Self> {
        members.sort_unstable();
        if members.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidNodeSet(format!(
                "duplicate members in {members:?}"
            )));
        }
        Ok(Self(members))
    }

    pub fn range(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn singleton(node: usize) -> Self {
        Self(vec![node])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.0.binary_search(&node).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    pub fn with(&self, node: usize) -> Self {
        let mut v = self.0.clone();
        if let Err(pos) = v.binary_search(&node) {
            v.insert(pos, node);
        }
        Self(v)
    }

    pub fn without(&self, node: usize) -> Self {
        Self(self.0.iter().copied().filter(|&m| m != node).collect())
    }

    pub fn is_subset_of(&self, other: &NodeSet) -> bool {
        self.iter().all(|m| other.contains(m))
    }
}

impl FromIterator<usize> for NodeSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut v: Vec<usize> = iter.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Self(v)
    }
}

/// Point of the standard simplex: nonnegative, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSimplex("empty vector".into()));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidSimplex(format!(
                "component {i} = {v} is negative or not finite"
            )));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::InvalidSimplex(format!("components sum to {sum}")));
        }
        Ok(Self(values))
    }

    /// Uniform distribution over `n` nodes.
    pub fn barycenter(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    /// Uniform distribution over the members of `set` inside an `n`-vector.
    pub fn uniform_on(n: usize, set: &NodeSet) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::InvalidNodeSet("empty set".into()));
        }
        let mut v = vec![0.0; n];
        let w = 1.0 / set.len() as f64;
        for m in set.iter() {
            if m >= n {
                return Err(Error::InvalidNodeSet(format!("node {m} out of range")));
            }
            v[m] = w;
        }
        Ok(Self(v))
    }

    /// Pure strategy `e_i`.
    pub fn vertex(n: usize, i: usize) -> Self {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }
}

/// Indices whose component exceeds `cutoff`.
pub fn support(x: &SimplexVector, cutoff: f64) -> NodeSet {
    NodeSet(
        x.values()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > cutoff)
            .map(|(i, _)| i)
            .collect(),
    )
}

/// Outcome of the dominance test. Weights inside the degeneracy band are not
/// classified.
#[derive(Debug, Clone, PartialEq)]
pub enum Dominance {
    Dominant,
    NotDominant,
    Degenerate { set: Vec<usize>, node: usize, value: f64 },
}

/// Relative similarity `B(l,k) - mean_{p in S} B(l,p)` for `l` in `S`, `k` outside.
pub fn phi(set: &NodeSet, l: usize, k: usize, b: &AffinityMatrix) -> Result<f64> {
    check_members(set, b)?;
    if !set.contains(l) {
        return Err(Error::Contract(format!("phi: node {l} is not in S")));
    }
    if set.contains(k) {
        return Err(Error::Contract(format!("phi: node {k} is in S")));
    }
    if k >= b.len() {
        return Err(Error::Contract(format!("phi: node {k} out of range")));
    }
    let mean = set.iter().map(|p| b.get(l, p)).sum::<f64>() / set.len() as f64;
    Ok(b.get(l, k) - mean)
}

/// Recursive weight `W_S(l)`.
pub fn weight_w(set: &NodeSet, l: usize, b: &AffinityMatrix) -> Result<f64> {
    let oracle = WeightOracle::new(b)?;
    let mask = oracle.mask_of(set)?;
    if l >= b.len() || mask & (1 << l) == 0 {
        return Err(Error::Contract(format!("weight_w: node {l} is not in S")));
    }
    Ok(oracle.weight(mask, l))
}

/// Total weight `W(S) = sum_l W_S(l)`.
pub fn total_weight(set: &NodeSet, b: &AffinityMatrix) -> Result<f64> {
    let oracle = WeightOracle::new(b)?;
    let mask = oracle.mask_of(set)?;
    Ok(oracle.total(mask))
}

/// Exact dominance test including the `W(T) > 0` precondition over every
/// non-empty `T` in `S`. Degenerate weights surface as
/// [`Error::DegenerateWeight`].
pub fn is_dominant_set(set: &NodeSet, b: &AffinityMatrix) -> Result<bool> {
    match classify_dominance(set, b)? {
        Dominance::Dominant => Ok(true),
        Dominance::NotDominant => Ok(false),
        Dominance::Degenerate { set, node, value } => {
            Err(Error::DegenerateWeight { set, node, value })
        }
    }
}

/// Full dominance classification with subset enumeration (`n <= 20`).
pub fn classify_dominance(set: &NodeSet, b: &AffinityMatrix) -> Result<Dominance> {
    if b.len() > ORACLE_NODE_LIMIT {
        return Err(Error::OracleTooLarge {
            n: b.len(),
            limit: ORACLE_NODE_LIMIT,
        });
    }
    let oracle = WeightOracle::new(b)?;
    let s = oracle.mask_of(set)?;
    let mut verdict = Verdict::default();

    // Every non-empty subset T of S must have W(T) > 0.
    let mut t = s;
    while t != 0 {
        verdict.positive(t, None, oracle.total(t));
        if verdict.failed {
            return Ok(Dominance::NotDominant);
        }
        t = (t - 1) & s;
    }
    oracle.sign_conditions(s, &mut verdict);
    Ok(verdict.finish())
}

/// The two sign conditions plus `W(S) > 0`, without subset enumeration.
pub fn check_sign_conditions(set: &NodeSet, b: &AffinityMatrix) -> Result<Dominance> {
    let oracle = WeightOracle::new(b)?;
    let s = oracle.mask_of(set)?;
    let mut verdict = Verdict::default();
    verdict.positive(s, None, oracle.total(s));
    oracle.sign_conditions(s, &mut verdict);
    Ok(verdict.finish())
}

/// Weighted characteristic vector `x_l = W_S(l) / W(S)` on `S`, zero elsewhere.
pub fn characteristic_vector(set: &NodeSet, b: &AffinityMatrix) -> Result<SimplexVector> {
    let oracle = WeightOracle::new(b)?;
    let s = oracle.mask_of(set)?;
    let total = oracle.total(s);
    if total <= 0.0 {
        return Err(Error::NotACluster(total));
    }
    let mut x = vec![0.0; b.len()];
    for l in set.iter() {
        x[l] = oracle.weight(s, l) / total;
    }
    // Exact zeros off S keep the support intact; only S is renormalized.
    let sum: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= sum);
    SimplexVector::new(x)
}

fn check_members(set: &NodeSet, b: &AffinityMatrix) -> Result<()> {
    if set.is_empty() {
        return Err(Error::InvalidNodeSet("empty set".into()));
    }
    if let Some(m) = set.iter().find(|&m| m >= b.len()) {
        return Err(Error::InvalidNodeSet(format!(
            "node {m} out of range for {} nodes",
            b.len()
        )));
    }
    Ok(())
}

#[derive(Default)]
struct Verdict {
    failed: bool,
    degenerate: Option<(u64, usize, f64)>,
}

impl Verdict {
    fn positive(&mut self, mask: u64, node: Option<usize>, value: f64) {
        self.record(mask, node, value, value > 0.0);
    }

    fn negative(&mut self, mask: u64, node: usize, value: f64) {
        self.record(mask, Some(node), value, value < 0.0);
    }

    fn record(&mut self, mask: u64, node: Option<usize>, value: f64, holds: bool) {
        if value.abs() <= DEGENERACY_BAND {
            self.degenerate
                .get_or_insert((mask, node.unwrap_or(usize::MAX), value));
        } else if !holds {
            self.failed = true;
        }
    }

    fn finish(self) -> Dominance {
        if self.failed {
            return Dominance::NotDominant;
        }
        match self.degenerate {
            Some((mask, node, value)) => Dominance::Degenerate {
                set: mask_members(mask),
                node,
                value,
            },
            None => Dominance::Dominant,
        }
    }
}

fn mask_members(mask: u64) -> Vec<usize> {
    (0..64).filter(|i| mask & (1 << i) != 0).collect()
}

/// Memoized evaluator of the weight recursion over subsets encoded as bitmasks.
struct WeightOracle<'a> {
    b: &'a AffinityMatrix,
    memo: RefCell<HashMap<(u64, usize), f64>>,
}

impl<'a> WeightOracle<'a> {
    fn new(b: &'a AffinityMatrix) -> Result<Self> {
        if b.len() > 64 {
            return Err(Error::OracleTooLarge {
                n: b.len(),
                limit: 64,
            });
        }
        Ok(Self {
            b,
            memo: RefCell::new(HashMap::new()),
        })
    }

    fn mask_of(&self, set: &NodeSet) -> Result<u64> {
        check_members(set, self.b)?;
        Ok(set.iter().fold(0u64, |m, i| m | (1 << i)))
    }

    fn weight(&self, s: u64, l: usize) -> f64 {
        if s.count_ones() == 1 {
            return 1.0;
        }
        if let Some(&w) = self.memo.borrow().get(&(s, l)) {
            return w;
        }
        let rest = s & !(1 << l);
        let size = rest.count_ones() as f64;
        let mut w = 0.0;
        for k in iter_mask(rest) {
            let mean = iter_mask(rest).map(|p| self.b.get(k, p)).sum::<f64>() / size;
            let phi = self.b.get(k, l) - mean;
            w += phi * self.weight(rest, k);
        }
        self.memo.borrow_mut().insert((s, l), w);
        w
    }

    fn total(&self, s: u64) -> f64 {
        iter_mask(s).map(|l| self.weight(s, l)).sum()
    }

    fn sign_conditions(&self, s: u64, verdict: &mut Verdict) {
        for l in iter_mask(s) {
            verdict.positive(s, Some(l), self.weight(s, l));
        }
        for l in (0..self.b.len()).filter(|&l| s & (1 << l) == 0) {
            let grown = s | (1 << l);
            verdict.negative(grown, l, self.weight(grown, l));
        }
    }
}

fn iter_mask(mask: u64) -> impl Iterator<Item = usize> {
    let mut m = mask;
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(i)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_graph(five: bool) -> AffinityMatrix {
        let n = if five { 5 } else { 4 };
        let mut edges = vec![
            (0, 1, 20.0),
            (0, 2, 21.0),
            (1, 2, 22.0),
            (0, 3, 30.0),
            (1, 3, 35.0),
            (2, 3, 41.0),
        ];
        if five {
            edges.extend((0..4).map(|i| (i, 4, 1.0)));
        }
        AffinityMatrix::from_edges(n, &edges).unwrap()
    }

    #[test]
    fn affinity_validation() {
        assert!(AffinityMatrix::new(2, vec![0.0, 1.0, 2.0, 0.0]).is_err());
        assert!(AffinityMatrix::new(2, vec![1.0, 1.0, 1.0, 0.0]).is_err());
        assert!(AffinityMatrix::new(2, vec![0.0, -1.0, -1.0, 0.0]).is_err());
        assert!(AffinityMatrix::new(2, vec![0.0, 1.0, 1.0]).is_err());
        assert!(AffinityMatrix::new(2, vec![0.0, 1.0, 1.0, 0.0]).is_ok());
    }

    #[test]
    fn phi_examples() {
        let b = AffinityMatrix::from_edges(3, &[(0, 1, 20.0), (0, 2, 5.0)]).unwrap();
        assert_eq!(phi(&NodeSet::singleton(0), 0, 1, &b).unwrap(), 20.0);
        let s = NodeSet::new(vec![0, 1]).unwrap();
        assert_eq!(phi(&s, 0, 2, &b).unwrap(), -5.0);
    }

    #[test]
    fn phi_contract() {
        let b = example_graph(true);
        let s = NodeSet::new(vec![0, 1]).unwrap();
        assert!(matches!(phi(&s, 2, 3, &b), Err(Error::Contract(_))));
        assert!(matches!(phi(&s, 0, 1, &b), Err(Error::Contract(_))));
    }

    #[test]
    fn phi_on_example_triangle() {
        // B(0,3) - (B(0,0) + B(0,1) + B(0,2)) / 3 = 30 - 41/3
        let b = example_graph(false);
        let s = NodeSet::new(vec![0, 1, 2]).unwrap();
        let v = phi(&s, 0, 3, &b).unwrap();
        assert!((v - (30.0 - 41.0 / 3.0)).abs() < 1e-12);
        assert_eq!(v.to_bits(), phi(&s, 0, 3, &b).unwrap().to_bits());
    }

    #[test]
    fn weight_base_case() {
        let b = example_graph(true);
        assert_eq!(weight_w(&NodeSet::singleton(3), 3, &b).unwrap(), 1.0);
        assert_eq!(total_weight(&NodeSet::singleton(2), &b).unwrap(), 1.0);
    }

    #[test]
    fn weight_two_nodes_is_edge_weight() {
        // W_{i,j}(j) = phi_{i}(i, j) * 1 = B(i,j)
        let b = example_graph(true);
        let s = NodeSet::new(vec![1, 3]).unwrap();
        assert_eq!(weight_w(&s, 3, &b).unwrap(), 35.0);
    }

    #[test]
    fn weight_rejects_bad_input() {
        let b = example_graph(true);
        let s = NodeSet::new(vec![0, 1]).unwrap();
        assert!(weight_w(&s, 2, &b).is_err());
        assert!(weight_w(&NodeSet::default(), 0, &b).is_err());
        assert!(total_weight(&NodeSet::default(), &b).is_err());
    }

    #[test]
    fn example_signs() {
        let b4 = example_graph(false);
        let b5 = example_graph(true);
        let s4 = NodeSet::range(4);
        let s5 = NodeSet::range(5);
        assert!(weight_w(&s4, 3, &b4).unwrap() > 0.0);
        assert!(weight_w(&s5, 4, &b5).unwrap() < 0.0);
        assert!(is_dominant_set(&s4, &b5).unwrap());
        assert!(!is_dominant_set(&s5, &b5).unwrap());
        assert!(total_weight(&NodeSet::range(3), &b4).unwrap() > 0.0);
    }

    #[test]
    fn isolated_singleton_is_dominant() {
        let b = AffinityMatrix::zeros(1);
        assert!(is_dominant_set(&NodeSet::singleton(0), &b).unwrap());
    }

    #[test]
    fn degenerate_weights_are_reported() {
        // Two isolated nodes: W_{0,1}(1) = B(0,1) = 0 sits in the band.
        let b = AffinityMatrix::zeros(2);
        let err = is_dominant_set(&NodeSet::singleton(0), &b).unwrap_err();
        assert!(matches!(err, Error::DegenerateWeight { node: 1, .. }));
    }

    #[test]
    fn oracle_guard() {
        let b = AffinityMatrix::zeros(21);
        assert!(matches!(
            is_dominant_set(&NodeSet::singleton(0), &b),
            Err(Error::OracleTooLarge { .. })
        ));
    }

    #[test]
    fn characteristic_vector_examples() {
        let b = example_graph(true);
        let x = characteristic_vector(&NodeSet::singleton(2), &b).unwrap();
        assert_eq!(x.values(), &[0.0, 0.0, 1.0, 0.0, 0.0]);

        let tri = AffinityMatrix::from_upper(3, |_, _| 7.0).unwrap();
        let x = characteristic_vector(&NodeSet::range(3), &tri).unwrap();
        for v in x.values() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn characteristic_vector_requires_positive_total() {
        let b = AffinityMatrix::zeros(3);
        assert!(matches!(
            characteristic_vector(&NodeSet::range(2), &b),
            Err(Error::NotACluster(_))
        ));
    }

    #[test]
    fn support_examples() {
        let x = SimplexVector::new(vec![0.5, 0.5, 0.0]).unwrap();
        assert_eq!(support(&x, DEFAULT_SUPPORT_CUTOFF).as_slice(), &[0, 1]);
        let x = SimplexVector::vertex(4, 0);
        assert_eq!(support(&x, DEFAULT_SUPPORT_CUTOFF).as_slice(), &[0]);
    }

    #[test]
    fn simplex_validation() {
        assert!(SimplexVector::new(vec![0.5, 0.4]).is_err());
        assert!(SimplexVector::new(vec![1.5, -0.5]).is_err());
        assert!(SimplexVector::new(vec![]).is_err());
        assert!(SimplexVector::new(vec![0.25; 4]).is_ok());
    }

    #[test]
    fn node_set_ops() {
        assert!(NodeSet::new(vec![1, 1]).is_err());
        let s = NodeSet::new(vec![3, 1]).unwrap();
        assert_eq!(s.as_slice(), &[1, 3]);
        assert_eq!(s.with(2).as_slice(), &[1, 2, 3]);
        assert_eq!(s.without(3).as_slice(), &[1]);
        assert!(s.is_subset_of(&NodeSet::range(4)));
    }
}
