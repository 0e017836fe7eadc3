use std::collections::BTreeMap;

use crate::error::Result;
use crate::graph::{support, NodeSet, SimplexVector};

use super::{find_equilibrium, PayoffMatrix, SolverConfig};

/// Number of local maximizers extracted when the caller does not say.
pub const DEFAULT_CLUSTER_COUNT: usize = 3;

/// Objectives at or below this value mean the remainder holds no cluster.
const MIN_CLUSTER_OBJECTIVE: f64 = 1e-12;

/// One extracted local maximizer, indexed in the original graph.
#[derive(Debug, Clone, PartialEq)]
pub struct DominantSetResult {
    pub support: NodeSet,
    /// `x_i` for each support node, renormalized over the support.
    pub membership: BTreeMap<usize, f64>,
    pub objective: f64,
    /// 1-based extraction order.
    pub rank: usize,
}

/// Extracts up to `k` dominant sets by peeling: solve from the barycenter of
/// the remaining nodes, record the support, delete it, repeat.
///
/// Stops early when fewer than two nodes remain or the remainder's best
/// objective is not positive.
pub fn extract_dominant_sets(
    b: &PayoffMatrix,
    k: usize,
    config: &SolverConfig,
) -> Result<Vec<DominantSetResult>> {
    let mut remaining: Vec<usize> = (0..b.len()).collect();
    let mut out = Vec::new();
    while out.len() < k && remaining.len() >= 2 {
        let sub = b.principal(&remaining);
        let eq = find_equilibrium(&sub, &SimplexVector::barycenter(remaining.len()), config)?;
        if eq.objective <= MIN_CLUSTER_OBJECTIVE {
            break;
        }
        let local = support(&eq.x, config.support_cutoff);
        let mass: f64 = local.iter().map(|i| eq.x.get(i)).sum();
        let membership: BTreeMap<usize, f64> = local
            .iter()
            .map(|i| (remaining[i], eq.x.get(i) / mass))
            .collect();
        let support: NodeSet = membership.keys().copied().collect();
        remaining.retain(|v| !support.contains(*v));
        out.push(DominantSetResult {
            support,
            membership,
            objective: eq.objective,
            rank: out.len() + 1,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cliques(sizes: &[usize]) -> PayoffMatrix {
        let n: usize = sizes.iter().sum();
        let mut label = Vec::new();
        for (c, &s) in sizes.iter().enumerate() {
            label.extend(std::iter::repeat_n(c, s));
        }
        PayoffMatrix::from_fn(n, |i, j| {
            if i != j && label[i] == label[j] {
                1.0
            } else {
                0.0
            }
        })
        .unwrap()
    }

    #[test]
    fn recovers_planted_cliques() {
        let b = cliques(&[4, 3, 2]);
        let r = extract_dominant_sets(&b, 3, &SolverConfig::default()).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r[0].support.as_slice(), &[0, 1, 2, 3]);
        assert_eq!(r[1].support.as_slice(), &[4, 5, 6]);
        assert_eq!(r[2].support.as_slice(), &[7, 8]);
        assert!(r[0].objective > r[1].objective && r[1].objective > r[2].objective);
        for (i, d) in r.iter().enumerate() {
            assert_eq!(d.rank, i + 1);
            let s: f64 = d.membership.values().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_clique_yields_one() {
        let r = extract_dominant_sets(&cliques(&[5]), 3, &SolverConfig::default()).unwrap();
        assert_eq!(r.len(), 1);
    }

    #[test]
    fn empty_remainder_stops() {
        let b = PayoffMatrix::new(3, vec![0.0; 9]).unwrap();
        let r = extract_dominant_sets(&b, 3, &SolverConfig::default()).unwrap();
        assert!(r.is_empty());
    }
}
