//! Nearest-neighbor retrieval and per-query-feature candidate selection.

mod index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageId;

pub use index::{build_index, DescriptorIndex, IndexBackend, IndexConfig, TreeParams};

/// Default descriptor dimension (SIFT-sized).
pub const DEFAULT_DESCRIPTOR_DIM: usize = 128;

/// A local descriptor and the reference image it was extracted from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalDescriptor {
    pub values: Vec<f32>,
    pub parent_image: ImageId,
    pub feature_id: usize,
}

impl LocalDescriptor {
    pub fn new(values: Vec<f32>, parent_image: ImageId, feature_id: usize) -> Self {
        Self {
            values,
            parent_image,
            feature_id,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn distance(&self, other: &[f32]) -> f64 {
        euclidean(&self.values, other)
    }
}

pub fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub descriptor: LocalDescriptor,
    pub distance: f64,
}

/// Neighbors of one query feature, ascending by distance.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    pub query_feature: usize,
    pub neighbors: Vec<Neighbor>,
}

impl NeighborList {
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn distances(&self) -> impl Iterator<Item = f64> + '_ {
        self.neighbors.iter().map(|n| n.distance)
    }
}

/// Thresholds for dynamic neighbor selection and query-feature pruning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    /// Consecutive-distance ratio above which the next neighbor is kept.
    pub theta: f64,
    /// First/last distance ratio above which a query feature is dropped.
    pub beta: f64,
    /// Candidates fetched per query feature.
    pub max_pool: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            theta: 0.7,
            beta: 0.7,
            max_pool: 50,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Config(format!("theta {} not in (0, 1)", self.theta)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!("beta {} not in (0, 1)", self.beta)));
        }
        if self.max_pool < 2 {
            return Err(Error::Config(format!(
                "max_pool {} must be at least 2",
                self.max_pool
            )));
        }
        Ok(())
    }
}

/// `near / far` with the convention `0 / 0 = 1`.
fn distance_ratio(near: f64, far: f64) -> f64 {
    if far == 0.0 {
        1.0
    } else {
        near / far
    }
}

/// Dynamic neighbor selection: starting from the first neighbor, keep adding
/// the next one while `d_m / d_{m+1} > theta`.
///
/// The loop runs while `m < |NN| - 1` (1-based `m`), so the ratio involving the
/// last fetched neighbor is never tested and at most `|NN| - 1` neighbors come
/// back for pools of two or more.
pub fn dynamic_nn_select(nn: &NeighborList, theta: f64) -> &[Neighbor] {
    let len = nn.neighbors.len();
    if len == 0 {
        return &[];
    }
    let mut m = 1;
    while m + 1 < len {
        let ratio = distance_ratio(nn.neighbors[m - 1].distance, nn.neighbors[m].distance);
        if ratio > theta {
            m += 1;
        } else {
            break;
        }
    }
    &nn.neighbors[..m]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PruneDecision {
    Keep,
    /// First and last neighbors are too alike for the feature to be informative.
    Drop,
    /// Fewer than two neighbors; kept since no ratio exists.
    KeepDegenerate,
}

impl PruneDecision {
    pub fn is_kept(self) -> bool {
        !matches!(self, PruneDecision::Drop)
    }
}

/// Drops a query feature when `d(q, v_first) / d(q, v_last) > beta` over the
/// whole fetched pool.
pub fn prune_query_feature(nn: &NeighborList, beta: f64) -> PruneDecision {
    let (Some(first), Some(last)) = (nn.neighbors.first(), nn.neighbors.last()) else {
        return PruneDecision::KeepDegenerate;
    };
    if nn.neighbors.len() < 2 {
        return PruneDecision::KeepDegenerate;
    }
    if distance_ratio(first.distance, last.distance) > beta {
        PruneDecision::Drop
    } else {
        PruneDecision::Keep
    }
}

#[cfg(test)]
pub(crate) fn list_from_distances(distances: &[f64]) -> NeighborList {
    NeighborList {
        query_feature: 0,
        neighbors: distances
            .iter()
            .enumerate()
            .map(|(i, &d)| Neighbor {
                descriptor: LocalDescriptor::new(vec![d as f32], ImageId::new(format!("r{i}")), i),
                distance: d,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_stops_at_distinct_gap() {
        let nn = list_from_distances(&[1.0, 1.05, 1.1, 5.0]);
        assert_eq!(dynamic_nn_select(&nn, 0.7).len(), 3);
    }

    #[test]
    fn selection_two_neighbors() {
        let nn = list_from_distances(&[1.0, 2.0]);
        assert_eq!(dynamic_nn_select(&nn, 0.7).len(), 1);
    }

    #[test]
    fn selection_constant_profile() {
        let nn = list_from_distances(&[3.0; 10]);
        assert_eq!(dynamic_nn_select(&nn, 0.7).len(), 9);
    }

    #[test]
    fn selection_treats_zero_over_zero_as_one() {
        let nn = list_from_distances(&[0.0, 0.0, 0.0, 4.0]);
        assert_eq!(dynamic_nn_select(&nn, 0.7).len(), 3);
    }

    #[test]
    fn selection_single_and_empty() {
        assert_eq!(dynamic_nn_select(&list_from_distances(&[1.0]), 0.7).len(), 1);
        assert!(dynamic_nn_select(&list_from_distances(&[]), 0.7).is_empty());
    }

    #[test]
    fn prune_examples() {
        let drop = list_from_distances(&[0.9, 0.95, 1.0]);
        assert_eq!(prune_query_feature(&drop, 0.7), PruneDecision::Drop);
        let keep = list_from_distances(&[0.1, 0.5, 1.0]);
        assert_eq!(prune_query_feature(&keep, 0.7), PruneDecision::Keep);
        let dup = list_from_distances(&[0.0, 0.0]);
        assert_eq!(prune_query_feature(&dup, 0.7), PruneDecision::Drop);
        let one = list_from_distances(&[0.3]);
        assert_eq!(prune_query_feature(&one, 0.7), PruneDecision::KeepDegenerate);
        assert!(PruneDecision::KeepDegenerate.is_kept());
    }

    #[test]
    fn config_validation() {
        assert!(SelectionConfig::default().validate().is_ok());
        let bad = SelectionConfig {
            theta: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SelectionConfig {
            max_pool: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
