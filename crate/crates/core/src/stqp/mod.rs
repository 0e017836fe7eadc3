//! Standard quadratic programs over the simplex.
//!
//! Node-weighted problems `x'Ax + 2 b'x` are homogenized into a single payoff
//! matrix, then solved by infection-immunization dynamics ([`find_equilibrium`])
//! or, as a cross-check, by discrete replicator dynamics
//! ([`replicator_equilibrium`]). [`extract_dominant_sets`] peels several local
//! maximizers off one graph.

mod inimdyn;
mod peel;
mod replicator;

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{AffinityMatrix, SimplexVector, DEFAULT_SUPPORT_CUTOFF};

pub use inimdyn::{find_equilibrium, select_infective, step_size, Infection};
pub use peel::{extract_dominant_sets, DominantSetResult, DEFAULT_CLUSTER_COUNT};
pub use replicator::replicator_equilibrium;

/// Default convergence tolerance on [`residual_epsilon`].
pub const DEFAULT_TOLERANCE: f64 = 1e-7;

/// Symmetric payoff matrix. Unlike [`AffinityMatrix`] the diagonal and signs
/// are unrestricted.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl PayoffMatrix {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                actual: entries.len(),
            });
        }
        for i in 0..n {
            for j in 0..n {
                let v = entries[i * n + j];
                if !v.is_finite() {
                    return Err(Error::InvalidMatrix(format!(
                        "entry ({i},{j}) = {v} is not finite"
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

    /// Builds from a generator evaluated on `i <= j` and mirrored.
    pub fn from_fn<F>(n: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> f64,
    {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                entries[i * n + j] = v;
                entries[j * n + i] = v;
            }
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

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn min_entry(&self) -> f64 {
        self.entries.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_entry(&self) -> f64 {
        self.entries.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `Bx`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| dot(self.row(i), x)).collect()
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

    /// `B - diag(d)`.
    pub fn minus_diagonal(&self, d: &[f64]) -> Result<Self> {
        check_len(self.n, d.len())?;
        let mut entries = self.entries.clone();
        for (i, v) in d.iter().enumerate() {
            entries[i * self.n + i] -= v;
        }
        Ok(Self { n: self.n, entries })
    }
}

impl From<&AffinityMatrix> for PayoffMatrix {
    fn from(a: &AffinityMatrix) -> Self {
        Self {
            n: a.len(),
            entries: a.as_slice().to_vec(),
        }
    }
}

impl From<AffinityMatrix> for PayoffMatrix {
    fn from(a: AffinityMatrix) -> Self {
        Self::from(&a)
    }
}

/// Per-node scores, each a Gaussian similarity in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeScoreVector(Vec<f64>);

impl NodeScoreVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && **v <= 1.0))
        {
            return Err(Error::Contract(format!(
                "node score {i} = {v} is outside (0, 1]"
            )));
        }
        Ok(Self(values))
    }

    /// Scores `exp(-d^2 / 2 gamma^2)` for the given distances.
    pub fn from_distances(distances: &[f64], gamma: f64) -> Result<Self> {
        Self::new(
            distances
                .iter()
                .map(|&d| crate::gaussian_similarity(d, gamma))
                .collect(),
        )
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
}

/// `B = A + e b' + b e'`, so that `x'Bx = x'Ax + 2 b'x` on the simplex.
pub fn homogenize(a: &AffinityMatrix, b: &NodeScoreVector) -> Result<PayoffMatrix> {
    homogenize_scaled(a, b, 1.0)
}

/// [`homogenize`] with every node score multiplied by `scale` first.
pub fn homogenize_scaled(
    a: &AffinityMatrix,
    b: &NodeScoreVector,
    scale: f64,
) -> Result<PayoffMatrix> {
    if !scale.is_finite() || scale < 0.0 {
        return Err(Error::Config(format!("node score scale {scale} is invalid")));
    }
    let scaled: Vec<f64> = b.values().iter().map(|v| scale * v).collect();
    homogenize_scores(a, &scaled)
}

/// Homogenization with an arbitrary finite linear term.
pub fn homogenize_scores(a: &AffinityMatrix, scores: &[f64]) -> Result<PayoffMatrix> {
    check_len(a.len(), scores.len())?;
    PayoffMatrix::from_fn(a.len(), |i, j| a.get(i, j) + scores[i] + scores[j])
}

/// `f(x) = x'Bx`.
pub fn payoff_value(b: &PayoffMatrix, x: &SimplexVector) -> Result<f64> {
    check_len(b.len(), x.len())?;
    Ok(quadratic_form(b, x.values()))
}

/// Complementarity residual `sum_i min{x_i, x'Bx - (Bx)_i}^2` over all nodes.
///
/// Vanishes exactly at Nash equilibria of the symmetric game `B`: support
/// nodes earn the average payoff and no outside node earns more.
pub fn residual_epsilon(b: &PayoffMatrix, x: &SimplexVector) -> Result<f64> {
    check_len(b.len(), x.len())?;
    let g = b.mul_vec(x.values());
    let f = dot(x.values(), &g);
    Ok(residual_from(x.values(), &g, f))
}

pub(crate) fn residual_from(x: &[f64], g: &[f64], f: f64) -> f64 {
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| {
            let m = xi.min(f - gi);
            m * m
        })
        .sum()
}

/// Iteration budget and convergence settings shared by both dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub tolerance: f64,
    /// `None` means `10 n ln n + 1000`.
    pub max_iterations: Option<usize>,
    pub support_cutoff: f64,
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: None,
            support_cutoff: DEFAULT_SUPPORT_CUTOFF,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_iterations(mut self, cap: usize) -> Self {
        self.max_iterations = Some(cap);
        self
    }

    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }

    pub fn iteration_cap(&self, n: usize) -> usize {
        self.max_iterations.unwrap_or_else(|| default_iteration_cap(n))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

pub fn default_iteration_cap(n: usize) -> usize {
    let n = n.max(1) as f64;
    (10.0 * n * n.ln()).ceil() as usize + 1000
}

/// One solver step as recorded in a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub x: SimplexVector,
    pub objective: f64,
    pub iterations: usize,
    pub residual: f64,
    pub trace: Option<Vec<TraceRow>>,
}

/// Writes a solver trace as `iteration,objective,residual` CSV.
pub fn write_trace_csv<W: Write>(trace: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in trace {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn quadratic_form(b: &PayoffMatrix, x: &[f64]) -> f64 {
    dot(x, &b.mul_vec(x))
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Clamps rounding dust below zero and renormalizes.
pub(crate) fn into_simplex(mut x: Vec<f64>) -> Result<SimplexVector> {
    x.iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v = 0.0
        }
    });
    let sum: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= sum);
    SimplexVector::new(x)
}
