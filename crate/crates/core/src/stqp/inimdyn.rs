//! Infection-immunization dynamics.
//!
//! Each step picks an infective strategy `y` for the current population `x`
//! (a pure strategy or a co-strategy), then moves `x` toward `y` by the
//! largest step that keeps the payoff increasing. Only one row of `B` is
//! touched per step, so `Bx` is maintained incrementally in `O(n)`.

use crate::error::{Error, Result};
use crate::graph::SimplexVector;

use super::{dot, into_simplex, residual_from, EquilibriumResult, PayoffMatrix, SolverConfig, TraceRow};

/// Exact `Bx` is recomputed this often to keep incremental drift bounded.
const REFRESH_INTERVAL: usize = 128;

/// Direction chosen by the selective function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Infection {
    /// Vertex `e_i` of a strategy earning more than the population average.
    Pure(usize),
    /// Co-strategy of a support node earning less than the average; moving
    /// fully onto it removes that node.
    Co(usize),
}

impl Infection {
    /// Materializes the infective strategy `y` for population `x`.
    pub fn strategy(&self, x: &[f64]) -> Vec<f64> {
        match *self {
            Infection::Pure(i) => {
                let mut y = vec![0.0; x.len()];
                y[i] = 1.0;
                y
            }
            Infection::Co(j) => {
                let c = x[j] / (x[j] - 1.0);
                let mut y: Vec<f64> = x.iter().map(|&v| v - c * v).collect();
                y[j] = 0.0;
                y
            }
        }
    }
}

/// Returns an infective strategy `y` with `(y - x)'Bx > 0`, or `None` when
/// `x` cannot be invaded.
pub fn select_infective(b: &PayoffMatrix, x: &SimplexVector) -> Result<Option<SimplexVector>> {
    if b.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: b.len(),
            actual: x.len(),
        });
    }
    let g = b.mul_vec(x.values());
    let f = dot(x.values(), &g);
    match select(x.values(), &g, f) {
        Some(inf) => Ok(Some(into_simplex(inf.strategy(x.values()))?)),
        None => Ok(None),
    }
}

/// Pure/co-strategy selection on the payoff gaps `r_i = (Bx)_i - x'Bx`.
pub(crate) fn select(x: &[f64], g: &[f64], f: f64) -> Option<Infection> {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    let mut worst = (usize::MAX, f64::INFINITY);
    for (i, (&xi, &gi)) in x.iter().zip(g).enumerate() {
        let r = gi - f;
        if r > best.1 {
            best = (i, r);
        }
        if xi > 0.0 && r < worst.1 {
            worst = (i, r);
        }
    }
    let (up, gain) = best;
    let (down, loss) = worst;
    // Ties go to the co-strategy so that symmetric faces of equilibria are
    // left at their barycenter instead of a vertex.
    if gain > 0.0 && gain > -loss {
        Some(Infection::Pure(up))
    } else if loss < 0.0 && x[down] < 1.0 {
        Some(Infection::Co(down))
    } else {
        None
    }
}

/// Runs the dynamics from `x0` until the residual drops to the tolerance.
pub fn find_equilibrium(
    b: &PayoffMatrix,
    x0: &SimplexVector,
    config: &SolverConfig,
) -> Result<EquilibriumResult> {
    config.validate()?;
    let n = b.len();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: x0.len(),
        });
    }
    let cap = config.iteration_cap(n);
    let mut x = x0.values().to_vec();
    let mut g = b.mul_vec(&x);
    let mut f = dot(&x, &g);
    let mut eps = residual_from(&x, &g, f);
    let mut trace = config.record_trace.then(Vec::new);
    let mut iterations = 0;

    loop {
        if let Some(t) = trace.as_mut() {
            t.push(TraceRow {
                iteration: iterations,
                objective: f,
                residual: eps,
            });
        }
        if eps <= config.tolerance {
            // Confirm against an exact product before accepting.
            g = b.mul_vec(&x);
            f = dot(&x, &g);
            eps = residual_from(&x, &g, f);
            if eps <= config.tolerance {
                break;
            }
        }
        if iterations >= cap {
            return Err(Error::NoConvergence {
                iterations,
                residual: eps,
                tolerance: config.tolerance,
                best: x,
            });
        }
        let Some(infection) = select(&x, &g, f) else {
            break;
        };
        step(b, &mut x, &mut g, f, infection);
        iterations += 1;
        if iterations % REFRESH_INTERVAL == 0 {
            g = b.mul_vec(&x);
        }
        f = dot(&x, &g);
        eps = residual_from(&x, &g, f);
    }

    let x = into_simplex(x)?;
    let objective = super::quadratic_form(b, x.values());
    Ok(EquilibriumResult {
        x,
        objective,
        iterations,
        residual: eps,
        trace,
    })
}

/// Moves `x` toward the infective strategy and updates `g = Bx` in place.
fn step(b: &PayoffMatrix, x: &mut [f64], g: &mut [f64], f: f64, infection: Infection) {
    // Direction d = y - x = c (e_k - x): c = 1 for a pure strategy and
    // c = x_k / (x_k - 1) < 0 for a co-strategy.
    let (k, c) = match infection {
        Infection::Pure(i) => (i, 1.0),
        Infection::Co(j) => (j, x[j] / (x[j] - 1.0)),
    };
    let gain = c * (g[k] - f); // d'Bx
    let curvature = c * c * (b.get(k, k) - 2.0 * g[k] + f); // d'Bd
    let mut delta = 1.0;
    if curvature < 0.0 {
        delta = (-gain / curvature).min(1.0);
    }
    let t = delta * c;
    for v in x.iter_mut() {
        *v -= t * *v;
    }
    x[k] += t;
    if matches!(infection, Infection::Co(_)) && delta == 1.0 {
        x[k] = 0.0;
    }
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let col = b.row(k);
    for (gi, &bk) in g.iter_mut().zip(col) {
        *gi += t * (bk - *gi);
    }
}

/// Step length chosen for a given infection; exposed for invariant tests.
#[doc(hidden)]
pub fn step_size(b: &PayoffMatrix, x: &SimplexVector, infection: Infection) -> f64 {
    let x = x.values();
    let g = b.mul_vec(x);
    let f = dot(x, &g);
    let (k, c) = match infection {
        Infection::Pure(i) => (i, 1.0),
        Infection::Co(j) => (j, x[j] / (x[j] - 1.0)),
    };
    let gain = c * (g[k] - f);
    let curvature = c * c * (b.get(k, k) - 2.0 * g[k] + f);
    if curvature < 0.0 {
        (-gain / curvature).min(1.0)
    } else {
        1.0
    }
}
