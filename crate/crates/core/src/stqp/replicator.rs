use crate::error::{Error, Result};
use crate::graph::SimplexVector;

use super::{dot, into_simplex, residual_from, EquilibriumResult, PayoffMatrix, SolverConfig, TraceRow};

/// Discrete replicator dynamics `x_i <- x_i (Bx)_i / x'Bx`.
///
/// Negative payoffs are shifted away by `-min(B)`; on the simplex this adds a
/// constant to the objective and leaves the maximizers unchanged. The reported
/// objective and residual refer to the unshifted matrix.
pub fn replicator_equilibrium(
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
    let shift = (-b.min_entry()).max(0.0);
    let cap = config.iteration_cap(n);
    let mut x = x0.values().to_vec();
    let mut trace = config.record_trace.then(Vec::new);
    let mut iterations = 0;

    let (f, eps) = loop {
        let g = b.mul_vec(&x);
        let f = dot(&x, &g);
        let eps = residual_from(&x, &g, f);
        if let Some(t) = trace.as_mut() {
            t.push(TraceRow {
                iteration: iterations,
                objective: f,
                residual: eps,
            });
        }
        let shifted = f + shift;
        if eps <= config.tolerance || shifted <= 0.0 {
            break (f, eps);
        }
        if iterations >= cap {
            return Err(Error::NoConvergence {
                iterations,
                residual: eps,
                tolerance: config.tolerance,
                best: x,
            });
        }
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi *= (gi + shift) / shifted;
        }
        iterations += 1;
    };

    Ok(EquilibriumResult {
        x: into_simplex(x)?,
        objective: f,
        iterations,
        residual: eps,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{support, DEFAULT_SUPPORT_CUTOFF};
    use crate::stqp::find_equilibrium;

    #[test]
    fn block_pair() {
        let mut e = vec![0.0; 16];
        for i in 0..2 {
            for j in 0..2 {
                e[i * 4 + j] = 1.0;
            }
        }
        let b = PayoffMatrix::new(4, e).unwrap();
        let r = replicator_equilibrium(&b, &SimplexVector::barycenter(4), &SolverConfig::default())
            .unwrap();
        assert!((r.x.get(0) - 0.5).abs() < 1e-6);
        assert!((r.x.get(1) - 0.5).abs() < 1e-6);
        assert!(r.x.get(2) < 1e-3 && r.x.get(3) < 1e-3);
    }

    #[test]
    fn negative_payoffs_are_shifted() {
        // Same game as a clique on {0,1} after subtracting 1 everywhere.
        let b = PayoffMatrix::new(3, vec![-1.0, 0.0, -1.0, 0.0, -1.0, -1.0, -1.0, -1.0, -1.0])
            .unwrap();
        let r = replicator_equilibrium(&b, &SimplexVector::barycenter(3), &SolverConfig::default())
            .unwrap();
        let i = find_equilibrium(&b, &SimplexVector::barycenter(3), &SolverConfig::default())
            .unwrap();
        assert!((r.objective - i.objective).abs() < 1e-6);
        assert_eq!(
            support(&i.x, DEFAULT_SUPPORT_CUTOFF).as_slice(),
            &[0, 1]
        );
    }

    #[test]
    fn zero_matrix_is_already_stationary() {
        let b = PayoffMatrix::new(2, vec![0.0; 4]).unwrap();
        let r = replicator_equilibrium(&b, &SimplexVector::barycenter(2), &SolverConfig::default())
            .unwrap();
        assert_eq!(r.iterations, 0);
    }
}
