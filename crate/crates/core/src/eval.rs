//! Accuracy-at-threshold curves over localization errors.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::SCHEMA_VERSION;
use crate::error::{Error, Result};

/// Errors above this many meters count as failures.
pub const FAILURE_CUTOFF_M: f64 = 300.0;
pub const DEFAULT_THRESHOLDS_M: [f64; 8] = [10.0, 30.0, 50.0, 100.0, 150.0, 200.0, 250.0, 300.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCurve {
    pub method: String,
    pub queries: usize,
    pub thresholds_m: Vec<f64>,
    /// Fraction of queries with error at or below each threshold.
    pub accuracy: Vec<f64>,
}

impl AccuracyCurve {
    pub fn at(&self, threshold_m: f64) -> Option<f64> {
        self.thresholds_m.iter().position(|&t| t == threshold_m).map(|i| self.accuracy[i])
    }

    /// True when `self` is at least `other` at every shared threshold.
    pub fn dominates(&self, other: &AccuracyCurve) -> bool {
        self.thresholds_m == other.thresholds_m && self.accuracy.iter().zip(&other.accuracy).all(|(a, b)| a >= b)
    }
}

/// `errors_m[i] = None` marks a query that produced no location.
pub fn evaluate(method: &str, errors_m: &[Option<f64>], thresholds_m: &[f64]) -> Result<AccuracyCurve> {
    if errors_m.is_empty() {
        return Err(Error::EmptyReports);
    }
    if thresholds_m.is_empty() || thresholds_m.windows(2).any(|w| !(w[0] < w[1])) || thresholds_m.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::Config("thresholds must be non-negative, finite and strictly ascending".into()));
    }
    let n = errors_m.len() as f64;
    let accuracy = thresholds_m
        .iter()
        .map(|&t| errors_m.iter().filter(|e| matches!(e, Some(v) if *v <= t)).count() as f64 / n)
        .collect();
    Ok(AccuracyCurve {
        method: method.into(),
        queries: errors_m.len(),
        thresholds_m: thresholds_m.to_vec(),
        accuracy,
    })
}

#[derive(Debug, Serialize)]
struct CurveRow<'a> {
    schema_version: u32,
    method: &'a str,
    threshold_m: f64,
    accuracy: f64,
    queries: usize,
}

/// CSV columns: `schema_version,method,threshold_m,accuracy,queries`.
pub fn write_curves_csv<W: Write>(curves: &[AccuracyCurve], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for c in curves {
        for (&t, &a) in c.thresholds_m.iter().zip(&c.accuracy) {
            w.serialize(CurveRow {
                schema_version: SCHEMA_VERSION,
                method: &c.method,
                threshold_m: t,
                accuracy: a,
                queries: c.queries,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_exact_is_flat_one() {
        let c = evaluate("cds", &[Some(0.0); 4], &DEFAULT_THRESHOLDS_M).unwrap();
        assert!(c.accuracy.iter().all(|&a| a == 1.0));
    }

    #[test]
    fn counting_example() {
        let c = evaluate("vote", &[Some(10.0), Some(100.0), Some(400.0)], &[30.0, 300.0]).unwrap();
        assert!((c.accuracy[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((c.accuracy[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.at(300.0), Some(2.0 / 3.0));
    }

    #[test]
    fn missing_locations_never_count() {
        let c = evaluate("cds", &[None, Some(1.0)], &[1e9]).unwrap();
        assert_eq!(c.accuracy, vec![0.5]);
    }

    #[test]
    fn rejects_empty_and_unsorted() {
        assert!(matches!(evaluate("x", &[], &[1.0]), Err(Error::EmptyReports)));
        assert!(evaluate("x", &[Some(1.0)], &[30.0, 10.0]).is_err());
    }

    #[test]
    fn csv_layout() {
        let c = evaluate("cds", &[Some(5.0), Some(50.0)], &[10.0, 100.0]).unwrap();
        let mut buf = Vec::new();
        write_curves_csv(&[c], &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(
            s,
            "schema_version,method,threshold_m,accuracy,queries\n1,cds,10.0,0.5,2\n1,cds,100.0,1.0,2\n"
        );
    }
}
