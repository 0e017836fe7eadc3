//! Accuracy-at-threshold curves from localization errors, written as CSV.

use dsloc::eval::{evaluate, write_curves_csv, DEFAULT_THRESHOLDS_M};

fn main() -> dsloc::Result<()> {
    let a = evaluate("tight", &[Some(4.0), Some(12.0), Some(28.0), Some(45.0), None], &DEFAULT_THRESHOLDS_M)?;
    let b = evaluate("loose", &[Some(40.0), Some(120.0), Some(260.0), Some(900.0), Some(8.0)], &DEFAULT_THRESHOLDS_M)?;
    eprintln!("tight dominates loose: {}", a.dominates(&b));
    write_curves_csv(&[a, b], std::io::stdout().lock())
}
