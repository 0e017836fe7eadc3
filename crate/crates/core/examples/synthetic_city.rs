//! Localizes the synthetic city with every method, on the plain and the
//! tie-heavy variant, and prints the accuracy curves.

use dsloc::eval::{evaluate, DEFAULT_THRESHOLDS_M};
use dsloc::nn::{build_index, IndexConfig};
use dsloc::pipeline::{run_pipeline, Method, PipelineConfig};
use dsloc::synth::{generate_synthetic_city, CityConfig};

fn main() -> dsloc::Result<()> {
    for (label, city) in [("plain", CityConfig::default()), ("tie-heavy", CityConfig::tie_heavy())] {
        let city = generate_synthetic_city(&city)?;
        let ds = &city.dataset;
        let index = build_index(ds.references.iter().flat_map(|r| r.descriptors()).collect(), &IndexConfig::default())?;
        println!("{label}: {} references, {} queries", ds.references.len(), ds.queries.len());
        for method in [Method::FirstNn, Method::Vote, Method::Cds] {
            let config = PipelineConfig { method, ..Default::default() };
            let reports = run_pipeline(ds, &index, &config)?;
            let errors: Vec<Option<f64>> = reports.iter().map(|r| r.error_m).collect();
            let curve = evaluate(method.as_str(), &errors, &DEFAULT_THRESHOLDS_M)?;
            let ties = reports.iter().filter(|r| r.flags.vote_tie).count();
            let acc: Vec<String> = curve.accuracy.iter().map(|a| format!("{a:.2}")).collect();
            println!("  {:>8}  vote ties {ties:>2}  accuracy@{:?} = [{}]", method.as_str(), curve.thresholds_m, acc.join(", "));
        }
    }
    Ok(())
}
