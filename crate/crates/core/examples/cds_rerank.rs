//! Localizes tie-heavy queries with plain voting and with the constrained
//! dominant set, and shows how the global features break the ties.

use dsloc::nn::{build_index, IndexConfig};
use dsloc::pipeline::{score_report, Localizer, Method, PipelineConfig};
use dsloc::synth::{generate_synthetic_city, CityConfig};

fn main() -> dsloc::Result<()> {
    let city = generate_synthetic_city(&CityConfig::tie_heavy())?;
    let ds = &city.dataset;
    let index = build_index(ds.references.iter().flat_map(|r| r.descriptors()).collect(), &IndexConfig::default())?;
    let vote = Localizer::new(&ds.references, &index, PipelineConfig { method: Method::Vote, ..Default::default() })?;
    let cds = Localizer::new(&ds.references, &index, PipelineConfig::default())?;

    for q in ds.queries.iter().take(5) {
        let mut v = vote.localize(q.matcher_view())?;
        let mut c = cds.localize(q.matcher_view())?;
        score_report(&mut v, q.gps);
        score_report(&mut c, q.gps);
        println!("{} truth {}", q.image_id, city.truth[&q.image_id]);
        println!("  vote: {:?} tie={} error {:.0} m", v.predicted_image.map(|i| i.to_string()), v.flags.vote_tie, v.error_m.unwrap_or(f64::NAN));
        println!("  cds:  {:?} error {:.0} m", c.predicted_image.map(|i| i.to_string()), c.error_m.unwrap_or(f64::NAN));
        if let Some(d) = &c.cds {
            println!("        alpha {:.3}, feature weights {:?}", d.alpha, d.weights);
            let mut m: Vec<_> = d.membership.iter().collect();
            m.sort_by(|a, b| b.1.total_cmp(a.1));
            println!("        top membership {:?}", &m[..m.len().min(3)]);
        }
    }
    Ok(())
}
