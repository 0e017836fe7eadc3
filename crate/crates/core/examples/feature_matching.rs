//! Builds the matching graph for one query by hand, extracts dominant sets and
//! votes on their parent images.

use dsloc::geo::PlanarFrame;
use dsloc::matching::{build_matching_graph, candidates_from, match_features, vote_localize, PsiTable, DEFAULT_GAMMA};
use dsloc::nn::{build_index, dynamic_nn_select, prune_query_feature, IndexConfig, SelectionConfig};
use dsloc::stqp::SolverConfig;
use dsloc::synth::{generate_synthetic_city, CityConfig};

fn main() -> dsloc::Result<()> {
    let city = generate_synthetic_city(&CityConfig::default())?;
    let ds = &city.dataset;
    let index = build_index(ds.references.iter().flat_map(|r| r.descriptors()).collect(), &IndexConfig::default())?;

    let frame = PlanarFrame::centroid(ds.references.iter().map(|r| &r.gps))?;
    let mut psi = PsiTable::new("gps");
    for r in &ds.references {
        psi.insert(r.image_id.clone(), frame.project(r.gps).to_vec());
    }

    let sel = SelectionConfig::default();
    let query = &ds.queries[3];
    let mut selected = Vec::new();
    for (i, d) in query.local_descriptors.iter().enumerate() {
        let nn = index.knn(d, sel.max_pool, i)?;
        if prune_query_feature(&nn, sel.beta).is_kept() {
            selected.push(candidates_from(&nn, dynamic_nn_select(&nn, sel.theta), DEFAULT_GAMMA));
        }
    }
    let graph = build_matching_graph(&selected, &psi, DEFAULT_GAMMA)?;
    let result = match_features(&graph, 3, 1.0, &SolverConfig::default())?;
    println!("query {} (truth {}), {} graph nodes", query.image_id, city.truth[&query.image_id], graph.len());
    for (k, c) in result.clusters.iter().enumerate() {
        println!("  cluster {}: {} nodes, dominant image {:?}", c.rank, c.support.len(), result.dominant_image(&graph, k).map(|i| i.to_string()));
    }
    if let Some(v) = vote_localize(&result) {
        println!("vote winner {} with {} votes (tie: {})", v.image, v.votes, v.tie);
    }
    Ok(())
}
