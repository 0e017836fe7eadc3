//! Fetches neighbors for each query feature, prunes indistinct features and
//! selects a dynamic number of neighbors for the rest.

use dsloc::nn::{build_index, dynamic_nn_select, prune_query_feature, IndexConfig, SelectionConfig};
use dsloc::synth::{generate_synthetic_city, CityConfig};

fn main() -> dsloc::Result<()> {
    let city = generate_synthetic_city(&CityConfig::tie_heavy())?;
    let ds = &city.dataset;
    let index = build_index(ds.references.iter().flat_map(|r| r.descriptors()).collect(), &IndexConfig::kmeans_tree())?;
    let sel = SelectionConfig::default();
    let query = &ds.queries[0];
    println!("query {} (truth {})", query.image_id, city.truth[&query.image_id]);
    for (i, d) in query.local_descriptors.iter().enumerate() {
        let nn = index.knn(d, sel.max_pool, i)?;
        let decision = prune_query_feature(&nn, sel.beta);
        print!("  feature {i:2}: first {:7.1}, last {:7.1}, {decision:?}", nn.neighbors[0].distance, nn.neighbors[nn.len() - 1].distance);
        if decision.is_kept() {
            let picked = dynamic_nn_select(&nn, sel.theta);
            let images: Vec<String> = picked.iter().map(|n| n.descriptor.parent_image.to_string()).collect();
            print!(", selected {images:?}");
        }
        println!();
    }
    Ok(())
}
