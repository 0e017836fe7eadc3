//! Recursive weights and dominance on a five-node graph: a tight four-node
//! group plus one weakly attached outsider.

use dsloc::graph::{characteristic_vector, is_dominant_set, total_weight, weight_w, AffinityMatrix, NodeSet};

fn main() -> dsloc::Result<()> {
    let mut edges = vec![(0, 1, 20.0), (0, 2, 21.0), (1, 2, 22.0), (0, 3, 30.0), (1, 3, 35.0), (2, 3, 41.0)];
    edges.extend((0..4).map(|i| (i, 4, 1.0)));
    let b = AffinityMatrix::from_edges(5, &edges)?;

    let group = NodeSet::range(4);
    let all = NodeSet::range(5);
    println!("W_{{0,1,2,3}}(3)   = {:9.2}", weight_w(&group, 3, &b)?);
    println!("W_{{0,..,4}}(4)    = {:9.2}", weight_w(&all, 4, &b)?);
    println!("W({{0,1,2,3}})     = {:9.2}", total_weight(&group, &b)?);
    println!("{{0,1,2,3}} dominant: {}", is_dominant_set(&group, &b)?);
    println!("{{0,..,4}} dominant:  {}", is_dominant_set(&all, &b)?);

    let x = characteristic_vector(&group, &b)?;
    let shown: Vec<String> = x.values().iter().map(|v| format!("{v:.4}")).collect();
    println!("characteristic vector: [{}]", shown.join(", "));
    Ok(())
}
