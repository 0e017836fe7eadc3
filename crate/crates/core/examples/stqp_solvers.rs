//! Solves a standard quadratic program with both dynamics and peels off
//! several dominant sets from a graph with planted groups.

use dsloc::graph::{support, AffinityMatrix, SimplexVector};
use dsloc::stqp::{extract_dominant_sets, find_equilibrium, replicator_equilibrium, PayoffMatrix, SolverConfig};

fn main() -> dsloc::Result<()> {
    // Three groups of sizes 4, 3 and 2 with strong internal ties.
    let group = |i: usize| match i {
        0..=3 => 0,
        4..=6 => 1,
        _ => 2,
    };
    let a = AffinityMatrix::from_upper(9, |i, j| if group(i) == group(j) { 0.9 - 0.05 * (i + j) as f64 / 10.0 } else { 0.05 })?;
    let b = PayoffMatrix::from(&a);
    let x0 = SimplexVector::barycenter(9);
    let config = SolverConfig::default().with_tolerance(1e-16);

    let fast = find_equilibrium(&b, &x0, &config)?;
    let slow = replicator_equilibrium(&b, &x0, &config.clone().with_max_iterations(1_000_000))?;
    println!(
        "infection-immunization: support {:?}, objective {:.6}, {} iterations",
        support(&fast.x, config.support_cutoff).as_slice(),
        fast.objective,
        fast.iterations
    );
    println!(
        "replicator:             support {:?}, objective {:.6}, {} iterations",
        support(&slow.x, config.support_cutoff).as_slice(),
        slow.objective,
        slow.iterations
    );

    for set in extract_dominant_sets(&b, 3, &config)? {
        println!("dominant set {}: {:?} objective {:.4}", set.rank, set.support.as_slice(), set.objective);
    }
    Ok(())
}
