use proptest::prelude::*;

use dsloc::eval::evaluate;
use dsloc::graph::{AffinityMatrix, SimplexVector};
use dsloc::image::ImageId;
use dsloc::nn::{build_index, dynamic_nn_select, prune_query_feature, IndexConfig, LocalDescriptor, Neighbor, NeighborList};
use dsloc::stqp::{find_equilibrium, homogenize_scores, payoff_value, residual_epsilon, PayoffMatrix, SolverConfig};

fn list(distances: &[f64]) -> NeighborList {
    NeighborList {
        query_feature: 0,
        neighbors: distances
            .iter()
            .enumerate()
            .map(|(i, &d)| Neighbor {
                descriptor: LocalDescriptor::new(vec![0.0], ImageId::new(format!("r{i}")), i),
                distance: d,
            })
            .collect(),
    }
}

fn sorted_distances() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..100.0, 2..40).prop_map(|mut v| {
        v.sort_by(f64::total_cmp);
        v
    })
}

fn affinity(max_n: usize) -> impl Strategy<Value = AffinityMatrix> {
    (2..=max_n).prop_flat_map(|n| {
        prop::collection::vec(0.0f64..1.0, n * (n - 1) / 2).prop_map(move |upper| {
            let mut it = upper.into_iter();
            AffinityMatrix::from_upper(n, |_, _| it.next().unwrap()).unwrap()
        })
    })
}

fn simplex(n: usize) -> impl Strategy<Value = SimplexVector> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        SimplexVector::new(v.into_iter().map(|x| x / s).collect()).unwrap()
    })
}

proptest! {
    #[test]
    fn selection_size_bounds(d in sorted_distances(), theta in 0.01f64..0.99) {
        let n = dynamic_nn_select(&list(&d), theta).len();
        prop_assert!(n >= 1 && n < d.len());
    }

    #[test]
    fn prune_is_scale_invariant(d in sorted_distances(), beta in 0.01f64..0.99, scale in 0.01f64..100.0) {
        let scaled: Vec<f64> = d.iter().map(|x| x * scale).collect();
        let a = prune_query_feature(&list(&d), beta);
        let b = prune_query_feature(&list(&scaled), beta);
        // Ratios can round across beta only within a few ulps.
        let r = if d[d.len() - 1] == 0.0 { 1.0 } else { d[0] / d[d.len() - 1] };
        prop_assume!((r - beta).abs() > 1e-12);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn homogenization_identity(a in affinity(12), seed in any::<u64>()) {
        let n = a.len();
        let b: Vec<f64> = (0..n).map(|i| ((seed.rotate_left(i as u32) % 1000) as f64 + 1.0) / 1000.0).collect();
        let x = SimplexVector::barycenter(n);
        let lhs = payoff_value(&homogenize_scores(&a, &b).unwrap(), &x).unwrap();
        let rhs = payoff_value(&PayoffMatrix::from(&a), &x).unwrap() + 2.0 * b.iter().map(|v| v / n as f64).sum::<f64>();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * n as f64);
    }

    #[test]
    fn solver_stays_on_simplex_and_converges((a, x0) in affinity(10).prop_flat_map(|a| { let n = a.len(); (Just(a), simplex(n)) })) {
        let b = PayoffMatrix::from(&a);
        let config = SolverConfig::default();
        let eq = find_equilibrium(&b, &x0, &config).unwrap();
        let sum: f64 = eq.x.values().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(eq.x.values().iter().all(|&v| v >= 0.0));
        prop_assert!(residual_epsilon(&b, &eq.x).unwrap() <= config.tolerance);
        prop_assert!(eq.objective >= payoff_value(&b, &x0).unwrap() - 1e-12);
    }

    #[test]
    fn exact_knn_is_a_prefix_of_the_full_sort(
        points in prop::collection::vec(prop::collection::vec(-10.0f32..10.0, 3), 2..60),
        q in prop::collection::vec(-10.0f32..10.0, 3),
        m in 1usize..20,
    ) {
        let descs: Vec<LocalDescriptor> = points.iter().enumerate()
            .map(|(i, v)| LocalDescriptor::new(v.clone(), ImageId::new(format!("img{:02}", i % 7)), i))
            .collect();
        let index = build_index(descs.clone(), &IndexConfig::default()).unwrap();
        let got = index.knn(&q, m, 0).unwrap();
        let mut all: Vec<(f64, String, usize)> = descs.iter()
            .map(|d| (d.distance(&q), d.parent_image.to_string(), d.feature_id))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        prop_assert_eq!(got.len(), m.min(descs.len()));
        for (n, want) in got.neighbors.iter().zip(&all) {
            prop_assert_eq!(n.descriptor.feature_id, want.2);
            prop_assert_eq!(n.distance, want.0);
        }
    }

    #[test]
    fn curves_are_monotone(errors in prop::collection::vec(prop::option::of(0.0f64..1000.0), 1..50)) {
        let c = evaluate("m", &errors, &[1.0, 10.0, 30.0, 100.0, 300.0, 1000.0]).unwrap();
        prop_assert!(c.accuracy.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(c.accuracy.iter().all(|a| (0.0..=1.0).contains(a)));
    }
}
