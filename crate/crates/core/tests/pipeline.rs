use dsloc::dataset::{load_dataset, save_dataset, Format};
use dsloc::eval::{evaluate, DEFAULT_THRESHOLDS_M};
use dsloc::nn::{build_index, IndexConfig};
use dsloc::pipeline::{read_reports, run_pipeline, write_reports, Method, PipelineConfig, Status};
use dsloc::synth::{generate_synthetic_city, CityConfig};

fn small(tie_heavy: bool) -> CityConfig {
    let base = if tie_heavy { CityConfig::tie_heavy() } else { CityConfig::default() };
    CityConfig { queries: 15, ..base }
}

#[test]
fn noiseless_queries_land_on_their_reference() {
    let city = generate_synthetic_city(&CityConfig {
        noise: 0.0,
        distractor_rate: 0.0,
        queries: 10,
        ..CityConfig::default()
    })
    .unwrap();
    let ds = &city.dataset;
    let index = build_index(ds.references.iter().flat_map(|r| r.descriptors()).collect(), &IndexConfig::default()).unwrap();
    for method in [Method::FirstNn, Method::Vote, Method::Cds] {
        let reports = run_pipeline(ds, &index, &PipelineConfig { method, ..Default::default() }).unwrap();
        for r in &reports {
            assert_eq!(r.predicted_image.as_ref(), Some(&city.truth[&r.query_id]), "{method:?} {}", r.query_id);
        }
    }
}

#[test]
fn method_plumbing_is_visible_in_stages() {
    let city = generate_synthetic_city(&small(false)).unwrap();
    let ds = &city.dataset;
    let index = build_index(ds.references.iter().flat_map(|r| r.descriptors()).collect(), &IndexConfig::default()).unwrap();
    let vote = run_pipeline(ds, &index, &PipelineConfig { method: Method::Vote, ..Default::default() }).unwrap();
    let cds = run_pipeline(ds, &index, &PipelineConfig::default()).unwrap();
    let first = run_pipeline(ds, &index, &PipelineConfig { method: Method::FirstNn, ..Default::default() }).unwrap();
    for r in &vote {
        assert!(r.cds.is_none() && !r.stages.iter().any(|s| s == "cds"));
    }
    for r in cds.iter().filter(|r| r.status == Status::Ok) {
        assert!(r.cds.is_some() && r.stages.last().map(String::as_str) == Some("cds"));
    }
    for r in &first {
        assert_eq!(r.stages, ["knn", "prune", "first_nn_vote"]);
    }
}

#[test]
fn cds_breaks_ties_that_voting_cannot() {
    let city = generate_synthetic_city(&small(true)).unwrap();
    let ds = &city.dataset;
    let index = build_index(ds.references.iter().flat_map(|r| r.descriptors()).collect(), &IndexConfig::default()).unwrap();
    let curve = |method| {
        let reports = run_pipeline(ds, &index, &PipelineConfig { method, ..Default::default() }).unwrap();
        let errors: Vec<_> = reports.iter().map(|r| r.error_m).collect();
        (evaluate(method.as_str(), &errors, &DEFAULT_THRESHOLDS_M).unwrap(), reports)
    };
    let (vote, vote_reports) = curve(Method::Vote);
    let (cds, _) = curve(Method::Cds);
    assert!(vote_reports.iter().any(|r| r.flags.vote_tie));
    assert!(cds.dominates(&vote));
    assert!(cds.at(30.0).unwrap() > vote.at(30.0).unwrap());
}

#[test]
fn tree_backend_matches_exact_on_the_city() {
    let city = generate_synthetic_city(&small(false)).unwrap();
    let ds = &city.dataset;
    let descs: Vec<_> = ds.references.iter().flat_map(|r| r.descriptors()).collect();
    let exact = build_index(descs.clone(), &IndexConfig::default()).unwrap();
    let tree = build_index(descs, &IndexConfig::kmeans_tree()).unwrap();
    let a = run_pipeline(ds, &exact, &PipelineConfig::default()).unwrap();
    let b = run_pipeline(ds, &tree, &PipelineConfig::default()).unwrap();
    let same = a.iter().zip(&b).filter(|(x, y)| x.predicted_image == y.predicted_image).count();
    assert!(same as f64 >= 0.9 * a.len() as f64, "{same}/{}", a.len());
}

#[test]
fn reports_survive_disk_and_datasets_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let city = generate_synthetic_city(&small(false)).unwrap();
    for format in [Format::Jsonl, Format::Columnar] {
        save_dataset(dir.path(), &city.dataset, format).unwrap();
        assert_eq!(load_dataset(dir.path(), format).unwrap(), city.dataset);
    }
    let ds = &city.dataset;
    let index = build_index(ds.references.iter().flat_map(|r| r.descriptors()).collect(), &IndexConfig::default()).unwrap();
    let reports = run_pipeline(ds, &index, &PipelineConfig::default()).unwrap();
    let mut buf = Vec::new();
    write_reports(&reports, &mut buf).unwrap();
    assert_eq!(read_reports(buf.as_slice()).unwrap(), reports);
}
