//! End-to-end localization of query images and per-query reports.
//!
//! Stages per query: k nearest neighbors for every local descriptor, pruning
//! of indistinct features, dynamic neighbor selection, the matching graph and
//! its dominant sets, then either vote counting or the constrained dominant
//! set over fused global features.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cds::{
    alpha_bound, best_match, build_cds_graph, constrained_dominant_set, feature_weights, fused_global_similarity, AlphaConfig, Bandwidths,
    CdsGraph, CdsMatch, ClusterBlock, FeatureWeighting, GlobalFeatures,
};
use crate::dataset::{Dataset, QueryView, ReferenceRecord, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::eval::FAILURE_CUTOFF_M;
use crate::geo::{haversine_m, GpsCoord, PlanarFrame};
use crate::graph::SimplexVector;
use crate::image::ImageId;
use crate::matching::{build_matching_graph, candidates_from, first_nn_vote, match_features, vote_localize, PsiTable, VoteOutcome, DEFAULT_GAMMA};
use crate::nn::{dynamic_nn_select, prune_query_feature, DescriptorIndex, NeighborList, SelectionConfig};
use crate::stqp::{homogenize_scaled, SolverConfig, DEFAULT_CLUSTER_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Most-voted parent image over the extracted clusters.
    Vote,
    /// Constrained dominant set anchored on the query.
    Cds,
    /// Each surviving query feature votes for its first neighbor's image.
    FirstNn,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Vote => "vote",
            Method::Cds => "cds",
            Method::FirstNn => "first_nn",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vote" => Ok(Method::Vote),
            "cds" => Ok(Method::Cds),
            "first_nn" | "first-nn" => Ok(Method::FirstNn),
            other => Err(Error::Config(format!("unknown method `{other}` (vote | cds | first_nn)"))),
        }
    }
}

/// Global vector used for the matching-graph edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "snake_case")]
pub enum PsiSource {
    /// Reference GPS in planar meters about the reference centroid.
    Gps,
    /// A named global descriptor of the reference images.
    Feature(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub method: Method,
    pub selection: SelectionConfig,
    /// Bandwidth of the node score and of the matching-graph edges.
    pub gamma: f64,
    pub psi: PsiSource,
    pub clusters: usize,
    pub node_score_scale: f64,
    pub cds_gammas: Bandwidths,
    pub alpha: AlphaConfig,
    pub solver: SolverConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            method: Method::Cds,
            selection: SelectionConfig::default(),
            gamma: DEFAULT_GAMMA,
            psi: PsiSource::Gps,
            clusters: DEFAULT_CLUSTER_COUNT,
            node_score_scale: 1.0,
            cds_gammas: Bandwidths::default(),
            alpha: AlphaConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.selection.validate()?;
        self.solver.validate()?;
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma {} must be positive", self.gamma)));
        }
        if self.clusters == 0 {
            return Err(Error::Config("clusters must be at least 1".into()));
        }
        if !(self.alpha.margin.is_finite() && self.alpha.margin > 0.0) {
            return Err(Error::Config(format!("alpha margin {} must be positive", self.alpha.margin)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Flags {
    pub vote_tie: bool,
    pub cds_tie: bool,
    pub low_confidence: bool,
    /// The constrained solution kept only the query; the vote winner was used.
    pub no_match_fallback: bool,
    pub degenerate_weights: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdsDetails {
    pub alpha: f64,
    pub weights: BTreeMap<String, f64>,
    /// Summed membership per reference image, plus `query` for the anchor.
    pub membership: BTreeMap<String, f64>,
    pub nodes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Aborted,
}

/// One JSON line per query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub schema_version: u32,
    pub query_id: ImageId,
    pub method: Method,
    pub status: Status,
    pub predicted_image: Option<ImageId>,
    pub predicted_gps: Option<GpsCoord>,
    pub error_m: Option<f64>,
    pub failure: bool,
    pub flags: Flags,
    /// Stages that ran, in order.
    pub stages: Vec<String>,
    pub query_features: usize,
    pub surviving_features: usize,
    pub graph_nodes: usize,
    pub cluster_sizes: Vec<usize>,
    pub votes: BTreeMap<ImageId, usize>,
    pub cds: Option<CdsDetails>,
    pub diagnostic: Option<String>,
}

/// Localization against a fixed reference set. Shared read-only across threads.
pub struct Localizer<'a> {
    references: &'a [ReferenceRecord],
    by_id: BTreeMap<&'a ImageId, usize>,
    index: &'a DescriptorIndex,
    psi: PsiTable,
    feature_names: Vec<String>,
    config: PipelineConfig,
}

impl<'a> Localizer<'a> {
    pub fn new(references: &'a [ReferenceRecord], index: &'a DescriptorIndex, config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        if references.is_empty() {
            return Err(Error::EmptyReferences);
        }
        let by_id = references.iter().enumerate().map(|(i, r)| (&r.image_id, i)).collect();
        let psi = match &config.psi {
            PsiSource::Gps => {
                let frame = PlanarFrame::centroid(references.iter().map(|r| &r.gps))?;
                let mut t = PsiTable::new("gps");
                for r in references {
                    t.insert(r.image_id.clone(), frame.project(r.gps).to_vec());
                }
                t
            }
            PsiSource::Feature(name) => {
                let mut t = PsiTable::new(name.clone());
                for r in references {
                    let v = r.global_features.get(name).ok_or_else(|| Error::MissingFeature {
                        feature: name.clone(),
                        image: r.image_id.to_string(),
                    })?;
                    t.insert(r.image_id.clone(), v.clone());
                }
                t
            }
        };
        let feature_names = references[0].global_features.keys().cloned().collect();
        Ok(Self {
            references,
            by_id,
            index,
            psi,
            feature_names,
            config,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    fn reference(&self, id: &ImageId) -> &ReferenceRecord {
        &self.references[self.by_id[id]]
    }

    /// Localizes one query. Too few distinctive features yields an aborted
    /// report; solver failures are returned as errors.
    pub fn localize(&self, query: QueryView<'_>) -> Result<LocalizationReport> {
        let cfg = &self.config;
        let mut report = LocalizationReport {
            schema_version: SCHEMA_VERSION,
            query_id: query.image_id.clone(),
            method: cfg.method,
            status: Status::Ok,
            predicted_image: None,
            predicted_gps: None,
            error_m: None,
            failure: true,
            flags: Flags::default(),
            stages: vec!["knn".into(), "prune".into()],
            query_features: query.local_descriptors.len(),
            surviving_features: 0,
            graph_nodes: 0,
            cluster_sizes: Vec::new(),
            votes: BTreeMap::new(),
            cds: None,
            diagnostic: None,
        };

        let mut lists: Vec<NeighborList> = Vec::new();
        for (i, d) in query.local_descriptors.iter().enumerate() {
            let nn = self.index.knn(d, cfg.selection.max_pool, i)?;
            if prune_query_feature(&nn, cfg.selection.beta).is_kept() {
                lists.push(nn);
            }
        }
        report.surviving_features = lists.len();

        if cfg.method == Method::FirstNn {
            report.stages.push("first_nn_vote".into());
            return Ok(self.finish_vote(report, first_nn_vote(&lists)));
        }

        report.stages.push("select".into());
        let selected: Vec<_> = lists
            .iter()
            .map(|l| candidates_from(l, dynamic_nn_select(l, cfg.selection.theta), cfg.gamma))
            .collect();
        report.stages.push("matching".into());
        let graph = match build_matching_graph(&selected, &self.psi, cfg.gamma) {
            Ok(g) => g,
            Err(e @ Error::TooFewQueryFeatures { .. }) => {
                report.status = Status::Aborted;
                report.diagnostic = Some(e.to_string());
                return Ok(report);
            }
            Err(e) => return Err(e),
        };
        report.graph_nodes = graph.len();
        let matched = match_features(&graph, cfg.clusters, cfg.node_score_scale, &cfg.solver)?;
        report.cluster_sizes = matched.clusters.iter().map(|c| c.support.len()).collect();
        report.votes = matched.votes.clone();
        let vote = vote_localize(&matched);

        if cfg.method == Method::Vote || matched.clusters.is_empty() {
            report.stages.push("vote".into());
            return Ok(self.finish_vote(report, vote));
        }

        report.stages.push("cds".into());
        let b = homogenize_scaled(&graph.a, &graph.b, cfg.node_score_scale)?;
        let blocks = ClusterBlock::from_match(&matched, &graph, &b);
        let mut images: Vec<&ImageId> = blocks.iter().flat_map(|c| &c.images).collect();
        images.sort();
        images.dedup();
        let refs: Vec<&GlobalFeatures> = images.iter().map(|id| &self.reference(id).global_features).collect();
        let weights = feature_weights(query.global_features, &refs, &self.feature_names)?;
        let cds_graph = build_cds_graph(&blocks, |img| {
            fused_global_similarity(query.global_features, &self.reference(img).global_features, &weights, &cfg.cds_gammas)
        })?;
        let alpha = alpha_bound(&cds_graph.bhat, CdsGraph::QUERY, &cfg.alpha);
        let solution = constrained_dominant_set(&cds_graph, CdsGraph::QUERY, alpha, &SimplexVector::barycenter(cds_graph.len()), &cfg.solver)?;
        report.flags.degenerate_weights = weights.any_degenerate();
        report.cds = Some(cds_details(&cds_graph, &solution.membership, alpha, &weights));
        report.flags.vote_tie = vote.as_ref().is_some_and(|v| v.tie);
        match best_match(&cds_graph, &solution) {
            CdsMatch::Match { image, tie, low_confidence, .. } => {
                report.flags.cds_tie = tie;
                report.flags.low_confidence = low_confidence;
                Ok(self.finish(report, Some(image)))
            }
            CdsMatch::NoMatch => {
                report.flags.no_match_fallback = true;
                report.stages.push("vote".into());
                Ok(self.finish_vote(report, vote))
            }
        }
    }

    fn finish_vote(&self, mut report: LocalizationReport, vote: Option<VoteOutcome>) -> LocalizationReport {
        match vote {
            Some(v) => {
                report.flags.vote_tie = v.tie;
                self.finish(report, Some(v.image))
            }
            None => {
                report.status = Status::Aborted;
                report.diagnostic = Some("no votes cast".into());
                report
            }
        }
    }

    fn finish(&self, mut report: LocalizationReport, image: Option<ImageId>) -> LocalizationReport {
        report.predicted_gps = image.as_ref().map(|id| self.reference(id).gps);
        report.predicted_image = image;
        report
    }
}

fn cds_details(g: &CdsGraph, membership: &BTreeMap<usize, f64>, alpha: f64, weights: &FeatureWeighting) -> CdsDetails {
    let mut m: BTreeMap<String, f64> = BTreeMap::new();
    for (&node, &x) in membership {
        let key = g.image_of(node).map_or_else(|| "query".to_string(), ImageId::to_string);
        *m.entry(key).or_default() += x;
    }
    CdsDetails {
        alpha,
        weights: weights.features.iter().map(|f| (f.name.clone(), f.weight)).collect(),
        membership: m,
        nodes: g.len(),
    }
}

/// Fills error and failure fields from the query's ground-truth position.
pub fn score_report(report: &mut LocalizationReport, truth: GpsCoord) {
    report.error_m = report.predicted_gps.map(|p| haversine_m(p, truth));
    report.failure = report.error_m.is_none_or(|e| e > FAILURE_CUTOFF_M);
}

/// Localizes every query in parallel; reports keep the query order.
pub fn run_pipeline(dataset: &Dataset, index: &DescriptorIndex, config: &PipelineConfig) -> Result<Vec<LocalizationReport>> {
    let localizer = Localizer::new(&dataset.references, index, config.clone())?;
    dataset
        .queries
        .par_iter()
        .map(|q| {
            let mut r = localizer.localize(q.matcher_view())?;
            score_report(&mut r, q.gps);
            Ok(r)
        })
        .collect()
}

pub fn write_reports<W: Write>(reports: &[LocalizationReport], mut out: W) -> Result<()> {
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_reports<R: BufRead>(input: R) -> Result<Vec<LocalizationReport>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: LocalizationReport = serde_json::from_str(&line).map_err(|e| Error::Schema {
            path: "<reports>".into(),
            record: i + 1,
            message: e.to_string(),
        })?;
        if r.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema {
                path: "<reports>".into(),
                record: i + 1,
                message: format!("schema_version {} is not supported", r.schema_version),
            });
        }
        out.push(r);
    }
    Ok(out)
}

/// Groups report errors by method for [`crate::eval::evaluate`].
pub fn errors_by_method(reports: &[LocalizationReport]) -> BTreeMap<&'static str, Vec<Option<f64>>> {
    let mut m: BTreeMap<&'static str, Vec<Option<f64>>> = BTreeMap::new();
    for r in reports {
        m.entry(r.method.as_str()).or_default().push(r.error_m);
    }
    m
}
