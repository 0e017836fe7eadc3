use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use dsloc::dataset::{load_dataset, save_dataset, Format};
use dsloc::eval::{evaluate, write_curves_csv, DEFAULT_THRESHOLDS_M};
use dsloc::nn::{build_index, DescriptorIndex, IndexBackend, IndexConfig, TreeParams};
use dsloc::pipeline::{errors_by_method, read_reports, run_pipeline, write_reports, Method, PipelineConfig};
use dsloc::synth::{generate_synthetic_city, CityConfig};
use dsloc::verify;
use dsloc::{Error, Result};

#[derive(Parser)]
#[command(name = "dsloc", version, about = "Image geo-localization with dominant-set matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic city dataset.
    Generate(GenerateArgs),
    /// Build a descriptor index over the reference set.
    Index(IndexArgs),
    /// Localize every query and write JSON-lines reports.
    Localize(LocalizeArgs),
    /// Turn reports into accuracy-at-threshold CSV curves.
    Evaluate(EvaluateArgs),
    /// Run the oracle and planted-data checks.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Jsonl,
    Columnar,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Jsonl => Format::Jsonl,
            FormatArg::Columnar => Format::Columnar,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Vote,
    Cds,
    FirstNn,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Vote => Method::Vote,
            MethodArg::Cds => Method::Cds,
            MethodArg::FirstNn => Method::FirstNn,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Exact,
    Tree,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Give every ground-truth reference a distant duplicate.
    #[arg(long)]
    tie_heavy: bool,
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    distractors: Option<f64>,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: FormatArg,
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "exact")]
    backend: BackendArg,
    /// Seed of the k-means tree.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: FormatArg,
}

/// Defaults for `localize`, read from a JSON file. Flags win over the file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    method: Option<Method>,
    theta: Option<f64>,
    beta: Option<f64>,
    gamma: Option<f64>,
    clusters: Option<usize>,
    pool: Option<usize>,
    seed: Option<u64>,
}

#[derive(Args)]
struct LocalizeArgs {
    #[arg(long)]
    data: PathBuf,
    /// Prebuilt index; built on the fly when absent.
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// JSON file of default settings.
    #[arg(long, env = "DSLOC_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    clusters: Option<usize>,
    /// Candidate neighbors fetched per query feature.
    #[arg(long)]
    pool: Option<usize>,
    /// Backend when the index is built here.
    #[arg(long, value_enum, default_value = "exact")]
    backend: BackendArg,
    /// Seed of the k-means tree when the index is built here.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: FormatArg,
}

#[derive(Args)]
struct EvaluateArgs {
    /// One or more report files.
    #[arg(long, required = true, num_args = 1..)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run only these criteria.
    #[arg(long, value_delimiter = ',')]
    only: Vec<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Index(a) => index(a),
        Command::Localize(a) => localize(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Verify(a) => verify_cmd(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("dsloc: {e}");
            ExitCode::FAILURE
        }
    }
}

fn generate(a: GenerateArgs) -> Result<bool> {
    let base = if a.tie_heavy { CityConfig::tie_heavy() } else { CityConfig::default() };
    let config = CityConfig {
        seed: a.seed,
        queries: a.queries.unwrap_or(base.queries),
        noise: a.noise.unwrap_or(base.noise),
        distractor_rate: a.distractors.unwrap_or(base.distractor_rate),
        ..base
    };
    let city = generate_synthetic_city(&config)?;
    std::fs::create_dir_all(&a.out)?;
    save_dataset(&a.out, &city.dataset, a.format.into())?;
    let truth = BufWriter::new(File::create(a.out.join("truth.json"))?);
    serde_json::to_writer_pretty(truth, &city.truth)?;
    eprintln!(
        "wrote {} references and {} queries to {}",
        city.dataset.references.len(),
        city.dataset.queries.len(),
        a.out.display()
    );
    Ok(true)
}

fn index_config(backend: BackendArg, seed: u64) -> IndexConfig {
    match backend {
        BackendArg::Exact => IndexConfig::default(),
        BackendArg::Tree => IndexConfig {
            backend: IndexBackend::KmeansTree(TreeParams { seed, ..TreeParams::default() }),
        },
    }
}

fn index(a: IndexArgs) -> Result<bool> {
    let ds = load_dataset(&a.data, a.format.into())?;
    let idx = build_index(ds.references.iter().flat_map(|r| r.descriptors()).collect(), &index_config(a.backend, a.seed))?;
    let mut out = BufWriter::new(File::create(&a.out)?);
    serde_json::to_writer(&mut out, &idx)?;
    out.flush()?;
    eprintln!("indexed {} descriptors of dimension {}", idx.len(), idx.dim());
    Ok(true)
}

fn read_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => serde_json::from_reader(BufReader::new(File::open(p)?))
            .map_err(|e| Error::Config(format!("{}: {e}", p.display()))),
    }
}

fn localize(a: LocalizeArgs) -> Result<bool> {
    let file = read_config(a.config.as_deref())?;
    let mut config = PipelineConfig::default();
    if let Some(m) = a.method.map(Method::from).or(file.method) {
        config.method = m;
    }
    if let Some(v) = a.theta.or(file.theta) {
        config.selection.theta = v;
    }
    if let Some(v) = a.beta.or(file.beta) {
        config.selection.beta = v;
    }
    if let Some(v) = a.gamma.or(file.gamma) {
        config.gamma = v;
    }
    if let Some(v) = a.clusters.or(file.clusters) {
        config.clusters = v;
    }
    if let Some(v) = a.pool.or(file.pool) {
        config.selection.max_pool = v;
    }
    config.validate()?;

    let ds = load_dataset(&a.data, a.format.into())?;
    let idx: DescriptorIndex = match &a.index {
        Some(p) => serde_json::from_reader(BufReader::new(File::open(p)?))?,
        None => {
            let seed = a.seed.or(file.seed).unwrap_or(0);
            build_index(ds.references.iter().flat_map(|r| r.descriptors()).collect(), &index_config(a.backend, seed))?
        }
    };
    let expected: usize = ds.references.iter().map(|r| r.local_descriptors.len()).sum();
    if idx.len() != expected {
        return Err(Error::Config(format!(
            "index holds {} descriptors but the reference set has {expected}",
            idx.len()
        )));
    }
    let reports = run_pipeline(&ds, &idx, &config)?;
    write_reports(&reports, BufWriter::new(File::create(&a.out)?))?;
    let failures = reports.iter().filter(|r| r.failure).count();
    eprintln!("localized {} queries with {}, {failures} failures", reports.len(), config.method.as_str());
    Ok(true)
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<bool> {
    let mut reports = Vec::new();
    for p in &a.reports {
        reports.extend(read_reports(BufReader::new(File::open(p)?))?);
    }
    let thresholds = a.thresholds.unwrap_or_else(|| DEFAULT_THRESHOLDS_M.to_vec());
    let curves = errors_by_method(&reports)
        .into_iter()
        .map(|(m, e)| evaluate(m, &e, &thresholds))
        .collect::<Result<Vec<_>>>()?;
    match a.out {
        Some(p) => write_curves_csv(&curves, BufWriter::new(File::create(p)?))?,
        None => write_curves_csv(&curves, std::io::stdout().lock())?,
    }
    Ok(true)
}

fn verify_cmd(a: VerifyArgs) -> Result<bool> {
    let mut all = true;
    for id in verify::CRITERIA.filter(|id| a.only.is_empty() || a.only.contains(id)) {
        let o = verify::run_check(id)?;
        all &= o.passed;
        println!("{o}");
    }
    Ok(all)
}
