//! Reference and query records, validation, and on-disk formats.
//!
//! A dataset is a directory holding `references.<ext>` and `queries.<ext>`,
//! where the extension is `jsonl` or `bin` (see [`Format`]).

mod columnar;
mod jsonl;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cds::GlobalFeatures;
use crate::error::{Error, Result};
use crate::geo::GpsCoord;
use crate::image::ImageId;
use crate::nn::LocalDescriptor;

pub use columnar::{read_columnar, write_columnar};
pub use jsonl::{read_jsonl, write_jsonl, JsonRecord};

pub const SCHEMA_VERSION: u32 = 1;

/// One GPS-tagged image with its precomputed descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: ImageId,
    pub gps: GpsCoord,
    pub global_features: GlobalFeatures,
    /// Row-major, one entry per local feature.
    pub local_descriptors: Vec<Vec<f32>>,
}

pub type ReferenceRecord = ImageRecord;
/// Same shape as a reference; `gps` is ground truth used only for scoring.
pub type QueryRecord = ImageRecord;

impl ImageRecord {
    pub fn descriptors(&self) -> impl Iterator<Item = LocalDescriptor> + '_ {
        self.local_descriptors
            .iter()
            .enumerate()
            .map(|(i, v)| LocalDescriptor::new(v.clone(), self.image_id.clone(), i))
    }

    /// What the matcher is allowed to see of a query.
    pub fn matcher_view(&self) -> QueryView<'_> {
        QueryView {
            image_id: &self.image_id,
            global_features: &self.global_features,
            local_descriptors: &self.local_descriptors,
        }
    }
}

/// A query with its ground-truth position withheld.
#[derive(Debug, Clone, Copy)]
pub struct QueryView<'a> {
    pub image_id: &'a ImageId,
    pub global_features: &'a GlobalFeatures,
    pub local_descriptors: &'a [Vec<f32>],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub references: Vec<ReferenceRecord>,
    pub queries: Vec<QueryRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Jsonl,
    Columnar,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Jsonl => "jsonl",
            Format::Columnar => "bin",
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(Format::Jsonl),
            "columnar" | "bin" => Ok(Format::Columnar),
            other => Err(Error::Config(format!("unknown format `{other}` (jsonl | columnar)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Reference,
    Query,
}

impl Role {
    pub fn stem(self) -> &'static str {
        match self {
            Role::Reference => "references",
            Role::Query => "queries",
        }
    }
}

pub fn dataset_file(dir: &Path, role: Role, format: Format) -> PathBuf {
    dir.join(format!("{}.{}", role.stem(), format.extension()))
}

pub fn read_records(path: &Path, format: Format) -> Result<Vec<ImageRecord>> {
    match format {
        Format::Jsonl => read_jsonl(path),
        Format::Columnar => read_columnar(path),
    }
}

pub fn write_records(path: &Path, records: &[ImageRecord], format: Format) -> Result<()> {
    match format {
        Format::Jsonl => write_jsonl(path, records),
        Format::Columnar => write_columnar(path, records),
    }
}

/// Reads and validates both record files from `dir`.
pub fn load_dataset(dir: &Path, format: Format) -> Result<Dataset> {
    let ds = Dataset {
        references: read_records(&dataset_file(dir, Role::Reference, format), format)?,
        queries: read_records(&dataset_file(dir, Role::Query, format), format)?,
    };
    validate_dataset(&ds, dir)?;
    Ok(ds)
}

pub fn save_dataset(dir: &Path, dataset: &Dataset, format: Format) -> Result<()> {
    validate_dataset(dataset, dir)?;
    std::fs::create_dir_all(dir)?;
    write_records(&dataset_file(dir, Role::Reference, format), &dataset.references, format)?;
    write_records(&dataset_file(dir, Role::Query, format), &dataset.queries, format)?;
    Ok(())
}

/// Coordinate ranges, finite values, uniform descriptor dimension, one
/// global-feature schema, unique ids within each role.
pub fn validate_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    let ref_path = dir.join(Role::Reference.stem());
    if ds.references.is_empty() {
        return Err(Error::EmptyReferences);
    }
    let dim = ds
        .references
        .iter()
        .chain(&ds.queries)
        .flat_map(|r| r.local_descriptors.first())
        .map(Vec::len)
        .next();
    let schema: Vec<(String, usize)> = ds.references[0]
        .global_features
        .iter()
        .map(|(k, v)| (k.clone(), v.len()))
        .collect();
    for (role, records) in [(Role::Reference, &ds.references), (Role::Query, &ds.queries)] {
        let path = if role == Role::Reference { ref_path.clone() } else { dir.join(role.stem()) };
        let mut seen = BTreeSet::new();
        for (i, r) in records.iter().enumerate() {
            let fail = |message: String| Error::Schema {
                path: path.clone(),
                record: i + 1,
                message: format!("{}: {message}", r.image_id),
            };
            if !seen.insert(&r.image_id) {
                return Err(fail("duplicate image_id".into()));
            }
            if let Err(e) = r.gps.validate() {
                let field = if (-90.0..=90.0).contains(&r.gps.lat) { "gps.lon" } else { "gps.lat" };
                return Err(fail(format!("{field}: {e}")));
            }
            let own: Vec<(String, usize)> = r.global_features.iter().map(|(k, v)| (k.clone(), v.len())).collect();
            if own != schema {
                return Err(fail(format!("global_features {own:?} differ from {schema:?}")));
            }
            if let Some((name, _)) = r.global_features.iter().find(|(_, v)| v.iter().any(|x| !x.is_finite())) {
                return Err(fail(format!("global_features.{name} has a non-finite value")));
            }
            for (j, d) in r.local_descriptors.iter().enumerate() {
                if Some(d.len()) != dim {
                    return Err(fail(format!(
                        "local_descriptors[{j}] has dimension {} (expected {})",
                        d.len(),
                        dim.unwrap_or(0)
                    )));
                }
                if d.iter().any(|x| !x.is_finite()) {
                    return Err(fail(format!("local_descriptors[{j}] has a non-finite value")));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
pub(crate) fn sample_record(id: &str, lat: f64, n: usize, dim: usize) -> ImageRecord {
    let mut g = GlobalFeatures::new();
    g.insert("cnn".into(), vec![lat, 0.5, -1.25]);
    g.insert("hsv".into(), vec![0.1 * n as f64]);
    ImageRecord {
        image_id: ImageId::new(id),
        gps: GpsCoord { lat, lon: -79.99 },
        global_features: g,
        local_descriptors: (0..n)
            .map(|i| (0..dim).map(|k| (i * dim + k) as f32 * 0.37 - 3.0).collect())
            .collect(),
    }
}
