//! One JSON object per line. Local descriptors are a single base64 string of
//! little-endian `f32`s, `count * descriptor_dim` values long.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{ImageRecord, SCHEMA_VERSION};
use crate::cds::GlobalFeatures;
use crate::error::{Error, Result};
use crate::geo::GpsCoord;
use crate::image::ImageId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JsonRecord {
    pub schema_version: u32,
    pub image_id: ImageId,
    pub gps: GpsCoord,
    pub global_features: GlobalFeatures,
    pub descriptor_dim: usize,
    pub descriptor_count: usize,
    pub local_descriptors: String,
}

impl JsonRecord {
    pub fn encode(r: &ImageRecord) -> Self {
        let dim = r.local_descriptors.first().map_or(0, Vec::len);
        let mut bytes = Vec::with_capacity(r.local_descriptors.len() * dim * 4);
        for d in &r.local_descriptors {
            for v in d {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        Self {
            schema_version: SCHEMA_VERSION,
            image_id: r.image_id.clone(),
            gps: r.gps,
            global_features: r.global_features.clone(),
            descriptor_dim: dim,
            descriptor_count: r.local_descriptors.len(),
            local_descriptors: STANDARD.encode(bytes),
        }
    }

    pub fn decode(self) -> std::result::Result<ImageRecord, String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        let bytes = STANDARD
            .decode(&self.local_descriptors)
            .map_err(|e| format!("local_descriptors: {e}"))?;
        let expected = self.descriptor_count * self.descriptor_dim * 4;
        if bytes.len() != expected {
            return Err(format!(
                "local_descriptors: {} bytes, expected {expected} ({} x {} f32)",
                bytes.len(),
                self.descriptor_count,
                self.descriptor_dim
            ));
        }
        let values: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let local_descriptors = if self.descriptor_dim == 0 {
            vec![Vec::new(); self.descriptor_count]
        } else {
            values.chunks(self.descriptor_dim).map(<[f32]>::to_vec).collect()
        };
        Ok(ImageRecord {
            image_id: self.image_id,
            gps: self.gps,
            global_features: self.global_features,
            local_descriptors,
        })
    }
}

pub fn read_jsonl(path: &Path) -> Result<Vec<ImageRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| Error::Schema {
            path: path.to_path_buf(),
            record: i + 1,
            message,
        };
        let rec: JsonRecord = serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?;
        out.push(rec.decode().map_err(schema)?);
    }
    Ok(out)
}

pub fn write_jsonl(path: &Path, records: &[ImageRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, &JsonRecord::encode(r))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
