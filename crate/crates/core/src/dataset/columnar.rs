//! Binary columnar layout, all integers and floats little-endian:
//!
//! ```text
//! magic "DSLC" | u32 schema_version | u32 records | u32 descriptor_dim
//! ids:       records x (u32 byte length, utf-8 bytes)
//! lat, lon:  records x f64 each
//! features:  u32 count, then per feature (u32 name length, utf-8 name, u32 dim)
//!            followed by records x dim f64 values for that feature
//! counts:    records x u32 local descriptor counts
//! values:    sum(counts) x descriptor_dim f32
//! ```
//!
//! Every record must share the same global-feature names and dimensions.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{ImageRecord, SCHEMA_VERSION};
use crate::cds::GlobalFeatures;
use crate::error::{Error, Result};
use crate::geo::GpsCoord;
use crate::image::ImageId;

const MAGIC: &[u8; 4] = b"DSLC";

fn len_u32(n: usize, path: &Path) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Schema {
        path: path.to_path_buf(),
        record: 0,
        message: format!("length {n} does not fit the columnar format"),
    })
}

pub fn write_columnar(path: &Path, records: &[ImageRecord]) -> Result<()> {
    let dim = records
        .iter()
        .flat_map(|r| r.local_descriptors.first())
        .map(Vec::len)
        .next()
        .unwrap_or(0);
    let schema: Vec<(String, usize)> = records
        .first()
        .map(|r| r.global_features.iter().map(|(k, v)| (k.clone(), v.len())).collect())
        .unwrap_or_default();
    for (i, r) in records.iter().enumerate() {
        let own: Vec<(String, usize)> = r.global_features.iter().map(|(k, v)| (k.clone(), v.len())).collect();
        if own != schema || r.local_descriptors.iter().any(|d| d.len() != dim) {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                record: i + 1,
                message: format!("{}: record shape differs from the first record", r.image_id),
            });
        }
    }

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(SCHEMA_VERSION)?;
    w.write_u32::<LE>(len_u32(records.len(), path)?)?;
    w.write_u32::<LE>(len_u32(dim, path)?)?;
    for r in records {
        let id = r.image_id.as_str().as_bytes();
        w.write_u32::<LE>(len_u32(id.len(), path)?)?;
        w.write_all(id)?;
    }
    for r in records {
        w.write_f64::<LE>(r.gps.lat)?;
    }
    for r in records {
        w.write_f64::<LE>(r.gps.lon)?;
    }
    w.write_u32::<LE>(len_u32(schema.len(), path)?)?;
    for (name, fdim) in &schema {
        w.write_u32::<LE>(len_u32(name.len(), path)?)?;
        w.write_all(name.as_bytes())?;
        w.write_u32::<LE>(len_u32(*fdim, path)?)?;
        for r in records {
            for &v in &r.global_features[name] {
                w.write_f64::<LE>(v)?;
            }
        }
    }
    for r in records {
        w.write_u32::<LE>(len_u32(r.local_descriptors.len(), path)?)?;
    }
    for r in records {
        for d in &r.local_descriptors {
            for &v in d {
                w.write_f32::<LE>(v)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_columnar(path: &Path) -> Result<Vec<ImageRecord>> {
    let mut r = BufReader::new(File::open(path)?);
    let schema_err = |message: String| Error::Schema {
        path: path.to_path_buf(),
        record: 0,
        message,
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(schema_err("not a columnar dataset file (bad magic)".into()));
    }
    let version = r.read_u32::<LE>()?;
    if version != SCHEMA_VERSION {
        return Err(schema_err(format!("schema_version {version} is not supported")));
    }
    let n = r.read_u32::<LE>()? as usize;
    let dim = r.read_u32::<LE>()? as usize;

    let read_string = |r: &mut BufReader<File>| -> Result<String> {
        let len = r.read_u32::<LE>()? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        String::from_utf8(buf).map_err(|e| schema_err(format!("invalid utf-8: {e}")))
    };
    let ids: Vec<String> = (0..n).map(|_| read_string(&mut r)).collect::<Result<_>>()?;
    let lat: Vec<f64> = (0..n).map(|_| r.read_f64::<LE>()).collect::<std::io::Result<_>>()?;
    let lon: Vec<f64> = (0..n).map(|_| r.read_f64::<LE>()).collect::<std::io::Result<_>>()?;
    let mut features = vec![GlobalFeatures::new(); n];
    let nf = r.read_u32::<LE>()? as usize;
    for _ in 0..nf {
        let name = read_string(&mut r)?;
        let fdim = r.read_u32::<LE>()? as usize;
        for f in features.iter_mut() {
            let v: Vec<f64> = (0..fdim).map(|_| r.read_f64::<LE>()).collect::<std::io::Result<_>>()?;
            f.insert(name.clone(), v);
        }
    }
    let counts: Vec<usize> = (0..n)
        .map(|_| r.read_u32::<LE>().map(|c| c as usize))
        .collect::<std::io::Result<_>>()?;
    let mut out = Vec::with_capacity(n);
    for (i, ((id, f), count)) in ids.into_iter().zip(features).zip(counts).enumerate() {
        let mut local = Vec::with_capacity(count);
        for _ in 0..count {
            let d: Vec<f32> = (0..dim).map(|_| r.read_f32::<LE>()).collect::<std::io::Result<_>>()?;
            local.push(d);
        }
        out.push(ImageRecord {
            image_id: ImageId::new(id),
            gps: GpsCoord { lat: lat[i], lon: lon[i] },
            global_features: f,
            local_descriptors: local,
        });
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(schema_err(format!("{} trailing bytes", rest.len())));
    }
    Ok(out)
}
