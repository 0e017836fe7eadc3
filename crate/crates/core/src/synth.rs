//! Synthetic city: GPS-gridded references with planted query matches.
//!
//! References sit on a square grid. Each has random SIFT-like descriptors in
//! `[0, 255]`, some of them shared with a grid neighbor (overlapping views),
//! and three global vectors: `cnn` (queries copy it with small noise), `hsv`
//! (copied with heavy noise), and `gist` (queries get an unrelated vector).
//! A query clones part of one reference's descriptors with Gaussian noise and
//! fills the rest with random distractors.
//!
//! With `decoy_rate > 0` some ground-truth references get a far-away twin
//! holding an exact copy of their local descriptors but its own global
//! vectors, so local votes tie between the two.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::cds::GlobalFeatures;
use crate::dataset::{validate_dataset, Dataset, ImageRecord};
use crate::error::{Error, Result};
use crate::geo::{GpsCoord, PlanarFrame};
use crate::image::ImageId;

/// Descriptor values lie in `[0, DESCRIPTOR_SCALE]`.
pub const DESCRIPTOR_SCALE: f32 = 255.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CityConfig {
    pub seed: u64,
    /// References per grid side.
    pub grid: usize,
    pub spacing_m: f64,
    pub origin: GpsCoord,
    pub descriptors_per_image: usize,
    pub descriptor_dim: usize,
    pub queries: usize,
    /// Query descriptor noise, standard deviation as a fraction of the scale.
    pub noise: f64,
    /// Fraction of query descriptors that are unrelated distractors.
    pub distractor_rate: f64,
    /// Fraction of each reference's descriptors shared with a grid neighbor.
    pub overlap: f64,
    pub overlap_noise: f64,
    /// Standard deviation of the query position around its reference, meters.
    pub gps_jitter_m: f64,
    /// Spread of the reference global vectors.
    pub global_scale: f64,
    /// Probability that a ground-truth reference gets a duplicated decoy.
    pub decoy_rate: f64,
    pub decoy_distance_m: f64,
}

impl Default for CityConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            grid: 10,
            spacing_m: 12.0,
            origin: GpsCoord { lat: 40.4406, lon: -79.9959 },
            descriptors_per_image: 20,
            descriptor_dim: 128,
            queries: 50,
            noise: 0.1,
            distractor_rate: 0.3,
            overlap: 0.2,
            overlap_noise: 0.02,
            gps_jitter_m: 2.0,
            global_scale: 64.0,
            decoy_rate: 0.0,
            decoy_distance_m: 1500.0,
        }
    }
}

impl CityConfig {
    /// Every ground-truth reference gets a decoy twin.
    pub fn tie_heavy() -> Self {
        Self {
            decoy_rate: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let frac = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} must lie in [0, 1]")))
            }
        };
        frac("distractor_rate", self.distractor_rate)?;
        frac("overlap", self.overlap)?;
        frac("decoy_rate", self.decoy_rate)?;
        if self.grid == 0 || self.descriptors_per_image == 0 || self.descriptor_dim == 0 {
            return Err(Error::Config("grid, descriptors_per_image and descriptor_dim must be positive".into()));
        }
        for (name, v) in [
            ("noise", self.noise),
            ("overlap_noise", self.overlap_noise),
            ("gps_jitter_m", self.gps_jitter_m),
            ("spacing_m", self.spacing_m),
            ("global_scale", self.global_scale),
            ("decoy_distance_m", self.decoy_distance_m),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        self.origin.validate()
    }
}

/// Global feature names emitted by the generator.
pub const GLOBAL_FEATURES: [&str; 3] = ["cnn", "hsv", "gist"];
const GLOBAL_DIMS: [usize; 3] = [16, 8, 8];
/// Query noise per global feature as a fraction of `global_scale`; `None`
/// means the query vector is unrelated to its reference.
const GLOBAL_QUERY_NOISE: [Option<f64>; 3] = [Some(0.1), Some(0.5), None];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCity {
    pub dataset: Dataset,
    /// Query id to the reference it was cloned from.
    pub truth: BTreeMap<ImageId, ImageId>,
    pub frame: PlanarFrame,
}

struct Slot {
    gps: GpsCoord,
    global: GlobalFeatures,
    local: Vec<Vec<f32>>,
}

pub fn generate_synthetic_city(config: &CityConfig) -> Result<SyntheticCity> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let frame = PlanarFrame::new(config.origin);
    let g = config.grid;
    let n_desc = config.descriptors_per_image;
    let scale = DESCRIPTOR_SCALE;
    let uniform = Uniform::new_inclusive(0.0f32, scale).map_err(|e| Error::Config(e.to_string()))?;
    let normal = |sd: f64| Normal::new(0.0, sd).map_err(|e| Error::Config(e.to_string()));
    let random_descriptor = |rng: &mut ChaCha8Rng| -> Vec<f32> { (0..config.descriptor_dim).map(|_| uniform.sample(rng)).collect() };
    let global_noise = normal(config.global_scale)?;
    let random_global = |rng: &mut ChaCha8Rng| -> GlobalFeatures {
        GLOBAL_FEATURES
            .iter()
            .zip(GLOBAL_DIMS)
            .map(|(name, d)| (name.to_string(), (0..d).map(|_| global_noise.sample(rng)).collect()))
            .collect()
    };
    let clamp = |v: f64| (v as f32).clamp(0.0, scale);

    let half = (g as f64 - 1.0) * config.spacing_m / 2.0;
    let mut slots: Vec<Slot> = Vec::with_capacity(g * g);
    for r in 0..g {
        for c in 0..g {
            let xy = [c as f64 * config.spacing_m - half, r as f64 * config.spacing_m - half];
            slots.push(Slot {
                gps: frame.unproject(xy),
                global: random_global(&mut rng),
                local: (0..n_desc).map(|_| random_descriptor(&mut rng)).collect(),
            });
        }
    }
    // Overlapping views: the first descriptors of each cell reuse the last
    // ones of a horizontal neighbor.
    let shared = (config.overlap * n_desc as f64).round() as usize;
    let overlap_noise = normal(config.overlap_noise * scale as f64)?;
    if g > 1 {
        let base: Vec<Vec<Vec<f32>>> = slots.iter().map(|s| s.local.clone()).collect();
        for r in 0..g {
            for c in 0..g {
                let nb = r * g + if c + 1 < g { c + 1 } else { c - 1 };
                for k in 0..shared.min(n_desc / 2) {
                    let src = &base[nb][n_desc - 1 - k];
                    slots[r * g + c].local[k] = src.iter().map(|&v| clamp(v as f64 + overlap_noise.sample(&mut rng))).collect();
                }
            }
        }
    }

    let truth_slots: Vec<usize> = (0..config.queries).map(|_| rng.random_range(0..g * g)).collect();
    let distinct: BTreeSet<usize> = truth_slots.iter().copied().collect();
    for &t in &distinct {
        if rng.random_bool(config.decoy_rate) {
            let angle = rng.random::<f64>() * std::f64::consts::TAU;
            let xy = [config.decoy_distance_m * angle.cos(), config.decoy_distance_m * angle.sin()];
            slots.push(Slot {
                gps: frame.unproject(xy),
                global: random_global(&mut rng),
                local: slots[t].local.clone(),
            });
        }
    }

    // Ids carry no positional information, so id-order tie-breaks are arbitrary.
    let mut labels: Vec<usize> = (0..slots.len()).collect();
    labels.shuffle(&mut rng);
    let ids: Vec<ImageId> = labels.iter().map(|l| ImageId::new(format!("ref{l:04}"))).collect();

    let noise = normal(config.noise * scale as f64)?;
    let jitter = normal(config.gps_jitter_m)?;
    let n_distract = (config.distractor_rate * n_desc as f64).round() as usize;
    let mut queries = Vec::with_capacity(config.queries);
    let mut truth = BTreeMap::new();
    for (qi, &t) in truth_slots.iter().enumerate() {
        let src = &slots[t];
        let mut local: Vec<Vec<f32>> = index::sample(&mut rng, n_desc, n_desc - n_distract)
            .into_iter()
            .map(|k| src.local[k].iter().map(|&v| clamp(v as f64 + noise.sample(&mut rng))).collect())
            .collect();
        local.extend((0..n_distract).map(|_| random_descriptor(&mut rng)));
        local.shuffle(&mut rng);

        let mut global = GlobalFeatures::new();
        for (k, name) in GLOBAL_FEATURES.iter().enumerate() {
            let v: Vec<f64> = match GLOBAL_QUERY_NOISE[k] {
                Some(f) => {
                    let n = normal(f * config.global_scale)?;
                    src.global[*name].iter().map(|&x| x + n.sample(&mut rng)).collect()
                }
                None => (0..GLOBAL_DIMS[k]).map(|_| global_noise.sample(&mut rng)).collect(),
            };
            global.insert(name.to_string(), v);
        }
        let xy = frame.project(src.gps);
        let gps = frame.unproject([xy[0] + jitter.sample(&mut rng), xy[1] + jitter.sample(&mut rng)]);
        let id = ImageId::new(format!("query{qi:04}"));
        truth.insert(id.clone(), ids[t].clone());
        queries.push(ImageRecord {
            image_id: id,
            gps,
            global_features: global,
            local_descriptors: local,
        });
    }

    let mut references: Vec<ImageRecord> = slots
        .into_iter()
        .zip(&ids)
        .map(|(s, id)| ImageRecord {
            image_id: id.clone(),
            gps: s.gps,
            global_features: s.global,
            local_descriptors: s.local,
        })
        .collect();
    references.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let dataset = Dataset { references, queries };
    validate_dataset(&dataset, std::path::Path::new("<synthetic>"))?;
    Ok(SyntheticCity { dataset, truth, frame })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::haversine_m;

    fn small() -> CityConfig {
        CityConfig {
            grid: 4,
            queries: 6,
            descriptor_dim: 16,
            descriptors_per_image: 10,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_city() {
        assert_eq!(generate_synthetic_city(&small()).unwrap(), generate_synthetic_city(&small()).unwrap());
        let other = CityConfig { seed: 8, ..small() };
        assert_ne!(generate_synthetic_city(&small()).unwrap(), generate_synthetic_city(&other).unwrap());
    }

    #[test]
    fn noiseless_queries_hold_exact_duplicates() {
        let cfg = CityConfig {
            noise: 0.0,
            distractor_rate: 0.0,
            ..small()
        };
        let city = generate_synthetic_city(&cfg).unwrap();
        for q in &city.dataset.queries {
            let truth = &city.truth[&q.image_id];
            let r = city.dataset.references.iter().find(|r| &r.image_id == truth).unwrap();
            for d in &q.local_descriptors {
                assert!(r.local_descriptors.contains(d));
            }
        }
    }

    #[test]
    fn grid_spacing_and_query_jitter() {
        let city = generate_synthetic_city(&CityConfig { gps_jitter_m: 0.0, ..small() }).unwrap();
        let refs = &city.dataset.references;
        assert_eq!(refs.len(), 16);
        let mut nearest = f64::INFINITY;
        for a in refs {
            for b in refs {
                if a.image_id != b.image_id {
                    nearest = nearest.min(haversine_m(a.gps, b.gps));
                }
            }
        }
        assert!((nearest - 12.0).abs() < 0.01, "{nearest}");
        for q in &city.dataset.queries {
            let t = refs.iter().find(|r| r.image_id == city.truth[&q.image_id]).unwrap();
            assert!(haversine_m(q.gps, t.gps) < 1e-6);
        }
    }

    #[test]
    fn decoys_copy_local_content_far_away() {
        let city = generate_synthetic_city(&CityConfig { decoy_rate: 1.0, ..small() }).unwrap();
        let refs = &city.dataset.references;
        let distinct: BTreeSet<&ImageId> = city.truth.values().collect();
        assert_eq!(refs.len(), 16 + distinct.len());
        for t in distinct {
            let r = refs.iter().find(|r| &r.image_id == t).unwrap();
            let twin = refs
                .iter()
                .find(|o| o.image_id != r.image_id && o.local_descriptors == r.local_descriptors)
                .expect("decoy");
            assert!(haversine_m(r.gps, twin.gps) > 1000.0);
            assert_ne!(r.global_features, twin.global_features);
        }
    }

    #[test]
    fn distractor_count() {
        let city = generate_synthetic_city(&small()).unwrap();
        assert!(city.dataset.queries.iter().all(|q| q.local_descriptors.len() == 10));
        assert!(CityConfig { distractor_rate: 1.5, ..small() }.validate().is_err());
    }
}
