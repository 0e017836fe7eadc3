//! GPS coordinates, great-circle error, and a local planar frame.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsCoord {
    /// Degrees, `[-90, 90]`.
    pub lat: f64,
    /// Degrees, `[-180, 180]`.
    pub lon: f64,
}

impl GpsCoord {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let c = Self { lat, lon };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lat.is_finite() && (-90.0..=90.0).contains(&self.lat)) {
            return Err(Error::Contract(format!("latitude {} outside [-90, 90]", self.lat)));
        }
        if !(self.lon.is_finite() && (-180.0..=180.0).contains(&self.lon)) {
            return Err(Error::Contract(format!("longitude {} outside [-180, 180]", self.lon)));
        }
        Ok(())
    }
}

/// Great-circle distance in meters.
pub fn haversine_m(p1: GpsCoord, p2: GpsCoord) -> f64 {
    let (phi1, phi2) = (p1.lat.to_radians(), p2.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (p2.lon - p1.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Equirectangular projection about a fixed origin, in meters (east, north).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarFrame {
    pub origin: GpsCoord,
}

impl PlanarFrame {
    pub fn new(origin: GpsCoord) -> Self {
        Self { origin }
    }

    /// Frame centered on the mean latitude/longitude of `points`.
    pub fn centroid<'a>(points: impl IntoIterator<Item = &'a GpsCoord>) -> Result<Self> {
        let (mut lat, mut lon, mut n) = (0.0, 0.0, 0usize);
        for p in points {
            lat += p.lat;
            lon += p.lon;
            n += 1;
        }
        if n == 0 {
            return Err(Error::EmptyReferences);
        }
        Ok(Self::new(GpsCoord {
            lat: lat / n as f64,
            lon: lon / n as f64,
        }))
    }

    pub fn project(&self, p: GpsCoord) -> [f64; 2] {
        let k = self.origin.lat.to_radians().cos();
        [
            EARTH_RADIUS_M * (p.lon - self.origin.lon).to_radians() * k,
            EARTH_RADIUS_M * (p.lat - self.origin.lat).to_radians(),
        ]
    }

    pub fn unproject(&self, xy: [f64; 2]) -> GpsCoord {
        let k = self.origin.lat.to_radians().cos();
        GpsCoord {
            lat: self.origin.lat + (xy[1] / EARTH_RADIUS_M).to_degrees(),
            lon: self.origin.lon + (xy[0] / (EARTH_RADIUS_M * k)).to_degrees(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haversine_closed_forms() {
        let o = GpsCoord::new(0.0, 0.0).unwrap();
        assert_eq!(haversine_m(o, o), 0.0);
        let d = haversine_m(o, GpsCoord::new(0.0, 1.0).unwrap());
        assert!((d - 2.0 * std::f64::consts::PI * EARTH_RADIUS_M / 360.0).abs() < 1e-6);
        assert!((d - 111_195.0).abs() < 1.0);
        let anti = haversine_m(o, GpsCoord::new(0.0, 180.0).unwrap());
        assert!((anti - std::f64::consts::PI * EARTH_RADIUS_M).abs() < 1e-6);
        let poles = haversine_m(GpsCoord::new(90.0, 0.0).unwrap(), GpsCoord::new(-90.0, 0.0).unwrap());
        assert!((poles - 20_015_086.8).abs() < 1.0);
    }

    #[test]
    fn rejects_bad_coordinates() {
        assert!(GpsCoord::new(91.0, 0.0).is_err());
        assert!(GpsCoord::new(0.0, -180.5).is_err());
        assert!(GpsCoord::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn planar_frame_matches_haversine_at_city_scale() {
        let origin = GpsCoord::new(40.44, -79.99).unwrap();
        let frame = PlanarFrame::new(origin);
        let p = frame.unproject([120.0, -84.0]);
        let xy = frame.project(p);
        assert!((xy[0] - 120.0).abs() < 1e-9 && (xy[1] + 84.0).abs() < 1e-9);
        let planar = (120.0f64.powi(2) + 84.0f64.powi(2)).sqrt();
        assert!((haversine_m(origin, p) - planar).abs() < 1e-3);
    }

    #[test]
    fn centroid_of_points() {
        let pts = [GpsCoord { lat: 1.0, lon: 2.0 }, GpsCoord { lat: 3.0, lon: 4.0 }];
        let f = PlanarFrame::centroid(&pts).unwrap();
        assert_eq!(f.origin, GpsCoord { lat: 2.0, lon: 3.0 });
        assert!(PlanarFrame::centroid(&[]).is_err());
    }
}
