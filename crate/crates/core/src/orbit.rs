//! Circular orbit through the ground-station zenith, sliced into
//! fixed-distance segments.
//!
//! Geometry is a spherical, non-rotating Earth. The ground station sits at
//! the north pole of a local frame; the satellite moves in the plane that
//! contains the station zenith, so its Earth-central angle from the zenith
//! grows linearly in time at the Keplerian rate.

use serde::{Deserialize, Serialize};

use crate::constants::{EARTH_GM_KM3_S2, EARTH_RADIUS_KM};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitConfig {
    pub altitude_km: f64,
    #[serde(default = "default_min_elevation")]
    pub min_elevation_deg: f64,
    #[serde(default = "default_earth_radius")]
    pub earth_radius_km: f64,
    #[serde(default = "default_segment_count")]
    pub segment_count: usize,
}

fn default_min_elevation() -> f64 {
    20.0
}

fn default_earth_radius() -> f64 {
    EARTH_RADIUS_KM
}

fn default_segment_count() -> usize {
    64
}

impl OrbitConfig {
    pub fn new(altitude_km: f64) -> Self {
        OrbitConfig {
            altitude_km,
            min_elevation_deg: default_min_elevation(),
            earth_radius_km: default_earth_radius(),
            segment_count: default_segment_count(),
        }
    }

    pub fn with_segments(mut self, segment_count: usize) -> Self {
        self.segment_count = segment_count;
        self
    }

    /// Lists every violated invariant.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.altitude_km > 0.0) {
            out.push(format!("orbit: altitude must be positive (got {} km)", self.altitude_km));
        }
        if !(self.min_elevation_deg > 0.0 && self.min_elevation_deg < 90.0) {
            out.push(format!("orbit: min_elevation must lie in (0, 90) degrees (got {})", self.min_elevation_deg));
        }
        if !(self.earth_radius_km > 0.0) {
            out.push("orbit: earth_radius must be positive".to_string());
        }
        if self.segment_count == 0 {
            out.push("orbit: segment_count must be at least 1".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let diags = self.diagnostics();
        if diags.is_empty() {
            Ok(())
        } else {
            Err(Error::Domain(diags.join("; ")))
        }
    }

    fn orbit_radius_km(&self) -> f64 {
        self.earth_radius_km + self.altitude_km
    }

    /// Keplerian angular velocity of the circular orbit, rad/s.
    pub fn angular_velocity(&self) -> f64 {
        (EARTH_GM_KM3_S2 / self.orbit_radius_km().powi(3)).sqrt()
    }

    /// Time spent above the minimum elevation during one pass, s.
    pub fn pass_duration_s(&self) -> f64 {
        2.0 * self.max_central_angle() / self.angular_velocity()
    }

    fn max_central_angle(&self) -> f64 {
        central_angle(self.altitude_km, self.min_elevation_deg, self.earth_radius_km)
    }
}

/// One fixed-distance slice of a pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassSegment {
    pub elevation_deg: f64,
    pub zenith_angle_deg: f64,
    pub slant_range_m: f64,
    pub slew_rate_rad_s: f64,
    pub duration_s: f64,
    pub weight: f64,
}

/// Earth-central angle between the station zenith and a satellite seen at
/// `elevation_deg`, radians.
fn central_angle(altitude_km: f64, elevation_deg: f64, radius_km: f64) -> f64 {
    let elev = elevation_deg.to_radians();
    let r = radius_km + altitude_km;
    (radius_km * elev.cos() / r).acos() - elev
}

fn check_elevation(altitude_km: f64, elevation_deg: f64) -> Result<()> {
    if !(altitude_km > 0.0) {
        return Err(Error::domain(format!("altitude must be positive, got {altitude_km} km")));
    }
    if !(elevation_deg > 0.0 && elevation_deg <= 90.0) {
        return Err(Error::domain(format!("elevation must lie in (0, 90] degrees, got {elevation_deg}")));
    }
    Ok(())
}

/// Line-of-sight distance from the station to the satellite, km.
pub fn slant_range(altitude_km: f64, elevation_deg: f64) -> Result<f64> {
    slant_range_with_radius(altitude_km, elevation_deg, EARTH_RADIUS_KM)
}

pub fn slant_range_with_radius(altitude_km: f64, elevation_deg: f64, radius_km: f64) -> Result<f64> {
    check_elevation(altitude_km, elevation_deg)?;
    if elevation_deg == 90.0 {
        return Ok(altitude_km);
    }
    let elev = elevation_deg.to_radians();
    let r = radius_km + altitude_km;
    let rc = radius_km * elev.cos();
    Ok((r * r - rc * rc).sqrt() - radius_km * elev.sin())
}

/// Apparent angular rate of the satellite as seen from the station, rad/s.
pub fn slew_rate(altitude_km: f64, elevation_deg: f64) -> Result<f64> {
    slew_rate_with_radius(altitude_km, elevation_deg, EARTH_RADIUS_KM)
}

pub fn slew_rate_with_radius(altitude_km: f64, elevation_deg: f64, radius_km: f64) -> Result<f64> {
    check_elevation(altitude_km, elevation_deg)?;
    let r = radius_km + altitude_km;
    let omega = (EARTH_GM_KM3_S2 / r.powi(3)).sqrt();
    let phi = central_angle(altitude_km, elevation_deg, radius_km);
    let range = slant_range_with_radius(altitude_km, elevation_deg, radius_km)?;
    // Velocity component transverse to the line of sight, divided by range.
    Ok(r * omega * (r - radius_km * phi.cos()) / (range * range))
}

fn elevation_from_central_angle(phi: f64, altitude_km: f64, radius_km: f64) -> f64 {
    let r = radius_km + altitude_km;
    let (s, c) = phi.sin_cos();
    (r * c - radius_km).atan2(r * s).to_degrees()
}

/// Splits the pass above `min_elevation` into `segment_count` slices of
/// equal duration, ordered in time.
pub fn segment_pass(cfg: &OrbitConfig) -> Result<Vec<PassSegment>> {
    cfg.validate()?;
    let n = cfg.segment_count;
    let omega = cfg.angular_velocity();
    let half = cfg.max_central_angle() / omega;
    let dt = 2.0 * half / n as f64;
    let weight = 1.0 / n as f64;

    // The pass is symmetric about zenith: evaluate the first half (and the
    // middle slice when n is odd) and mirror it.
    let first: Vec<PassSegment> = (0..n.div_ceil(2))
        .map(|i| {
            let t = -half + (i as f64 + 0.5) * dt;
            let phi = omega * t.abs();
            let elevation = elevation_from_central_angle(phi, cfg.altitude_km, cfg.earth_radius_km).min(90.0);
            let slant_km = slant_range_with_radius(cfg.altitude_km, elevation, cfg.earth_radius_km)?;
            Ok(PassSegment {
                elevation_deg: elevation,
                zenith_angle_deg: 90.0 - elevation,
                slant_range_m: slant_km * 1e3,
                slew_rate_rad_s: slew_rate_with_radius(cfg.altitude_km, elevation, cfg.earth_radius_km)?,
                duration_s: dt,
                weight,
            })
        })
        .collect::<Result<_>>()?;

    let mut segments = first.clone();
    let mirrored = n / 2;
    segments.extend(first.into_iter().take(mirrored).rev());
    Ok(segments)
}

/// Time-weighted mean slant range over the pass, m.
pub fn mean_slant_range_m(segments: &[PassSegment]) -> f64 {
    segments.iter().map(|s| s.weight * s.slant_range_m).sum()
}
