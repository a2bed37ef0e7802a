//! Residual phase error budget of a Zernike-mode adaptive-optics loop and
//! the resulting single-mode-fiber coupling statistics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::turbulence::IntegratedParams;

/// Piston-removed Kolmogorov phase variance coefficient.
const KOLMOGOROV_PHASE: f64 = 1.0299;

/// Residual variance coefficients after correcting the first J modes
/// (piston removed), for J = 1..=21.
const NOLL_RESIDUAL: [f64; 21] = [
    1.0299, 0.582, 0.134, 0.111, 0.0880, 0.0648, 0.0587, 0.0525, 0.0463, 0.0401, 0.0377, 0.0352, 0.0328, 0.0304,
    0.0279, 0.0267, 0.0255, 0.0243, 0.0232, 0.0220, 0.0208,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AoConfig {
    /// 0 disables correction, 1 is tip-tilt only.
    #[serde(default = "default_orders")]
    pub corrected_radial_orders: u32,
    #[serde(default = "default_sampling_frequency")]
    pub sampling_frequency_hz: f64,
    #[serde(default = "default_frame_delay")]
    pub frame_delay: u32,
    /// Set from the receiver configuration rather than read from the AO table.
    #[serde(skip, default = "default_aperture")]
    pub aperture_diameter_m: f64,
    #[serde(default = "default_ratio")]
    pub aperture_to_waist_ratio: f64,
    #[serde(default = "default_aliasing")]
    pub aliasing_fraction: f64,
    #[serde(default = "default_max_coupling")]
    pub max_coupling: f64,
    #[serde(default = "default_fluctuation")]
    pub fluctuation_coefficient: f64,
}

fn default_orders() -> u32 {
    15
}
fn default_sampling_frequency() -> f64 {
    5000.0
}
fn default_frame_delay() -> u32 {
    2
}
fn default_aperture() -> f64 {
    1.5
}
fn default_ratio() -> f64 {
    2.2
}
fn default_aliasing() -> f64 {
    0.35
}
fn default_max_coupling() -> f64 {
    0.81
}
fn default_fluctuation() -> f64 {
    0.05
}

impl Default for AoConfig {
    fn default() -> Self {
        AoConfig {
            corrected_radial_orders: 15,
            sampling_frequency_hz: default_sampling_frequency(),
            frame_delay: default_frame_delay(),
            aperture_diameter_m: default_aperture(),
            aperture_to_waist_ratio: default_ratio(),
            aliasing_fraction: default_aliasing(),
            max_coupling: default_max_coupling(),
            fluctuation_coefficient: default_fluctuation(),
        }
    }
}

impl AoConfig {
    pub fn with_orders(mut self, orders: u32) -> Self {
        self.corrected_radial_orders = orders;
        self
    }

    pub fn with_aperture(mut self, diameter_m: f64) -> Self {
        self.aperture_diameter_m = diameter_m;
        self
    }

    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.sampling_frequency_hz > 0.0) {
            out.push("ao: sampling_frequency must be positive".to_string());
        }
        if !(self.aperture_diameter_m > 0.0) {
            out.push("ao: aperture_diameter must be positive".to_string());
        }
        if !(self.aperture_to_waist_ratio > 0.0) {
            out.push("ao: aperture_to_waist_ratio must be positive".to_string());
        }
        if !(0.0..=1.0).contains(&self.max_coupling) {
            out.push(format!("ao: max_coupling must lie in [0, 1] (got {})", self.max_coupling));
        }
        if !(self.aliasing_fraction >= 0.0) {
            out.push("ao: aliasing_fraction must be non-negative".to_string());
        }
        if !(self.fluctuation_coefficient >= 0.0) {
            out.push("ao: fluctuation_coefficient must be non-negative".to_string());
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

    pub fn loop_lag_s(&self) -> f64 {
        self.frame_delay as f64 / self.sampling_frequency_hz
    }
}

/// Number of Zernike modes up to and including radial order `n`.
pub fn zernike_mode_count(radial_orders: u32) -> u64 {
    let n = radial_orders as u64;
    (n + 1) * (n + 2) / 2
}

pub fn turbulent_phase_variance(diameter_m: f64, r0_m: f64) -> f64 {
    KOLMOGOROV_PHASE * (diameter_m / r0_m).powf(5.0 / 3.0)
}

/// Residual coefficient after removing the first `modes` Zernike modes:
/// tabulated for small J, asymptotic law beyond.
pub fn residual_coefficient(modes: u64) -> f64 {
    match modes {
        0 => KOLMOGOROV_PHASE,
        1..=21 => NOLL_RESIDUAL[(modes - 1) as usize],
        j => 0.2944 * (j as f64).powf(-3f64.sqrt() / 2.0),
    }
}

pub fn fitting_error(diameter_m: f64, r0_m: f64, radial_orders: u32) -> f64 {
    if radial_orders == 0 {
        return turbulent_phase_variance(diameter_m, r0_m);
    }
    residual_coefficient(zernike_mode_count(radial_orders)) * (diameter_m / r0_m).powf(5.0 / 3.0)
}

/// Servo-lag phase variance for a loop delay of `frame_delay` frames.
pub fn temporal_error(tau0_s: f64, sampling_frequency_hz: f64, frame_delay: u32) -> f64 {
    let lag = frame_delay as f64 / sampling_frequency_hz;
    (lag / tau0_s).powf(5.0 / 3.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AoErrorBudget {
    pub turbulent_phase: f64,
    pub fitting: f64,
    pub aliasing: f64,
    pub temporal: f64,
    pub total_residual: f64,
}

pub fn error_budget(cfg: &AoConfig, params: &IntegratedParams) -> AoErrorBudget {
    let d = cfg.aperture_diameter_m;
    let turbulent = turbulent_phase_variance(d, params.r0_m);
    if cfg.corrected_radial_orders == 0 {
        return AoErrorBudget {
            turbulent_phase: turbulent,
            fitting: turbulent,
            aliasing: 0.0,
            temporal: 0.0,
            total_residual: turbulent,
        };
    }
    let fitting = fitting_error(d, params.r0_m, cfg.corrected_radial_orders);
    let aliasing = cfg.aliasing_fraction * fitting;
    // A loop too slow to follow the turbulence cannot make things worse
    // than leaving it open.
    let temporal = temporal_error(params.tau0_s, cfg.sampling_frequency_hz, cfg.frame_delay)
        .min((turbulent - fitting - aliasing).max(0.0));
    AoErrorBudget {
        turbulent_phase: turbulent,
        fitting,
        aliasing,
        temporal,
        total_residual: fitting + aliasing + temporal,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingStats {
    pub mean: f64,
    pub std_dev: f64,
}

pub fn coupling_stats(budget: &AoErrorBudget, sigma_chi2: f64, cfg: &AoConfig) -> CouplingStats {
    let mean = cfg.max_coupling * (-(budget.total_residual + 4.0 * sigma_chi2)).exp();
    let rel = (2.0 * budget.total_residual * cfg.fluctuation_coefficient + 4.0 * sigma_chi2).sqrt();
    if mean < 0.01 {
        log::warn!(
            "mean fiber coupling {mean:.2e} below 1%: residual {:.2} rad^2, AO ineffective",
            budget.total_residual
        );
    }
    CouplingStats { mean, std_dev: mean * rel }
}

/// Peak coupling of a uniformly illuminated circular pupil into a Gaussian
/// mode, for a given aperture-diameter to mode-waist ratio.
pub fn ideal_coupling(aperture_to_waist_ratio: f64) -> f64 {
    let beta = aperture_to_waist_ratio / 2.0;
    let b2 = beta * beta;
    2.0 * ((1.0 - (-b2).exp()) / beta).powi(2)
}

/// Externally supplied coupling statistics versus elevation.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingTable {
    rows: Vec<(f64, CouplingStats)>,
}

impl CouplingTable {
    pub fn new(mut rows: Vec<(f64, CouplingStats)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::domain("coupling table is empty"));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        if rows.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::domain("coupling table has duplicate elevations"));
        }
        for (e, s) in &rows {
            if !(0.0..=1.0).contains(&s.mean) || !(s.std_dev >= 0.0) {
                return Err(Error::domain(format!("coupling table row at {e} deg is out of range")));
            }
        }
        Ok(CouplingTable { rows })
    }

    /// Parses lines of `elevation_deg mean std`; `#` starts a comment.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { path: origin.to_path_buf(), line: lineno + 1, message };
            let nums: Vec<f64> = line
                .split_whitespace()
                .map(|f| f.parse::<f64>().map_err(|e| err(format!("{f:?}: {e}"))))
                .collect::<Result<_>>()?;
            if nums.len() != 3 {
                return Err(err(format!("expected 3 columns, found {}", nums.len())));
            }
            rows.push((nums[0], CouplingStats { mean: nums[1], std_dev: nums[2] }));
        }
        Self::new(rows)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    /// Linear interpolation in elevation, clamped at the table ends.
    pub fn at(&self, elevation_deg: f64) -> CouplingStats {
        let rows = &self.rows;
        let idx = rows.partition_point(|(e, _)| *e < elevation_deg);
        if idx == 0 {
            return rows[0].1;
        }
        if idx == rows.len() {
            return rows[rows.len() - 1].1;
        }
        let (e0, a) = rows[idx - 1];
        let (e1, b) = rows[idx];
        let t = (elevation_deg - e0) / (e1 - e0);
        CouplingStats { mean: a.mean + t * (b.mean - a.mean), std_dev: a.std_dev + t * (b.std_dev - a.std_dev) }
    }
}
