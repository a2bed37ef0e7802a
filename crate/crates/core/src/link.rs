//! Assembles the transmittance distribution of a full pass: orbit segments,
//! turbulence along each line of sight, AO-corrected fiber coupling,
//! beam-wander geometric loss and atmospheric extinction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptive_optics::{coupling_stats, error_budget, AoConfig, AoErrorBudget, CouplingStats, CouplingTable};
use crate::constants::db_to_transmission;
use crate::error::{Error, Result};
use crate::orbit::{segment_pass, OrbitConfig, PassSegment};
use crate::pdte::{
    atmospheric_transmittance, coupling_distribution, geometric_pdte, merge_pass, segment_pdte, GeometricLossParams,
    LogGrid, TransmittanceDistribution,
};
use crate::turbulence::{integrated_params, IntegratedParams, TurbulenceProfile};

/// Transmitter, receiver and atmosphere parameters shared by both protocols.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommonParams {
    #[serde(default = "default_wavelength")]
    pub wavelength_m: f64,
    #[serde(default = "default_pointing")]
    pub pointing_std_rad: f64,
    #[serde(default = "default_divergence")]
    pub divergence_rad: f64,
    /// Fixed receiver optics loss, dB.
    #[serde(default = "default_fixed_loss")]
    pub fixed_loss_db: f64,
    #[serde(default = "default_tau_zen")]
    pub tau_zen: f64,
    #[serde(default = "default_symbol_rate")]
    pub symbol_rate_hz: f64,
    #[serde(default = "default_diameter")]
    pub receiver_diameter_m: f64,
}

fn default_wavelength() -> f64 {
    1550e-9
}
fn default_pointing() -> f64 {
    1e-6
}
fn default_divergence() -> f64 {
    10e-6
}
fn default_fixed_loss() -> f64 {
    2.8
}
fn default_tau_zen() -> f64 {
    0.91
}
fn default_symbol_rate() -> f64 {
    100e6
}
fn default_diameter() -> f64 {
    1.5
}

impl Default for CommonParams {
    fn default() -> Self {
        CommonParams {
            wavelength_m: default_wavelength(),
            pointing_std_rad: default_pointing(),
            divergence_rad: default_divergence(),
            fixed_loss_db: default_fixed_loss(),
            tau_zen: default_tau_zen(),
            symbol_rate_hz: default_symbol_rate(),
            receiver_diameter_m: default_diameter(),
        }
    }
}

impl CommonParams {
    pub fn eta_opt(&self) -> f64 {
        db_to_transmission(self.fixed_loss_db)
    }

    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        let positive = [
            ("wavelength", self.wavelength_m),
            ("pointing_std", self.pointing_std_rad),
            ("divergence", self.divergence_rad),
            ("symbol_rate", self.symbol_rate_hz),
            ("receiver_diameter", self.receiver_diameter_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                out.push(format!("common: {name} must be positive (got {v})"));
            }
        }
        if !(self.fixed_loss_db >= 0.0) {
            out.push("common: fixed_loss_db must be non-negative".to_string());
        }
        if !(self.tau_zen > 0.0 && self.tau_zen <= 1.0) {
            out.push(format!("common: tau_zen must lie in (0, 1] (got {})", self.tau_zen));
        }
        out
    }
}

/// Everything computed for one pass segment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SegmentChannel {
    pub segment: PassSegment,
    pub turbulence: IntegratedParams,
    pub budget: AoErrorBudget,
    pub coupling: CouplingStats,
    pub tau_atm: f64,
    pub geometric_mean: f64,
    pub mean_transmittance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PassChannel {
    pub segments: Vec<SegmentChannel>,
    pub pdte: TransmittanceDistribution,
    pub duration_s: f64,
}

impl PassChannel {
    /// Time-averaged mean fiber coupling over the pass.
    pub fn mean_coupling(&self) -> f64 {
        self.segments.iter().map(|s| s.segment.weight * s.coupling.mean).sum()
    }

    /// Time-averaged geometric transmittance over the pass.
    pub fn mean_geometric(&self) -> f64 {
        self.segments.iter().map(|s| s.segment.weight * s.geometric_mean).sum()
    }
}

pub struct LinkModel<'a> {
    pub orbit: &'a OrbitConfig,
    pub profile: &'a TurbulenceProfile,
    pub ao: &'a AoConfig,
    pub common: &'a CommonParams,
    pub coupling_override: Option<&'a CouplingTable>,
    pub grid: LogGrid,
}

impl LinkModel<'_> {
    fn ao(&self) -> AoConfig {
        self.ao.clone().with_aperture(self.common.receiver_diameter_m)
    }

    fn segment(&self, seg: &PassSegment) -> Result<(SegmentChannel, TransmittanceDistribution)> {
        let ao = self.ao();
        let turbulence =
            integrated_params(self.profile, seg.elevation_deg, self.common.wavelength_m, seg.slew_rate_rad_s)?;
        let budget = error_budget(&ao, &turbulence);
        let coupling = match self.coupling_override {
            Some(table) => table.at(seg.elevation_deg),
            None => coupling_stats(&budget, turbulence.sigma_chi2, &ao),
        };
        let geo = geometric_pdte(
            &GeometricLossParams {
                divergence_rad: self.common.divergence_rad,
                pointing_std_rad: self.common.pointing_std_rad,
                aperture_radius_m: self.common.receiver_diameter_m / 2.0,
                slant_range_m: seg.slant_range_m,
            },
            &self.grid,
        )?;
        let coupling_pdte = coupling_distribution(&coupling, ao.max_coupling.max(coupling.mean).min(1.0), &self.grid)?;
        let tau_atm = atmospheric_transmittance(self.common.tau_zen, seg.zenith_angle_deg)?;
        let pdte = segment_pdte(&geo, &coupling_pdte, tau_atm, self.common.eta_opt())?;
        Ok((
            SegmentChannel {
                segment: seg.clone(),
                turbulence,
                budget,
                coupling,
                tau_atm,
                geometric_mean: geo.mean(),
                mean_transmittance: pdte.mean(),
            },
            pdte,
        ))
    }

    /// Builds every segment and merges them into the pass distribution.
    pub fn pass_channel(&self) -> Result<PassChannel> {
        let mut issues = self.common.diagnostics();
        issues.extend(self.ao().diagnostics());
        if !issues.is_empty() {
            return Err(Error::Domain(issues.join("; ")));
        }
        let segments = segment_pass(self.orbit)?;
        let built: Vec<(SegmentChannel, TransmittanceDistribution)> =
            segments.par_iter().map(|s| self.segment(s)).collect::<Result<_>>()?;
        let parts: Vec<(f64, TransmittanceDistribution)> =
            built.iter().map(|(c, p)| (c.segment.weight, p.clone())).collect();
        let pdte = merge_pass(&parts)?;
        Ok(PassChannel {
            segments: built.into_iter().map(|(c, _)| c).collect(),
            pdte,
            duration_s: self.orbit.pass_duration_s(),
        })
    }
}
