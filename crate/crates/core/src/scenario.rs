//! Scenario files, sweep execution and result tables.
//!
//! A scenario is a TOML document. Every section is optional apart from
//! `[sweep]`, and at least one of `[dv]` or `[cv]` must be present:
//!
//! ```toml
//! [scenario]
//! name = "baseline"
//!
//! [sweep]
//! altitudes_km = [500.0]
//! ao_orders = [15]
//! profiles = ["../data/profiles/N1.txt", "builtin:D1"]
//! backgrounds = ["auto"]
//!
//! [dv]
//! [cv]
//! ```
//!
//! Profile paths are resolved relative to the scenario file. A `builtin:`
//! prefix selects one of the synthetic reference profiles instead.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptive_optics::{AoConfig, CouplingTable};
use crate::cv::{optimize_cv, CvParams};
use crate::dv::{optimize_dv, BackgroundMode, BackgroundModel, DvParams, Receiver};
use crate::error::{Error, Result};
use crate::link::{CommonParams, LinkModel, PassChannel};
use crate::orbit::OrbitConfig;
use crate::pdte::LogGrid;
use crate::turbulence::{reference_profile, TurbulenceProfile};

pub const BUILTIN_PREFIX: &str = "builtin:";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub name: String,
    /// Seed for anything sampled (Monte-Carlo PDTE exports).
    pub seed: u64,
    pub grid_points: usize,
    pub grid_min_db: f64,
    pub max_groups_dv: usize,
    pub max_groups_cv: usize,
    /// Optional `elevation mean std` table replacing the analytic coupling law.
    pub coupling_override: Option<PathBuf>,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            name: "scenario".to_string(),
            seed: 1,
            grid_points: 2048,
            grid_min_db: -80.0,
            max_groups_dv: 10,
            max_groups_cv: 12,
            coupling_override: None,
        }
    }
}

/// Orbit settings shared by every altitude of the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitSettings {
    pub min_elevation_deg: f64,
    pub earth_radius_km: f64,
    pub segment_count: usize,
}

impl Default for OrbitSettings {
    fn default() -> Self {
        let o = OrbitConfig::new(500.0);
        OrbitSettings {
            min_elevation_deg: o.min_elevation_deg,
            earth_radius_km: o.earth_radius_km,
            segment_count: o.segment_count,
        }
    }
}

impl OrbitSettings {
    pub fn at(&self, altitude_km: f64) -> OrbitConfig {
        OrbitConfig {
            altitude_km,
            min_elevation_deg: self.min_elevation_deg,
            earth_radius_km: self.earth_radius_km,
            segment_count: self.segment_count,
        }
    }
}

/// Background selection for DV rows. `Auto` picks sky_day or sky_night from
/// the profile label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundChoice {
    Auto,
    SkyDay,
    SkyNight,
    Glare,
}

impl BackgroundChoice {
    pub fn resolve(self, profile: &TurbulenceProfile) -> Option<BackgroundMode> {
        match self {
            BackgroundChoice::Auto => {
                profile.is_daytime().map(|day| if day { BackgroundMode::SkyDay } else { BackgroundMode::SkyNight })
            }
            BackgroundChoice::SkyDay => Some(BackgroundMode::SkyDay),
            BackgroundChoice::SkyNight => Some(BackgroundMode::SkyNight),
            BackgroundChoice::Glare => Some(BackgroundMode::Glare),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub altitudes_km: Vec<f64>,
    #[serde(default = "default_orders")]
    pub ao_orders: Vec<u32>,
    pub profiles: Vec<String>,
    #[serde(default)]
    pub telescope_diameters_m: Vec<f64>,
    #[serde(default = "default_backgrounds")]
    pub backgrounds: Vec<BackgroundChoice>,
    #[serde(default)]
    pub xi_fix: Vec<f64>,
}

fn default_orders() -> Vec<u32> {
    vec![15]
}

fn default_backgrounds() -> Vec<BackgroundChoice> {
    vec![BackgroundChoice::Auto]
}

/// Raw file contents before profiles are loaded.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    scenario: RunSettings,
    #[serde(default)]
    orbit: OrbitSettings,
    #[serde(default)]
    common: CommonParams,
    #[serde(default)]
    ao: AoConfig,
    #[serde(default)]
    background: BackgroundModel,
    dv: Option<DvParams>,
    cv: Option<CvParams>,
    sweep: Sweep,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub settings: RunSettings,
    pub orbit: OrbitSettings,
    pub common: CommonParams,
    pub ao: AoConfig,
    pub background: BackgroundModel,
    pub dv: Option<DvParams>,
    pub cv: Option<CvParams>,
    pub sweep: Sweep,
    pub profiles: Vec<TurbulenceProfile>,
    pub coupling_override: Option<CouplingTable>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Scenario {
    /// Parses and validates a scenario, reporting every problem found.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Same as [`Scenario::from_file`] with profile paths relative to `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let raw: ScenarioFile = toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        let mut issues = Vec::new();

        let mut profiles = Vec::new();
        for entry in &raw.sweep.profiles {
            let loaded = match entry.strip_prefix(BUILTIN_PREFIX) {
                Some(label) => reference_profile(label),
                None => {
                    let p = resolve(base, Path::new(entry));
                    if p.is_file() {
                        TurbulenceProfile::from_file(&p)
                    } else {
                        Err(Error::Config(vec![format!("profile file not found: {}", p.display())]))
                    }
                }
            };
            match loaded {
                Ok(p) => profiles.push(p),
                Err(Error::Config(v)) => issues.extend(v),
                Err(e) => issues.push(format!("profile {entry}: {e}")),
            }
        }

        let coupling_override = match &raw.scenario.coupling_override {
            Some(p) => {
                let p = resolve(base, p);
                match CouplingTable::from_file(&p) {
                    Ok(t) => Some(t),
                    Err(e) => {
                        issues.push(format!("coupling override {}: {e}", p.display()));
                        None
                    }
                }
            }
            None => None,
        };

        let s = &raw.scenario;
        if s.grid_points < 2 {
            issues.push("scenario: grid_points must be at least 2".to_string());
        }
        if !(s.grid_min_db < 0.0) {
            issues.push("scenario: grid_min_db must be negative".to_string());
        }
        if s.max_groups_dv < 1 || s.max_groups_cv < 1 {
            issues.push("scenario: group limits must be at least 1".to_string());
        }

        let sw = &raw.sweep;
        for (name, empty) in [
            ("altitudes_km", sw.altitudes_km.is_empty()),
            ("ao_orders", sw.ao_orders.is_empty()),
            ("profiles", sw.profiles.is_empty()),
            ("backgrounds", sw.backgrounds.is_empty()),
        ] {
            if empty {
                issues.push(format!("sweep: {name} must not be empty"));
            }
        }
        for &h in &sw.altitudes_km {
            issues.extend(raw.orbit.at(h).diagnostics());
        }
        for &d in &sw.telescope_diameters_m {
            if !(d > 0.0) {
                issues.push(format!("sweep: telescope diameter must be positive (got {d})"));
            }
        }
        issues.extend(raw.common.diagnostics());
        issues.extend(raw.ao.diagnostics());

        if raw.dv.is_none() && raw.cv.is_none() {
            issues.push("at least one of [dv] or [cv] must be present".to_string());
        }
        if let Some(dv) = &raw.dv {
            issues.extend(dv.diagnostics());
            if sw.backgrounds.contains(&BackgroundChoice::Auto) {
                for p in profiles.iter().filter(|p| p.is_daytime().is_none()) {
                    issues.push(format!(
                        "sweep: background \"auto\" needs a profile label starting with D or N (got {})",
                        p.label()
                    ));
                }
            }
        }
        if let Some(cv) = &raw.cv {
            issues.extend(cv.diagnostics());
            for &x in &sw.xi_fix {
                if !(x >= 0.0) {
                    issues.push(format!("sweep: xi_fix must be non-negative (got {x})"));
                }
            }
        }

        if !issues.is_empty() {
            return Err(Error::Config(issues));
        }
        Ok(Scenario {
            settings: raw.scenario,
            orbit: raw.orbit,
            common: raw.common,
            ao: raw.ao,
            background: raw.background,
            dv: raw.dv,
            cv: raw.cv,
            sweep: raw.sweep,
            profiles,
            coupling_override,
        })
    }

    pub fn grid(&self) -> Result<LogGrid> {
        LogGrid::new(self.settings.grid_points, self.settings.grid_min_db)
    }

    fn diameters(&self) -> Vec<f64> {
        if self.sweep.telescope_diameters_m.is_empty() {
            vec![self.common.receiver_diameter_m]
        } else {
            self.sweep.telescope_diameters_m.clone()
        }
    }

    /// Channel points in sweep order: profile, diameter, AO orders, altitude.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for (pi, profile) in self.profiles.iter().enumerate() {
            for d in self.diameters() {
                for &orders in &self.sweep.ao_orders {
                    for &h in &self.sweep.altitudes_km {
                        out.push(SweepPoint {
                            index: out.len(),
                            profile_index: pi,
                            profile: profile.label().to_string(),
                            altitude_km: h,
                            ao_orders: orders,
                            diameter_m: d,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn common_for(&self, point: &SweepPoint) -> CommonParams {
        CommonParams { receiver_diameter_m: point.diameter_m, ..self.common.clone() }
    }

    pub fn pass_channel(&self, point: &SweepPoint) -> Result<PassChannel> {
        let orbit = self.orbit.at(point.altitude_km);
        let ao = self.ao.clone().with_orders(point.ao_orders);
        let common = self.common_for(point);
        LinkModel {
            orbit: &orbit,
            profile: &self.profiles[point.profile_index],
            ao: &ao,
            common: &common,
            coupling_override: self.coupling_override.as_ref(),
            grid: self.grid()?,
        }
        .pass_channel()
    }

    fn xi_values(&self, cv: &CvParams) -> Vec<f64> {
        if self.sweep.xi_fix.is_empty() {
            vec![cv.xi_fix]
        } else {
            self.sweep.xi_fix.clone()
        }
    }

    fn evaluate(&self, point: &SweepPoint) -> PointResult {
        let channel = match self.pass_channel(point) {
            Ok(c) => c,
            Err(e) => return PointResult::failed(self, point, &e.to_string()),
        };
        let common = self.common_for(point);
        let profile = &self.profiles[point.profile_index];
        let mut dv_rows = Vec::new();
        if let Some(dv) = &self.dv {
            for &choice in &self.sweep.backgrounds {
                let mode = choice.resolve(profile).unwrap_or(BackgroundMode::SkyDay);
                let rx = Receiver {
                    aperture_diameter_m: point.diameter_m,
                    wavelength_m: common.wavelength_m,
                    eta_opt: common.eta_opt(),
                    eta_d: dv.eta_d,
                };
                let template = DvParams {
                    y0: self.background.yield_y0(mode, &rx, dv.dt_window_s),
                    rep_rate_hz: common.symbol_rate_hz,
                    n_pulses: common.symbol_rate_hz * channel.duration_s,
                    ..dv.clone()
                };
                dv_rows.push(match optimize_dv(&template, &channel.pdte, self.settings.max_groups_dv) {
                    Ok(r) => DvRow {
                        point: point.index,
                        profile: point.profile.clone(),
                        altitude_km: point.altitude_km,
                        ao_orders: point.ao_orders,
                        diameter_m: point.diameter_m,
                        background: mode.name().to_string(),
                        y0: template.y0,
                        n_pulses: template.n_pulses,
                        k_asymptotic: r.rate_asymptotic,
                        k_finite: r.rate_finite,
                        key_bits_finite: r.rate_finite * template.n_pulses,
                        mu: r.protocol.mu,
                        nu: r.protocol.nu,
                        p_mu: r.protocol.p_mu,
                        p_nu: r.protocol.p_nu,
                        q: r.protocol.q,
                        k_opt: r.groups,
                        mu_asymptotic: r.asymptotic_mu,
                        k_opt_asymptotic: r.asymptotic_groups,
                        status: "ok".to_string(),
                    },
                    Err(e) => DvRow::failed(point, mode.name(), &e.to_string()),
                });
            }
        }
        let mut cv_rows = Vec::new();
        if let Some(cv) = &self.cv {
            for xi in self.xi_values(cv) {
                let template = CvParams {
                    xi_fix: xi,
                    symbol_rate_hz: common.symbol_rate_hz,
                    wavelength_m: common.wavelength_m,
                    n_symbols: common.symbol_rate_hz * channel.duration_s,
                    ..cv.clone()
                };
                cv_rows.push(match optimize_cv(&template, &channel.pdte, self.settings.max_groups_cv) {
                    Ok(r) => CvRow {
                        point: point.index,
                        profile: point.profile.clone(),
                        altitude_km: point.altitude_km,
                        ao_orders: point.ao_orders,
                        diameter_m: point.diameter_m,
                        xi_fix: xi,
                        n_symbols: template.n_symbols,
                        k_asymptotic: r.rate_asymptotic,
                        k_finite: r.rate_finite,
                        key_bits_finite: r.rate_finite * template.n_symbols,
                        v_a_opt: r.v_a,
                        k_opt: r.groups,
                        v_a_asymptotic: r.asymptotic_v_a,
                        k_opt_asymptotic: r.asymptotic_groups,
                        status: "ok".to_string(),
                    },
                    Err(e) => CvRow::failed(point, xi, &e.to_string()),
                });
            }
        }
        PointResult { channel: ChannelRow::from_channel(point, &channel), dv: dv_rows, cv: cv_rows }
    }

    /// Evaluates every sweep point. Rows come back in sweep order whatever the
    /// thread count.
    pub fn run(&self) -> RunResults {
        let points = self.points();
        info!("{}: {} sweep points", self.settings.name, points.len());
        let results: Vec<PointResult> = points.par_iter().map(|p| self.evaluate(p)).collect();
        let mut out = RunResults::default();
        for r in results {
            out.channel.push(r.channel);
            out.dv.extend(r.dv);
            out.cv.extend(r.cv);
        }
        let failed = out.failures();
        if failed > 0 {
            warn!("{failed} rows failed; see the status column");
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub profile_index: usize,
    pub profile: String,
    pub altitude_km: f64,
    pub ao_orders: u32,
    pub diameter_m: f64,
}

impl fmt::Display for SweepPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} h={} km orders={} D={} m", self.profile, self.altitude_km, self.ao_orders, self.diameter_m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelRow {
    pub point: usize,
    pub profile: String,
    pub altitude_km: f64,
    pub ao_orders: u32,
    pub diameter_m: f64,
    pub pass_duration_s: f64,
    pub mean_attenuation_db: f64,
    pub mean_transmittance: f64,
    pub mean_coupling: f64,
    pub mean_geometric: f64,
    pub mean_t: f64,
    pub var_t: f64,
    pub status: String,
}

impl ChannelRow {
    fn from_channel(p: &SweepPoint, c: &PassChannel) -> Self {
        ChannelRow {
            point: p.index,
            profile: p.profile.clone(),
            altitude_km: p.altitude_km,
            ao_orders: p.ao_orders,
            diameter_m: p.diameter_m,
            pass_duration_s: c.duration_s,
            mean_attenuation_db: c.pdte.mean_attenuation_db(),
            mean_transmittance: c.pdte.mean(),
            mean_coupling: c.mean_coupling(),
            mean_geometric: c.mean_geometric(),
            mean_t: c.pdte.mean_t(),
            var_t: c.pdte.var_t(),
            status: "ok".to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DvRow {
    pub point: usize,
    pub profile: String,
    pub altitude_km: f64,
    pub ao_orders: u32,
    pub diameter_m: f64,
    pub background: String,
    pub y0: f64,
    pub n_pulses: f64,
    pub k_asymptotic: f64,
    pub k_finite: f64,
    pub key_bits_finite: f64,
    pub mu: f64,
    pub nu: f64,
    pub p_mu: f64,
    pub p_nu: f64,
    pub q: f64,
    pub k_opt: usize,
    pub mu_asymptotic: f64,
    pub k_opt_asymptotic: usize,
    pub status: String,
}

impl DvRow {
    fn failed(p: &SweepPoint, background: &str, status: &str) -> Self {
        DvRow {
            point: p.index,
            profile: p.profile.clone(),
            altitude_km: p.altitude_km,
            ao_orders: p.ao_orders,
            diameter_m: p.diameter_m,
            background: background.to_string(),
            y0: f64::NAN,
            n_pulses: f64::NAN,
            k_asymptotic: f64::NAN,
            k_finite: f64::NAN,
            key_bits_finite: f64::NAN,
            mu: f64::NAN,
            nu: f64::NAN,
            p_mu: f64::NAN,
            p_nu: f64::NAN,
            q: f64::NAN,
            k_opt: 0,
            mu_asymptotic: f64::NAN,
            k_opt_asymptotic: 0,
            status: status.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub point: usize,
    pub profile: String,
    pub altitude_km: f64,
    pub ao_orders: u32,
    pub diameter_m: f64,
    pub xi_fix: f64,
    pub n_symbols: f64,
    pub k_asymptotic: f64,
    pub k_finite: f64,
    pub key_bits_finite: f64,
    pub v_a_opt: f64,
    pub k_opt: usize,
    pub v_a_asymptotic: f64,
    pub k_opt_asymptotic: usize,
    pub status: String,
}

impl CvRow {
    fn failed(p: &SweepPoint, xi: f64, status: &str) -> Self {
        CvRow {
            point: p.index,
            profile: p.profile.clone(),
            altitude_km: p.altitude_km,
            ao_orders: p.ao_orders,
            diameter_m: p.diameter_m,
            xi_fix: xi,
            n_symbols: f64::NAN,
            k_asymptotic: f64::NAN,
            k_finite: f64::NAN,
            key_bits_finite: f64::NAN,
            v_a_opt: f64::NAN,
            k_opt: 0,
            v_a_asymptotic: f64::NAN,
            k_opt_asymptotic: 0,
            status: status.to_string(),
        }
    }
}

struct PointResult {
    channel: ChannelRow,
    dv: Vec<DvRow>,
    cv: Vec<CvRow>,
}

impl PointResult {
    fn failed(s: &Scenario, p: &SweepPoint, status: &str) -> Self {
        let nan = f64::NAN;
        let channel = ChannelRow {
            point: p.index,
            profile: p.profile.clone(),
            altitude_km: p.altitude_km,
            ao_orders: p.ao_orders,
            diameter_m: p.diameter_m,
            pass_duration_s: nan,
            mean_attenuation_db: nan,
            mean_transmittance: nan,
            mean_coupling: nan,
            mean_geometric: nan,
            mean_t: nan,
            var_t: nan,
            status: status.to_string(),
        };
        let profile = &s.profiles[p.profile_index];
        let dv = match &s.dv {
            Some(_) => s
                .sweep
                .backgrounds
                .iter()
                .map(|b| {
                    let name = b.resolve(profile).map(|m| m.name()).unwrap_or("auto");
                    DvRow::failed(p, name, status)
                })
                .collect(),
            None => Vec::new(),
        };
        let cv = match &s.cv {
            Some(cv) => s.xi_values(cv).into_iter().map(|x| CvRow::failed(p, x, status)).collect(),
            None => Vec::new(),
        };
        PointResult { channel, dv, cv }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunResults {
    pub channel: Vec<ChannelRow>,
    pub dv: Vec<DvRow>,
    pub cv: Vec<CvRow>,
}

pub const CHANNEL_FILE: &str = "channel.csv";
pub const DV_FILE: &str = "dv.csv";
pub const CV_FILE: &str = "cv.csv";

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

impl RunResults {
    pub fn failures(&self) -> usize {
        let bad = |s: &str| s != "ok";
        self.channel.iter().filter(|r| bad(&r.status)).count()
            + self.dv.iter().filter(|r| bad(&r.status)).count()
            + self.cv.iter().filter(|r| bad(&r.status)).count()
    }

    /// Writes `channel.csv` plus `dv.csv` and `cv.csv` when those protocols ran.
    /// Returns the files written.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let path = dir.join(CHANNEL_FILE);
        write_rows(&path, &self.channel)?;
        written.push(path);
        if !self.dv.is_empty() {
            let path = dir.join(DV_FILE);
            write_rows(&path, &self.dv)?;
            written.push(path);
        }
        if !self.cv.is_empty() {
            let path = dir.join(CV_FILE);
            write_rows(&path, &self.cv)?;
            written.push(path);
        }
        Ok(written)
    }
}
