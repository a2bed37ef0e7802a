//! Decoy-state efficient BB84 (signal, weak decoy, vacuum): channel
//! expectations over a transmittance distribution, asymptotic and
//! finite-size key rates, background estimates and parameter optimization.

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::photon_energy;
use crate::error::{Error, Result};
use crate::pdte::{partition_groups, TransmittanceDistribution};

pub fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DvParams {
    pub mu: f64,
    pub nu: f64,
    pub p_mu: f64,
    pub p_nu: f64,
    pub q: f64,
    pub y0: f64,
    pub eta_d: f64,
    /// Receiver optics efficiency not already folded into the channel.
    pub eta_opt: f64,
    pub e_d: f64,
    pub e_0: f64,
    pub f_ec: f64,
    pub eps_sec: f64,
    pub eps_cor: f64,
    /// Total pulses sent.
    pub n_pulses: f64,
    pub rep_rate_hz: f64,
    pub dt_window_s: f64,
}

impl Default for DvParams {
    fn default() -> Self {
        DvParams {
            mu: 0.5,
            nu: 0.1,
            p_mu: 0.7,
            p_nu: 0.2,
            q: 0.9,
            y0: 1e-6,
            eta_d: 0.85,
            eta_opt: 1.0,
            e_d: 0.01,
            e_0: 0.5,
            f_ec: 1.16,
            eps_sec: 1e-10,
            eps_cor: 1e-10,
            n_pulses: 1e10,
            rep_rate_hz: 100e6,
            dt_window_s: 1e-9,
        }
    }
}

impl DvParams {
    pub fn p_vac(&self) -> f64 {
        1.0 - self.p_mu - self.p_nu
    }

    /// Violations of the protocol-parameter invariants.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.nu > 0.0 && self.nu < self.mu) {
            out.push(format!("dv: need 0 < nu < mu (nu={}, mu={})", self.nu, self.mu));
        }
        if !(self.p_mu > 0.0 && self.p_nu > 0.0 && self.p_mu + self.p_nu <= 1.0) {
            out.push("dv: need p_mu, p_nu > 0 and p_mu + p_nu <= 1".to_string());
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            out.push(format!("dv: q must lie in (0, 1] (got {})", self.q));
        }
        if !(0.0..1.0).contains(&self.y0) {
            out.push(format!("dv: y0 must lie in [0, 1) (got {})", self.y0));
        }
        if !(self.eta_d > 0.0 && self.eta_d <= 1.0) || !(self.eta_opt > 0.0 && self.eta_opt <= 1.0) {
            out.push("dv: efficiencies must lie in (0, 1]".to_string());
        }
        if !(0.0..=0.5).contains(&self.e_d) {
            out.push("dv: e_d must lie in [0, 0.5]".to_string());
        }
        if self.e_0 != 0.5 {
            out.push("dv: e_0 must be 0.5".to_string());
        }
        if !(self.f_ec >= 1.0) {
            out.push("dv: f_ec must be at least 1".to_string());
        }
        if !(self.eps_sec > 0.0 && self.eps_cor > 0.0) {
            out.push("dv: eps_sec and eps_cor must be positive".to_string());
        }
        if !(self.n_pulses >= 1.0) {
            out.push("dv: n_pulses must be at least 1".to_string());
        }
        if !(self.rep_rate_hz > 0.0 && self.dt_window_s > 0.0) {
            out.push("dv: rep_rate and dt_window must be positive".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.diagnostics();
        if d.is_empty() {
            Ok(())
        } else {
            Err(Error::Domain(d.join("; ")))
        }
    }

    fn with_protocol(&self, x: &Protocol) -> Self {
        DvParams { q: x.q, mu: x.mu, nu: x.nu, p_mu: x.p_mu, p_nu: x.p_nu, ..self.clone() }
    }
}

/// Channel expectations of gains and error-weighted gains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DvChannelMoments {
    pub q_mu: f64,
    pub q_nu: f64,
    pub q_0: f64,
    /// Single-photon contribution to the signal gain.
    pub q_mu1: f64,
    /// Vacuum contribution to the signal gain.
    pub q_mu0: f64,
    pub eq_mu: f64,
    pub eq_nu: f64,
    pub eq_0: f64,
    pub eq_mu1: f64,
}

impl DvChannelMoments {
    /// Pointwise values at channel efficiency `eta`.
    pub fn at(params: &DvParams, eta: f64) -> Self {
        let y0 = params.y0;
        let eta_s = params.eta_d * params.eta_opt * eta;
        let gain = |k: f64| -(-eta_s * k).exp_m1() + (-eta_s * k).exp() * y0;
        let err = |k: f64| params.e_0 * y0 - params.e_d * (-eta_s * k).exp_m1() * (1.0 - y0);
        let y1 = y0 + eta_s * (1.0 - y0);
        let e1y1 = params.e_0 * y0 + params.e_d * eta_s * (1.0 - y0);
        let p1 = params.mu * (-params.mu).exp();
        DvChannelMoments {
            q_mu: gain(params.mu),
            q_nu: gain(params.nu),
            q_0: y0,
            q_mu1: y1 * p1,
            q_mu0: y0 * (-params.mu).exp(),
            eq_mu: err(params.mu),
            eq_nu: err(params.nu),
            eq_0: params.e_0 * y0,
            eq_mu1: e1y1 * p1,
        }
    }

    /// Probability-weighted expectation over `(eta, probability)` points.
    pub fn expected(params: &DvParams, points: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut acc = DvChannelMoments::default();
        for (eta, p) in points {
            acc.add_scaled(&Self::at(params, eta), p);
        }
        acc
    }

    pub fn over(params: &DvParams, pdte: &TransmittanceDistribution) -> Self {
        Self::expected(params, pdte.support())
    }

    pub fn add_scaled(&mut self, other: &Self, w: f64) {
        self.q_mu += w * other.q_mu;
        self.q_nu += w * other.q_nu;
        self.q_0 += w * other.q_0;
        self.q_mu1 += w * other.q_mu1;
        self.q_mu0 += w * other.q_mu0;
        self.eq_mu += w * other.eq_mu;
        self.eq_nu += w * other.eq_nu;
        self.eq_0 += w * other.eq_0;
        self.eq_mu1 += w * other.eq_mu1;
    }

    fn gain(&self, k: Intensity) -> f64 {
        match k {
            Intensity::Signal => self.q_mu,
            Intensity::Decoy => self.q_nu,
            Intensity::Vacuum => self.q_0,
        }
    }

    fn errors(&self, k: Intensity) -> f64 {
        match k {
            Intensity::Signal => self.eq_mu,
            Intensity::Decoy => self.eq_nu,
            Intensity::Vacuum => self.eq_0,
        }
    }
}

/// Asymptotic key rate per pulse; negative values clamp to zero.
pub fn asymptotic_rate(params: &DvParams, m: &DvChannelMoments) -> f64 {
    let e_mu = if m.q_mu > 0.0 { m.eq_mu / m.q_mu } else { 0.0 };
    let e_1 = if m.q_mu1 > 0.0 { m.eq_mu1 / m.q_mu1 } else { 0.0 };
    let k = params.q * (m.q_mu0 + m.q_mu1 * (1.0 - binary_entropy(e_1)) - params.f_ec * m.q_mu * binary_entropy(e_mu));
    k.max(0.0)
}

/// Mass-weighted asymptotic rate of independently processed groups.
pub fn asymptotic_rate_grouped(params: &DvParams, groups: &[(f64, DvChannelMoments)]) -> f64 {
    groups.iter().map(|(w, m)| w * asymptotic_rate(params, m)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Intensity {
    Signal,
    Decoy,
    Vacuum,
}

const INTENSITIES: [Intensity; 3] = [Intensity::Signal, Intensity::Decoy, Intensity::Vacuum];

/// Intermediate quantities of the finite-size bound for one block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FiniteBlock {
    pub n_z: f64,
    pub s_z0: f64,
    pub s_z1: f64,
    pub s_x1: f64,
    pub phi_z: f64,
    pub lambda_ec: f64,
    /// Secret bits extracted; zero when any bound is infeasible.
    pub length: f64,
}

fn gamma(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let b = b.clamp(1e-12, 1.0 - 1e-12);
    let arg = (c + d) / (c * d * (1.0 - b) * b) * (21.0 * 21.0) / (a * a);
    let inner = (c + d) * (1.0 - b) * b / (c * d * std::f64::consts::LN_2) * arg.log2();
    inner.max(0.0).sqrt()
}

/// Finite-size secret length of one block of `n_block` pulses.
pub fn finite_block(params: &DvParams, m: &DvChannelMoments, n_block: f64) -> FiniteBlock {
    let (mu, nu) = (params.mu, params.nu);
    let prob = |k: Intensity| match k {
        Intensity::Signal => params.p_mu,
        Intensity::Decoy => params.p_nu,
        Intensity::Vacuum => params.p_vac(),
    };
    let photons = |k: Intensity| match k {
        Intensity::Signal => mu,
        Intensity::Decoy => nu,
        Intensity::Vacuum => 0.0,
    };
    // tau_n for n in {0, 1}, where n! = 1.
    let tau = |n: i32| -> f64 {
        INTENSITIES
            .iter()
            .map(|&k| {
                let x = photons(k);
                let pow = if n == 0 { 1.0 } else { x.powi(n) };
                (-x).exp() * pow * prob(k)
            })
            .sum::<f64>()
    };
    let (tau0, tau1) = (tau(0), tau(1));
    let ln_term = (21.0 / params.eps_sec).ln();

    // Expected event and error counts per basis and intensity.
    let counts =
        |qb: f64, f: &dyn Fn(Intensity) -> f64| -> [f64; 3] { INTENSITIES.map(|k| n_block * qb * qb * prob(k) * f(k)) };
    let bound = |counts: &[f64; 3], sign: f64| -> [f64; 3] {
        let total: f64 = counts.iter().sum();
        let delta = (total / 2.0 * ln_term).sqrt();
        let mut out = [0.0; 3];
        for (i, &k) in INTENSITIES.iter().enumerate() {
            out[i] = photons(k).exp() / prob(k) * (counts[i] + sign * delta);
        }
        out
    };
    let single_photon = |n: &[f64; 3]| -> (f64, f64) {
        let (lo, hi) = (bound(n, -1.0), bound(n, 1.0));
        let s0 = (tau0 * lo[2]).max(0.0);
        let s1 = tau1 * mu * (lo[1] - hi[2] - nu * nu / (mu * mu) * (hi[0] - s0 / tau0)) / (nu * (mu - nu));
        (s0, s1)
    };

    let qz = params.q;
    let qx = 1.0 - params.q;
    let n_zk = counts(qz, &|k| m.gain(k));
    let m_zk = counts(qz, &|k| m.errors(k));
    let n_xk = counts(qx, &|k| m.gain(k));
    let m_xk = counts(qx, &|k| m.errors(k));

    let n_z: f64 = n_zk.iter().sum();
    let (s_z0, s_z1) = single_photon(&n_zk);
    let (_, s_x1) = single_photon(&n_xk);
    let mut block = FiniteBlock { n_z, s_z0: s_z0.min(n_z), s_z1: s_z1.min(n_z), s_x1, ..Default::default() };
    if !(n_z > 0.0 && s_z1 > 0.0 && s_x1 > 0.0) {
        return block;
    }

    let m_hi = bound(&m_xk, 1.0);
    let m_lo = bound(&m_xk, -1.0);
    let v_x1 = (tau1 * (m_hi[1] - m_lo[2]) / nu).max(0.0);
    let ratio = v_x1 / s_x1;
    let phi = (ratio + gamma(params.eps_sec, ratio, s_x1, block.s_z1)).clamp(0.0, 0.5);
    block.phi_z = phi;

    let e_z = m_zk.iter().sum::<f64>() / n_z;
    block.lambda_ec = n_z * params.f_ec * binary_entropy(e_z);
    let l = block.s_z0 + block.s_z1 * (1.0 - binary_entropy(phi))
        - block.lambda_ec
        - 6.0 * (21.0 / params.eps_sec).log2()
        - (2.0 / params.eps_cor).log2();
    block.length = l.max(0.0);
    block
}

/// Finite-size key rate per pulse when each group is an independent block
/// receiving its share of the `n_pulses` pulses.
pub fn finite_rate(params: &DvParams, groups: &[(f64, DvChannelMoments)]) -> f64 {
    groups.iter().map(|(mass, m)| finite_block(params, m, params.n_pulses * mass).length).sum::<f64>() / params.n_pulses
}

/// Background count regimes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundMode {
    SkyDay,
    SkyNight,
    Glare,
}

impl BackgroundMode {
    pub fn name(&self) -> &'static str {
        match self {
            BackgroundMode::SkyDay => "sky_day",
            BackgroundMode::SkyNight => "sky_night",
            BackgroundMode::Glare => "glare",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundModel {
    /// Daytime sky spectral radiance, W m^-2 um^-1 sr^-1.
    #[serde(default = "default_radiance")]
    pub sky_radiance: f64,
    #[serde(default = "default_filter")]
    pub filter_bandwidth_nm: f64,
    /// Night-time count floor (detector dark counts), 1/s.
    #[serde(default = "default_night_rate")]
    pub night_rate_hz: f64,
    /// Reference glare measurement and the conditions it was taken in.
    #[serde(default = "default_glare_rate")]
    pub glare_reference_rate_hz: f64,
    #[serde(default = "default_glare_distance")]
    pub glare_reference_distance_km: f64,
    #[serde(default = "default_glare_target")]
    pub glare_distance_km: f64,
    #[serde(default = "default_glare_filter")]
    pub glare_reference_filter_nm: f64,
    #[serde(default = "default_glare_aperture")]
    pub glare_reference_aperture_m: f64,
    /// Solar spectral irradiance at the reference and operating wavelengths,
    /// W m^-2 nm^-1.
    #[serde(default = "default_irr_ref")]
    pub solar_irradiance_reference: f64,
    #[serde(default = "default_irr_op")]
    pub solar_irradiance_operating: f64,
}

fn default_radiance() -> f64 {
    0.3
}
fn default_filter() -> f64 {
    0.8
}
fn default_night_rate() -> f64 {
    200.0
}
fn default_glare_rate() -> f64 {
    1.9e3
}
fn default_glare_distance() -> f64 {
    20_000.0
}
fn default_glare_target() -> f64 {
    400.0
}
fn default_glare_filter() -> f64 {
    3.0
}
fn default_glare_aperture() -> f64 {
    1.5
}
fn default_irr_ref() -> f64 {
    1.86
}
fn default_irr_op() -> f64 {
    0.26
}

impl Default for BackgroundModel {
    fn default() -> Self {
        BackgroundModel {
            sky_radiance: default_radiance(),
            filter_bandwidth_nm: default_filter(),
            night_rate_hz: default_night_rate(),
            glare_reference_rate_hz: default_glare_rate(),
            glare_reference_distance_km: default_glare_distance(),
            glare_distance_km: default_glare_target(),
            glare_reference_filter_nm: default_glare_filter(),
            glare_reference_aperture_m: default_glare_aperture(),
            solar_irradiance_reference: default_irr_ref(),
            solar_irradiance_operating: default_irr_op(),
        }
    }
}

/// Receiver properties that enter the background estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Receiver {
    pub aperture_diameter_m: f64,
    pub wavelength_m: f64,
    pub eta_opt: f64,
    pub eta_d: f64,
}

/// Diffraction-limited solid angle seen by a single-mode fiber, sr.
pub fn fiber_field_of_view(wavelength_m: f64, aperture_diameter_m: f64) -> f64 {
    std::f64::consts::PI * (0.45 * wavelength_m / aperture_diameter_m).powi(2)
}

impl BackgroundModel {
    /// Background count rate, photons/s.
    pub fn rate(&self, mode: BackgroundMode, rx: &Receiver) -> f64 {
        match mode {
            BackgroundMode::SkyDay => {
                let area = std::f64::consts::PI * (rx.aperture_diameter_m / 2.0).powi(2);
                let radiance_per_nm = self.sky_radiance * 1e-3;
                radiance_per_nm
                    * fiber_field_of_view(rx.wavelength_m, rx.aperture_diameter_m)
                    * area
                    * self.filter_bandwidth_nm
                    / photon_energy(rx.wavelength_m)
                    * rx.eta_opt
                    * rx.eta_d
            }
            BackgroundMode::SkyNight => self.night_rate_hz,
            BackgroundMode::Glare => {
                self.glare_reference_rate_hz
                    * (self.glare_reference_distance_km / self.glare_distance_km).powi(2)
                    * (self.filter_bandwidth_nm / self.glare_reference_filter_nm)
                    * (self.solar_irradiance_operating / self.solar_irradiance_reference)
                    * (rx.aperture_diameter_m / self.glare_reference_aperture_m).powi(2)
            }
        }
    }

    /// Probability of a background click per detection window.
    pub fn yield_y0(&self, mode: BackgroundMode, rx: &Receiver, dt_window_s: f64) -> f64 {
        self.rate(mode, rx) * dt_window_s
    }
}

/// Free protocol parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub q: f64,
    pub mu: f64,
    pub nu: f64,
    pub p_mu: f64,
    pub p_nu: f64,
}

impl Protocol {
    pub fn of(p: &DvParams) -> Self {
        Protocol { q: p.q, mu: p.mu, nu: p.nu, p_mu: p.p_mu, p_nu: p.p_nu }
    }

    fn feasible(&self) -> bool {
        self.q > 0.0
            && self.q < 1.0
            && self.nu > 0.0
            && self.nu < self.mu
            && self.mu <= 1.0
            && self.nu <= 0.5
            && self.p_mu > 0.0
            && self.p_nu > 0.0
            && self.p_mu + self.p_nu < 1.0
    }

    fn key(&self) -> [f64; 5] {
        [self.q, self.mu, self.nu, self.p_mu, self.p_nu]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DvKeyResult {
    pub rate_asymptotic: f64,
    pub rate_finite: f64,
    /// Finite-size optimum.
    pub protocol: Protocol,
    pub groups: usize,
    pub asymptotic_mu: f64,
    pub asymptotic_groups: usize,
}

/// Group moments for a partition of `pdte` into `k` groups.
pub fn group_moments(
    params: &DvParams,
    pdte: &TransmittanceDistribution,
    k: usize,
) -> Result<Vec<(f64, DvChannelMoments)>> {
    Ok(partition_groups(pdte, k)?
        .iter()
        .map(|g| (g.probability_mass, DvChannelMoments::expected(params, g.points.iter().copied())))
        .collect())
}

struct FiniteObjective<'a> {
    template: &'a DvParams,
    groups: &'a [Vec<(f64, f64)>],
    masses: &'a [f64],
}

impl FiniteObjective<'_> {
    fn rate(&self, x: &Protocol) -> f64 {
        if !x.feasible() {
            return 0.0;
        }
        let p = self.template.with_protocol(x);
        self.groups
            .iter()
            .zip(self.masses)
            .map(|(pts, mass)| {
                let m = DvChannelMoments::expected(&p, pts.iter().copied());
                finite_block(&p, &m, p.n_pulses * mass).length
            })
            .sum::<f64>()
            / p.n_pulses
    }
}

fn decode(v: &[f64]) -> Protocol {
    Protocol { q: v[0], mu: v[1].exp(), nu: v[2].exp(), p_mu: v[3], p_nu: v[4] }
}

fn encode(p: &Protocol) -> Vec<f64> {
    vec![p.q, p.mu.ln(), p.nu.ln(), p.p_mu, p.p_nu]
}

impl CostFunction for FiniteObjective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, v: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let x = decode(v);
        if !x.feasible() {
            return Ok(1.0);
        }
        // Scaled so the simplex tolerances are meaningful at small rates.
        Ok(-self.rate(&x) * 1e6)
    }
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Coarse grid used to seed the local search.
pub fn coarse_grid() -> Vec<Protocol> {
    let qs = [0.5, 0.62, 0.74, 0.86, 0.98];
    let mus = log_space(0.1, 1.0, 5);
    let nus = log_space(0.01, 0.5, 5);
    let ps = [0.1, 0.3, 0.5, 0.7, 0.9];
    let mut out = Vec::new();
    for &q in &qs {
        for &mu in &mus {
            for &nu in &nus {
                for &p_mu in &ps {
                    for &p_nu in &ps {
                        let x = Protocol { q, mu, nu, p_mu, p_nu };
                        if x.feasible() {
                            out.push(x);
                        }
                    }
                }
            }
        }
    }
    out
}

fn better(a: (f64, [f64; 5]), b: (f64, [f64; 5])) -> (f64, [f64; 5]) {
    match a.0.total_cmp(&b.0) {
        std::cmp::Ordering::Greater => a,
        std::cmp::Ordering::Less => b,
        std::cmp::Ordering::Equal => {
            if a.1.iter().zip(&b.1).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne())
                == Some(std::cmp::Ordering::Greater)
            {
                b
            } else {
                a
            }
        }
    }
}

/// Maximizes the finite rate for a fixed group count.
pub fn optimize_finite(template: &DvParams, pdte: &TransmittanceDistribution, k: usize) -> Result<(f64, Protocol)> {
    let groups = partition_groups(pdte, k)?;
    let points: Vec<Vec<(f64, f64)>> = groups.iter().map(|g| g.points.clone()).collect();
    let masses: Vec<f64> = groups.iter().map(|g| g.probability_mass).collect();
    let obj = FiniteObjective { template, groups: &points, masses: &masses };

    let grid = coarse_grid();
    let (best_rate, best_key) =
        grid.par_iter().map(|x| (obj.rate(x), x.key())).reduce(|| (f64::NEG_INFINITY, [f64::INFINITY; 5]), better);
    let start = Protocol { q: best_key[0], mu: best_key[1], nu: best_key[2], p_mu: best_key[3], p_nu: best_key[4] };
    if !(best_rate > 0.0) {
        return Ok((0.0, start));
    }

    let x0 = encode(&start);
    // Steps point inward so the initial simplex stays mostly feasible.
    let steps = [-0.05, -0.3, 0.3, -0.05, -0.05];
    let mut simplex = vec![x0.clone()];
    for (i, s) in steps.iter().enumerate() {
        let mut v = x0.clone();
        v[i] += s;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-9).map_err(|e| Error::domain(e.to_string()))?;
    let refined = Executor::new(obj, solver)
        .configure(|s| s.max_iters(600))
        .run()
        .ok()
        .and_then(|r| r.state().best_param.clone());
    let obj = FiniteObjective { template, groups: &points, masses: &masses };
    if let Some(v) = refined {
        let x = decode(&v);
        let r = obj.rate(&x);
        if x.feasible() && r > best_rate {
            return Ok((r, x));
        }
    }
    Ok((best_rate, start))
}

/// Maximizes the asymptotic rate (q = 1) over the signal intensity.
pub fn optimize_asymptotic(template: &DvParams, pdte: &TransmittanceDistribution, k: usize) -> Result<(f64, f64)> {
    let groups = partition_groups(pdte, k)?;
    let rate = |mu: f64| -> f64 {
        let p = DvParams { q: 1.0, mu, nu: mu.min(template.nu).min(0.5 * mu), ..template.clone() };
        groups
            .iter()
            .map(|g| {
                g.probability_mass * asymptotic_rate(&p, &DvChannelMoments::expected(&p, g.points.iter().copied()))
            })
            .sum()
    };
    // Golden-section refinement around the best point of a log grid.
    let grid = log_space(0.01, 1.0, 41);
    let (mut best_mu, mut best) = (grid[0], rate(grid[0]));
    for &mu in &grid[1..] {
        let r = rate(mu);
        if r > best {
            best = r;
            best_mu = mu;
        }
    }
    let ratio = grid[1] / grid[0];
    let (mut a, mut b) = ((best_mu / ratio).ln(), (best_mu * ratio).min(1.0).ln());
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if rate(c.exp()) >= rate(d.exp()) {
            b = d;
        } else {
            a = c;
        }
    }
    let mu = (0.5 * (a + b)).exp();
    let r = rate(mu);
    if r > best {
        best = r;
        best_mu = mu;
    }
    Ok((best, best_mu))
}

/// Full optimization over protocol parameters and group count `1..=max_groups`.
pub fn optimize_dv(template: &DvParams, pdte: &TransmittanceDistribution, max_groups: usize) -> Result<DvKeyResult> {
    template.validate()?;
    if max_groups < 1 {
        return Err(Error::domain("max_groups must be at least 1"));
    }
    let mut result = DvKeyResult {
        rate_asymptotic: 0.0,
        rate_finite: 0.0,
        protocol: Protocol::of(template),
        groups: 1,
        asymptotic_mu: template.mu,
        asymptotic_groups: 1,
    };
    let mut best_finite = (f64::NEG_INFINITY, 0usize);
    for k in 1..=max_groups {
        let (rf, x) = optimize_finite(template, pdte, k)?;
        if rf > best_finite.0 {
            best_finite = (rf, k);
            result.rate_finite = rf;
            result.protocol = x;
            result.groups = k;
        }
        let (ra, mu) = optimize_asymptotic(template, pdte, k)?;
        if ra > result.rate_asymptotic {
            result.rate_asymptotic = ra;
            result.asymptotic_mu = mu;
            result.asymptotic_groups = k;
        }
    }
    Ok(result)
}
