//! Gaussian-modulated coherent-state CV-QKD with heterodyne detection and a
//! trusted (calibrated) detector: mutual information, Holevo bound, excess
//! noise budget and finite-size parameter-estimation bounds.

use argmin::core::{CostFunction, Executor};
use argmin::solver::brent::BrentOpt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::photon_energy;
use crate::error::{Error, Result};
use crate::pdte::{partition_groups, TransmittanceDistribution};
use crate::special::erf_inv;

/// Tolerance below 1 accepted for symplectic eigenvalues (round-off).
const PHYSICAL_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvParams {
    /// Modulation variance, SNU.
    pub v_a: f64,
    pub beta: f64,
    /// Detector efficiency.
    pub eta: f64,
    /// Electronic noise, SNU.
    pub v_el: f64,
    /// Fixed excess noise referred to the channel input, SNU.
    pub xi_fix: f64,
    pub pilot_energy_j: f64,
    pub pilot_bandwidth_hz: f64,
    pub symbol_rate_hz: f64,
    pub wavelength_m: f64,
    pub eps_pe: f64,
    /// Total symbols sent.
    pub n_symbols: f64,
}

impl Default for CvParams {
    fn default() -> Self {
        CvParams {
            v_a: 5.0,
            beta: 0.95,
            eta: 0.4,
            v_el: 0.1,
            xi_fix: 0.01,
            pilot_energy_j: 10e-12,
            pilot_bandwidth_hz: 10e3,
            symbol_rate_hz: 100e6,
            wavelength_m: 1550e-9,
            eps_pe: 1e-10,
            n_symbols: 1e10,
        }
    }
}

impl CvParams {
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.v_a > 0.0) {
            out.push("cv: v_a must be positive".to_string());
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            out.push("cv: beta must lie in (0, 1]".to_string());
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            out.push("cv: eta must lie in (0, 1]".to_string());
        }
        if !(self.v_el >= 0.0 && self.xi_fix >= 0.0) {
            out.push("cv: v_el and xi_fix must be non-negative".to_string());
        }
        if !(self.pilot_energy_j > 0.0 && self.pilot_bandwidth_hz >= 0.0 && self.symbol_rate_hz > 0.0) {
            out.push("cv: pilot energy and symbol rate must be positive".to_string());
        }
        if !(self.eps_pe > 0.0 && self.eps_pe < 1.0) {
            out.push("cv: eps_pe must lie in (0, 1)".to_string());
        }
        if !(self.n_symbols >= 1.0) {
            out.push("cv: n_symbols must be at least 1".to_string());
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

    /// Confidence coefficient of the parameter-estimation bounds.
    pub fn z_eps(&self) -> f64 {
        std::f64::consts::SQRT_2 * erf_inv(1.0 - self.eps_pe)
    }

    pub fn pilot_photons(&self) -> f64 {
        self.pilot_energy_j / photon_energy(self.wavelength_m)
    }

    /// Trusted heterodyne detection noise referred to Bob's input, SNU.
    pub fn chi_het(&self) -> f64 {
        (2.0 - self.eta + 2.0 * self.v_el) / self.eta
    }
}

/// Von Neumann entropy of a thermal mode with symplectic eigenvalue `nu`.
pub fn g(nu: f64) -> f64 {
    if nu <= 1.0 {
        return 0.0;
    }
    let a = (nu + 1.0) / 2.0;
    let b = (nu - 1.0) / 2.0;
    a * a.log2() - b * b.log2()
}

pub fn mutual_information(v_a: f64, tau: f64, sigma2: f64, beta: f64) -> f64 {
    beta * (tau * v_a / sigma2).ln_1p() / std::f64::consts::LN_2
}

/// Fading contribution to the excess noise.
pub fn fading_noise(var_t: f64, mean_t: f64, v_a: f64) -> f64 {
    if var_t == 0.0 {
        return 0.0;
    }
    var_t / (mean_t * mean_t) * v_a
}

/// Phase-recovery noise from pilot shot noise and laser drift.
pub fn pilot_phase_noise(params: &CvParams, mean_t: f64) -> f64 {
    let estimation = 1.0 / (params.eta * mean_t * mean_t * params.pilot_photons());
    let drift = 2.0 * std::f64::consts::PI * params.pilot_bandwidth_hz / params.symbol_rate_hz;
    params.v_a * (estimation + drift)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvChannelStats {
    pub mean_t: f64,
    pub var_t: f64,
    pub xi_total: f64,
    pub sigma2: f64,
}

impl CvChannelStats {
    pub fn new(params: &CvParams, mean_t: f64, var_t: f64) -> Self {
        let xi_total = params.xi_fix + fading_noise(var_t, mean_t, params.v_a) + pilot_phase_noise(params, mean_t);
        let tau = mean_t * mean_t;
        CvChannelStats { mean_t, var_t, xi_total, sigma2: 1.0 + tau * xi_total + params.chi_het() }
    }

    pub fn tau(&self) -> f64 {
        self.mean_t * self.mean_t
    }
}

/// Symplectic eigenvalues: the two of the joint Alice-Bob state followed by
/// the two of Alice's state conditioned on Bob's heterodyne outcome.
pub fn symplectic_eigenvalues(v_a: f64, tau: f64, xi: f64, eta: f64, v_el: f64) -> Result<[f64; 4]> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::domain(format!("transmittance {tau} outside (0, 1]")));
    }
    let v = v_a + 1.0;
    let chi_line = 1.0 / tau - 1.0 + xi;
    let chi_het = (2.0 - eta + 2.0 * v_el) / eta;
    let chi_tot = chi_line + chi_het / tau;

    let a = v * v * (1.0 - 2.0 * tau) + 2.0 * tau + tau * tau * (v + chi_line).powi(2);
    let b = tau * tau * (v * chi_line + 1.0).powi(2);
    let disc_ab = (a * a - 4.0 * b).max(0.0).sqrt();
    let l1 = (0.5 * (a + disc_ab)).sqrt();
    let l2 = (0.5 * (a - disc_ab)).max(0.0).sqrt();

    let den = (tau * (v + chi_tot)).powi(2);
    let c = (a * chi_het * chi_het
        + b
        + 1.0
        + 2.0 * chi_het * (v * b.sqrt() + tau * (v + chi_line))
        + 2.0 * tau * (v * v - 1.0))
        / den;
    let d = ((v + b.sqrt() * chi_het) / (tau * (v + chi_tot))).powi(2);
    let disc_cd = (c * c - 4.0 * d).max(0.0).sqrt();
    let l3 = (0.5 * (c + disc_cd)).sqrt();
    let l4 = (0.5 * (c - disc_cd)).max(0.0).sqrt();

    let names = ["nu1", "nu2", "nu3", "nu4"];
    let out = [l1, l2, l3, l4];
    for (name, &value) in names.iter().zip(&out) {
        if !(value >= 1.0 - PHYSICAL_TOL) {
            return Err(Error::NonPhysical { name, value });
        }
    }
    Ok(out)
}

/// Upper bound on Eve's information (reverse reconciliation), bits/symbol.
pub fn holevo_bound(v_a: f64, tau: f64, xi: f64, eta: f64, v_el: f64) -> Result<f64> {
    let [l1, l2, l3, l4] = symplectic_eigenvalues(v_a, tau, xi, eta, v_el)?;
    Ok((g(l1) + g(l2) - g(l3) - g(l4)).max(0.0))
}

/// Devetak-Winter rate at transmittance `tau` and total excess noise `xi`.
pub fn key_rate_at(params: &CvParams, tau: f64, xi: f64) -> Result<f64> {
    let sigma2 = 1.0 + tau * xi + params.chi_het();
    let i_ab = mutual_information(params.v_a, tau, sigma2, params.beta);
    let chi = holevo_bound(params.v_a, tau, xi, params.eta, params.v_el)?;
    Ok((i_ab - chi).max(0.0))
}

pub fn asymptotic_rate_cv(params: &CvParams, stats: &CvChannelStats) -> Result<f64> {
    key_rate_at(params, stats.tau(), stats.xi_total)
}

/// Worst-case transmission coefficient and noise parameter compatible with
/// `m` estimation symbols.
pub fn estimation_bounds(params: &CvParams, stats: &CvChannelStats, m: f64) -> (f64, f64) {
    let tau = stats.tau();
    let s = 1.0 + tau * stats.xi_total;
    let z = params.z_eps();
    let t_min = stats.mean_t - z * (s / (m * params.v_a)).sqrt();
    let sigma2_max = s + z * s * std::f64::consts::SQRT_2 / m.sqrt();
    (t_min, sigma2_max)
}

/// Finite-size rate per symbol of a block of `n_block` symbols, half of
/// which are spent on parameter estimation.
pub fn finite_rate_cv(params: &CvParams, stats: &CvChannelStats, n_block: f64) -> Result<f64> {
    let m = 0.5 * n_block;
    if !(m >= 1.0) {
        return Ok(0.0);
    }
    let (t_min, sigma2_max) = estimation_bounds(params, stats, m);
    if !(t_min > 0.0) {
        return Ok(0.0);
    }
    let tau_min = (t_min * t_min).min(1.0);
    let xi_max = (sigma2_max - 1.0) / tau_min;
    Ok(0.5 * key_rate_at(params, tau_min, xi_max)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvKeyResult {
    pub rate_asymptotic: f64,
    pub rate_finite: f64,
    pub v_a: f64,
    pub groups: usize,
    pub asymptotic_v_a: f64,
    pub asymptotic_groups: usize,
}

/// Groups as `(probability mass, mean T, var T)`.
pub fn group_stats(pdte: &TransmittanceDistribution, k: usize) -> Result<Vec<(f64, f64, f64)>> {
    Ok(partition_groups(pdte, k)?.iter().map(|g| (g.probability_mass, g.mean_t, g.var_t)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Regime {
    Asymptotic,
    Finite,
}

fn grouped_rate(template: &CvParams, groups: &[(f64, f64, f64)], v_a: f64, regime: Regime) -> f64 {
    let p = CvParams { v_a, ..template.clone() };
    groups
        .iter()
        .map(|&(mass, mean_t, var_t)| {
            let stats = CvChannelStats::new(&p, mean_t, var_t);
            let r = match regime {
                Regime::Asymptotic => asymptotic_rate_cv(&p, &stats),
                Regime::Finite => finite_rate_cv(&p, &stats, p.n_symbols * mass),
            };
            mass * r.unwrap_or(0.0)
        })
        .sum()
}

struct NegRate<'a> {
    template: &'a CvParams,
    groups: &'a [(f64, f64, f64)],
    regime: Regime,
}

impl CostFunction for NegRate<'_> {
    type Param = f64;
    type Output = f64;

    fn cost(&self, ln_va: &f64) -> std::result::Result<f64, argmin::core::Error> {
        Ok(-grouped_rate(self.template, self.groups, ln_va.exp(), self.regime))
    }
}

pub const V_A_RANGE: (f64, f64) = (0.5, 20.0);

/// Best modulation variance for fixed groups: log grid, then Brent search
/// in the bracket around the best grid point.
fn optimize_va(template: &CvParams, groups: &[(f64, f64, f64)], regime: Regime) -> (f64, f64) {
    let n = 33;
    let (lo, hi) = (V_A_RANGE.0.ln(), V_A_RANGE.1.ln());
    let step = (hi - lo) / (n - 1) as f64;
    let grid: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    let rates: Vec<f64> = grid.iter().map(|x| grouped_rate(template, groups, x.exp(), regime)).collect();
    let (ib, &best) =
        rates.iter().enumerate().fold((0, &rates[0]), |acc, (i, r)| if *r > *acc.1 { (i, r) } else { acc });
    if !(best > 0.0) {
        return (0.0, grid[ib].exp());
    }
    let a = (grid[ib] - step).max(lo);
    let b = (grid[ib] + step).min(hi);
    let solver = BrentOpt::new(a, b).set_tolerance(1e-10, 1e-12);
    let refined = Executor::new(NegRate { template, groups, regime }, solver)
        .configure(|s| s.max_iters(100))
        .run()
        .ok()
        .and_then(|r| r.state().best_param);
    if let Some(x) = refined {
        let r = grouped_rate(template, groups, x.exp(), regime);
        if r > best {
            return (r, x.exp());
        }
    }
    (best, grid[ib].exp())
}

/// Maximizes the rates over modulation variance and group count
/// `1..=max_groups`.
pub fn optimize_cv(template: &CvParams, pdte: &TransmittanceDistribution, max_groups: usize) -> Result<CvKeyResult> {
    template.validate()?;
    if max_groups < 1 {
        return Err(Error::domain("max_groups must be at least 1"));
    }
    type Best = (f64, f64);
    let per_k: Vec<(usize, Best, Best)> = (1..=max_groups)
        .into_par_iter()
        .map(|k| {
            let groups = group_stats(pdte, k)?;
            Ok((k, optimize_va(template, &groups, Regime::Finite), optimize_va(template, &groups, Regime::Asymptotic)))
        })
        .collect::<Result<_>>()?;
    let mut res = CvKeyResult {
        rate_asymptotic: 0.0,
        rate_finite: 0.0,
        v_a: template.v_a,
        groups: 1,
        asymptotic_v_a: template.v_a,
        asymptotic_groups: 1,
    };
    for (k, (rf, vf), (ra, va)) in per_k {
        if rf > res.rate_finite {
            res.rate_finite = rf;
            res.v_a = vf;
            res.groups = k;
        }
        if ra > res.rate_asymptotic {
            res.rate_asymptotic = ra;
            res.asymptotic_v_a = va;
            res.asymptotic_groups = k;
        }
    }
    Ok(res)
}
