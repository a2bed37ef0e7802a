//! Probability distributions of transmission efficiency (PDTE) on a grid
//! uniform in dB, and the operations that build a pass distribution.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adaptive_optics::CouplingStats;
use crate::error::{Error, Result};
use crate::special::{bessel_i0e, bessel_i1e, normal_cdf};

const NORMALIZATION_TOL: f64 = 1e-9;

/// Grid of `points` nodes uniform in dB from `min_db` up to 0 dB.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogGrid {
    pub points: usize,
    pub min_db: f64,
}

impl Default for LogGrid {
    fn default() -> Self {
        LogGrid { points: 2048, min_db: -80.0 }
    }
}

impl LogGrid {
    pub fn new(points: usize, min_db: f64) -> Result<Self> {
        if points < 2 || !(min_db < 0.0) {
            return Err(Error::domain("log grid needs at least 2 points and a negative lower bound"));
        }
        Ok(LogGrid { points, min_db })
    }

    pub fn step_db(&self) -> f64 {
        -self.min_db / (self.points - 1) as f64
    }

    pub fn node_db(&self, i: usize) -> f64 {
        self.min_db + i as f64 * self.step_db()
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.points - 1 {
            1.0
        } else {
            10f64.powf(self.node_db(i) / 10.0)
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.node(i)).collect()
    }

    /// Bin `i` covers `[edge(i), edge(i + 1))`. The first bin extends to
    /// zero and the last one is capped at one.
    pub fn edge(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else if i >= self.points {
            1.0
        } else {
            10f64.powf((self.node_db(i) - 0.5 * self.step_db()) / 10.0)
        }
    }

    /// Adds `mass` at value `eta`, split between the two bracketing nodes so
    /// that the mean is preserved. Values below the grid go to the first
    /// node, values above one to the last.
    pub fn deposit(&self, probs: &mut [f64], eta: f64, mass: f64) {
        let n = self.points;
        if !(eta > self.node(0)) {
            probs[0] += mass;
            return;
        }
        if eta >= 1.0 {
            probs[n - 1] += mass;
            return;
        }
        let pos = (10.0 * eta.log10() - self.min_db) / self.step_db();
        let mut k = (pos.floor() as usize).min(n - 2);
        // Guard against rounding at node boundaries.
        while k > 0 && self.node(k) > eta {
            k -= 1;
        }
        while k + 1 < n - 1 && self.node(k + 1) <= eta {
            k += 1;
        }
        let (lo, hi) = (self.node(k), self.node(k + 1));
        let w = ((eta - lo) / (hi - lo)).clamp(0.0, 1.0);
        probs[k] += mass * (1.0 - w);
        probs[k + 1] += mass * w;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransmittanceDistribution {
    grid: Vec<f64>,
    probabilities: Vec<f64>,
    log_grid: Option<LogGrid>,
}

impl TransmittanceDistribution {
    /// Builds a distribution on an arbitrary increasing grid in [0, 1].
    pub fn new(grid: Vec<f64>, probabilities: Vec<f64>) -> Result<Self> {
        if grid.is_empty() || grid.len() != probabilities.len() {
            return Err(Error::domain("grid and probabilities must be non-empty and of equal length"));
        }
        if grid.iter().any(|g| !(0.0..=1.0).contains(g)) {
            return Err(Error::domain("transmittance grid must lie within [0, 1]"));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("transmittance grid must be strictly increasing"));
        }
        if probabilities.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::domain("probabilities must be non-negative"));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::domain(format!("probabilities sum to {total}, expected 1")));
        }
        Ok(TransmittanceDistribution { grid, probabilities, log_grid: None })
    }

    fn on_grid(grid: &LogGrid, mut probabilities: Vec<f64>) -> Self {
        let total: f64 = probabilities.iter().sum();
        if total > 0.0 && (total - 1.0).abs() > 1e-15 {
            probabilities.iter_mut().for_each(|p| *p /= total);
        }
        TransmittanceDistribution { grid: grid.nodes(), probabilities, log_grid: Some(*grid) }
    }

    /// All mass at `eta`, split between neighbouring nodes.
    pub fn point_mass(grid: &LogGrid, eta: f64) -> Self {
        let mut probs = vec![0.0; grid.points];
        grid.deposit(&mut probs, eta, 1.0);
        Self::on_grid(grid, probs)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn log_grid(&self) -> Option<LogGrid> {
        self.log_grid
    }

    /// Nodes carrying non-zero probability, as `(eta, probability)`.
    pub fn support(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.grid.iter().zip(&self.probabilities).filter(|(_, p)| **p > 0.0).map(|(g, p)| (*g, *p))
    }

    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.support().map(|(eta, p)| p * f(eta)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.expectation(|eta| eta)
    }

    /// Mean transmission coefficient `E[sqrt(eta)]`.
    pub fn mean_t(&self) -> f64 {
        self.expectation(f64::sqrt)
    }

    /// Variance of the transmission coefficient `sqrt(eta)`.
    pub fn var_t(&self) -> f64 {
        let m = self.mean_t();
        (self.mean() - m * m).max(0.0)
    }

    /// Attenuation of the mean transmission efficiency, dB (positive).
    pub fn mean_attenuation_db(&self) -> f64 {
        -10.0 * self.mean().log10()
    }

    /// `P(eta <= x)` for the discrete distribution.
    pub fn cdf(&self, x: f64) -> f64 {
        let idx = self.grid.partition_point(|g| *g <= x);
        self.probabilities[..idx].iter().sum::<f64>().min(1.0)
    }

    /// Moves the distribution onto `grid` with mean-preserving splitting.
    pub fn regrid(&self, grid: &LogGrid) -> Self {
        if self.log_grid == Some(*grid) {
            return self.clone();
        }
        let mut probs = vec![0.0; grid.points];
        for (eta, p) in self.support() {
            grid.deposit(&mut probs, eta, p);
        }
        Self::on_grid(grid, probs)
    }

    /// Distribution of `c * eta` for a constant `0 < c <= 1`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::domain(format!("scale factor {c} outside (0, 1]")));
        }
        let grid = self.log_grid.unwrap_or_default();
        if c == 1.0 {
            return Ok(self.regrid(&grid));
        }
        let mut probs = vec![0.0; grid.points];
        for (eta, p) in self.support() {
            grid.deposit(&mut probs, c * eta, p);
        }
        Ok(Self::on_grid(&grid, probs))
    }

    /// Distribution of the product of two independent variables.
    pub fn product(&self, other: &Self) -> Self {
        let grid = self.log_grid.or(other.log_grid).unwrap_or_default();
        let a = self.regrid(&grid);
        let b = other.regrid(&grid);
        let n = grid.points as isize;
        let mut probs = vec![0.0; grid.points];
        let nz_b: Vec<(usize, f64)> =
            b.probabilities.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(j, p)| (j, *p)).collect();
        for (i, pa) in a.probabilities.iter().enumerate().filter(|(_, p)| **p > 0.0) {
            for &(j, pb) in &nz_b {
                // Node values multiply exactly: dB indices add.
                let k = (i as isize + j as isize - (n - 1)).max(0) as usize;
                probs[k] += pa * pb;
            }
        }
        Self::on_grid(&grid, probs)
    }

    /// Draws one transmittance value.
    pub fn sampler(&self) -> Result<TransmittanceSampler> {
        let (values, weights): (Vec<f64>, Vec<f64>) = self.support().unzip();
        let index = WeightedIndex::new(&weights).map_err(|e| Error::domain(e.to_string()))?;
        Ok(TransmittanceSampler { values, index })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["transmittance", "probability"])?;
        for (g, p) in self.grid.iter().zip(&self.probabilities) {
            w.write_record([format!("{g:.12e}"), format!("{p:.12e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["transmittance", "probability"] {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: "expected header `transmittance,probability`".into(),
            });
        }
        let (mut grid, mut probs) = (Vec::new(), Vec::new());
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse = |field: usize| -> Result<f64> {
                rec.get(field).unwrap_or("").trim().parse::<f64>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 2,
                    message: e.to_string(),
                })
            };
            grid.push(parse(0)?);
            probs.push(parse(1)?);
        }
        Self::new(grid, probs)
    }
}

pub struct TransmittanceSampler {
    values: Vec<f64>,
    index: WeightedIndex<f64>,
}

impl TransmittanceSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.values[self.index.sample(rng)]
    }
}

/// Weighted mixture of distributions; weights are normalized.
pub fn merge_pass(parts: &[(f64, TransmittanceDistribution)]) -> Result<TransmittanceDistribution> {
    let total: f64 = parts.iter().map(|(w, _)| *w).sum();
    if parts.is_empty() || !(total > 0.0) {
        return Err(Error::domain("merge_pass needs at least one positively weighted segment"));
    }
    let grid = parts.iter().find_map(|(_, d)| d.log_grid).unwrap_or_default();
    let mut probs = vec![0.0; grid.points];
    for (w, d) in parts {
        let d = d.regrid(&grid);
        for (acc, p) in probs.iter_mut().zip(&d.probabilities) {
            *acc += w / total * p;
        }
    }
    Ok(TransmittanceDistribution::on_grid(&grid, probs))
}

/// Zenith-referred atmospheric extinction at a given zenith angle.
pub fn atmospheric_transmittance(tau_zen: f64, zenith_angle_deg: f64) -> Result<f64> {
    if !(tau_zen > 0.0 && tau_zen <= 1.0) {
        return Err(Error::domain(format!("zenith transmittance {tau_zen} outside (0, 1]")));
    }
    if !(0.0..90.0).contains(&zenith_angle_deg) {
        return Err(Error::domain(format!("zenith angle {zenith_angle_deg} outside [0, 90)")));
    }
    Ok(tau_zen.powf(1.0 / zenith_angle_deg.to_radians().cos()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricLossParams {
    /// Beam divergence half-angle, rad.
    pub divergence_rad: f64,
    /// Per-axis pointing jitter, rad.
    pub pointing_std_rad: f64,
    pub aperture_radius_m: f64,
    pub slant_range_m: f64,
}

impl GeometricLossParams {
    pub fn beam_radius_m(&self) -> f64 {
        self.divergence_rad * self.slant_range_m
    }

    pub fn wander_std_m(&self) -> f64 {
        self.pointing_std_rad * self.slant_range_m
    }
}

/// Beam-wander model: a Gaussian footprint of radius `W` whose centre is
/// displaced by a Rayleigh-distributed offset `r`, collected by a circular
/// aperture of radius `a`. The transmittance follows
/// `eta(r) = eta0 * exp(-(r / R)^lambda)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamWander {
    pub eta0: f64,
    pub shape: f64,
    pub scale_m: f64,
    pub sigma_m: f64,
}

impl BeamWander {
    pub fn new(p: &GeometricLossParams) -> Result<Self> {
        let w = p.beam_radius_m();
        if !(w > 0.0) || !(p.aperture_radius_m > 0.0) || !(p.pointing_std_rad >= 0.0) {
            return Err(Error::domain("beam radius and aperture radius must be positive"));
        }
        let a2 = p.aperture_radius_m.powi(2);
        let x = 4.0 * a2 / (w * w);
        let eta0 = -(-2.0 * a2 / (w * w)).exp_m1();
        let i0e = bessel_i0e(x);
        let i1e = bessel_i1e(x);
        let log_term = (2.0 * eta0 / (1.0 - i0e)).ln();
        let shape = 2.0 * x * i1e / (1.0 - i0e) / log_term;
        let scale_m = p.aperture_radius_m * log_term.powf(-1.0 / shape);
        Ok(BeamWander { eta0, shape, scale_m, sigma_m: p.wander_std_m() })
    }

    pub fn transmittance(&self, offset_m: f64) -> f64 {
        self.eta0 * (-(offset_m / self.scale_m).powf(self.shape)).exp()
    }

    /// `P(eta <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x >= self.eta0 {
            return 1.0;
        }
        if x <= 0.0 {
            return 0.0;
        }
        if self.sigma_m == 0.0 {
            return 0.0;
        }
        let r = self.scale_m * (self.eta0 / x).ln().powf(1.0 / self.shape);
        (-(r * r) / (2.0 * self.sigma_m * self.sigma_m)).exp()
    }
}

pub fn geometric_pdte(p: &GeometricLossParams, grid: &LogGrid) -> Result<TransmittanceDistribution> {
    let model = BeamWander::new(p)?;
    if model.sigma_m == 0.0 {
        return Ok(TransmittanceDistribution::point_mass(grid, model.eta0));
    }
    let mut probs = vec![0.0; grid.points];
    let mut prev = 0.0;
    for (i, prob) in probs.iter_mut().enumerate() {
        let upper = model.cdf(grid.edge(i + 1));
        *prob = (upper - prev).max(0.0);
        prev = upper;
    }
    // Any mass the edges missed (eta0 at exactly 1) lands on the top node.
    probs[grid.points - 1] += (1.0 - prev).max(0.0);
    Ok(TransmittanceDistribution::on_grid(grid, probs))
}

/// Gaussian coupling efficiency truncated to `[0, upper]` and renormalized.
pub fn coupling_distribution(stats: &CouplingStats, upper: f64, grid: &LogGrid) -> Result<TransmittanceDistribution> {
    if !(stats.mean >= 0.0 && stats.std_dev >= 0.0) || !(upper > 0.0 && upper <= 1.0) {
        return Err(Error::domain("coupling statistics out of range"));
    }
    let mean = stats.mean.min(upper);
    if stats.std_dev <= 1e-6 * mean.max(1e-300) {
        return Ok(TransmittanceDistribution::point_mass(grid, mean));
    }
    let z = |x: f64| normal_cdf((x.min(upper) - mean) / stats.std_dev);
    let lo = z(0.0);
    let total = z(upper) - lo;
    if !(total > 1e-300) {
        return Ok(TransmittanceDistribution::point_mass(grid, mean));
    }
    let mut probs = vec![0.0; grid.points];
    let mut prev = lo;
    for (i, prob) in probs.iter_mut().enumerate() {
        let cur = z(grid.edge(i + 1));
        *prob = (cur - prev).max(0.0) / total;
        prev = cur;
    }
    Ok(TransmittanceDistribution::on_grid(grid, probs))
}

/// Per-segment distribution of `eta_geo * eta_coupling * tau_atm * eta_opt`.
pub fn segment_pdte(
    geo: &TransmittanceDistribution,
    coupling: &TransmittanceDistribution,
    tau_atm: f64,
    eta_opt: f64,
) -> Result<TransmittanceDistribution> {
    geo.product(coupling).scaled(tau_atm * eta_opt)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransmittanceGroup {
    pub lower: f64,
    pub upper: f64,
    pub probability_mass: f64,
    pub mean_t: f64,
    pub var_t: f64,
    /// Conditional distribution within the group, as `(eta, probability)`.
    pub points: Vec<(f64, f64)>,
}

impl TransmittanceGroup {
    pub fn mean_eta(&self) -> f64 {
        self.points.iter().map(|(e, p)| e * p).sum()
    }

    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points.iter().map(|(e, p)| p * f(*e)).sum()
    }
}

/// Splits the distribution into `k` contiguous groups of equal probability
/// mass. A node straddling a quantile boundary is shared fractionally.
pub fn partition_groups(pdte: &TransmittanceDistribution, k: usize) -> Result<Vec<TransmittanceGroup>> {
    let n = pdte.grid.len();
    if k < 1 || k > n {
        return Err(Error::domain(format!("group count {k} outside [1, {n}]")));
    }
    let edges: Vec<f64> = match pdte.log_grid {
        Some(g) => (0..=n).map(|i| g.edge(i)).collect(),
        None => {
            let mut e = vec![0.0];
            e.extend(pdte.grid.windows(2).map(|w| 0.5 * (w[0] + w[1])));
            e.push(1.0);
            e
        }
    };
    let target = 1.0 / k as f64;
    let mut groups = Vec::with_capacity(k);
    let mut current: Vec<(usize, f64)> = Vec::new();
    let mut filled = 0.0;
    let finish = |current: &mut Vec<(usize, f64)>, groups: &mut Vec<TransmittanceGroup>| {
        let mass: f64 = current.iter().map(|(_, m)| m).sum();
        if current.is_empty() || mass <= 0.0 {
            current.clear();
            return;
        }
        let points: Vec<(f64, f64)> = current.iter().map(|(i, m)| (pdte.grid[*i], m / mass)).collect();
        let mean_t: f64 = points.iter().map(|(e, p)| p * e.sqrt()).sum();
        let mean_eta: f64 = points.iter().map(|(e, p)| p * e).sum();
        groups.push(TransmittanceGroup {
            lower: edges[current[0].0],
            upper: edges[current[current.len() - 1].0 + 1],
            probability_mass: mass,
            mean_t,
            var_t: (mean_eta - mean_t * mean_t).max(0.0),
            points,
        });
        current.clear();
    };
    for (i, &p) in pdte.probabilities.iter().enumerate() {
        let mut left = p;
        while left > 0.0 {
            let open = groups.len() + 1 < k;
            if open && filled >= target * (1.0 - 1e-12) {
                finish(&mut current, &mut groups);
                filled = 0.0;
                continue;
            }
            let room = target - filled;
            if open && left > room {
                current.push((i, room));
                left -= room;
                filled = target;
            } else {
                current.push((i, left));
                filled += left;
                left = 0.0;
            }
        }
    }
    finish(&mut current, &mut groups);
    Ok(groups)
}
