//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        loop {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                let (mut q0, mut q1) = (1.0, z);
                for k in 2..=n {
                    let q2 = ((2 * k - 1) as f64 * z * q1 - (k - 1) as f64 * q0) / k as f64;
                    q0 = q1;
                    q1 = q2;
                }
                let dq = n as f64 * (z * q1 - q0) / (z * z - 1.0);
                x[i] = z;
                w[i] = 2.0 / ((1.0 - z * z) * dq * dq);
                break;
            }
        }
    }
    (x, w)
}

pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let (h, c) = (0.5 * (b - a), 0.5 * (b + a));
    rule.0.iter().zip(&rule.1).map(|(x, w)| w * f(c + h * x)).sum::<f64>() * h
}

/// Fraction of a Gaussian beam of radius `w` (1/e^2 intensity) whose centre
/// sits `offset` from the centre of a circular aperture of radius `a`,
/// by direct 2-D quadrature over the aperture.
pub fn beam_overlap(offset: f64, w: f64, a: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let norm = 2.0 / (std::f64::consts::PI * w * w);
    let inner = |rho: f64| {
        integrate(
            |phi: f64| (-2.0 * (rho * rho + offset * offset - 2.0 * rho * offset * phi.cos()) / (w * w)).exp(),
            0.0,
            2.0 * std::f64::consts::PI,
            rule,
        ) * rho
    };
    norm * integrate(inner, 0.0, a, rule)
}

/// Transmittances of a wandering beam: per-axis Gaussian offsets with
/// standard deviation `sigma`.
pub fn beam_wander_samples(w: f64, a: f64, sigma: f64, n: usize, seed: u64) -> Vec<f64> {
    let rule = gauss_legendre(24);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            // Radius of a 2-D isotropic Gaussian (Rayleigh by inversion).
            let r = sigma * (-2.0 * (1.0 - u).ln()).sqrt();
            beam_overlap(r, w, a, &rule)
        })
        .collect()
}

/// Kolmogorov-Smirnov distance between samples and a model CDF.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// Empirical CDF evaluated at the given points.
pub fn empirical_cdf(samples: &[f64], at: &[f64]) -> Vec<f64> {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    at.iter().map(|&x| s.partition_point(|&v| v <= x) as f64 / s.len() as f64).collect()
}

/// Peak coupling of a flat circular pupil of radius `r` into a Gaussian mode
/// of radius `w`, from the normalized overlap integral.
pub fn pupil_overlap_coupling(r: f64, w: f64) -> f64 {
    let rule = gauss_legendre(64);
    let pi = std::f64::consts::PI;
    let overlap = integrate(|rho| (-(rho * rho) / (w * w)).exp() * 2.0 * pi * rho, 0.0, r, &rule);
    let pupil = pi * r * r;
    let mode = integrate(|rho| (-2.0 * rho * rho / (w * w)).exp() * 2.0 * pi * rho, 0.0, 20.0 * w, &rule);
    overlap * overlap / (pupil * mode)
}

/// Symplectic eigenvalues of a covariance matrix in (x1, p1, x2, p2, ...)
/// ordering, ascending.
pub fn symplectic_spectrum(gamma: &DMatrix<f64>) -> Vec<f64> {
    let n = gamma.nrows();
    let mut omega = DMatrix::zeros(n, n);
    for k in 0..n / 2 {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    let eig = SymmetricEigen::new(gamma.clone());
    let sqrt = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()))
        * eig.eigenvectors.transpose();
    let k = &sqrt * omega * &sqrt;
    let m = -(&k * &k);
    let m = 0.5 * (&m + m.transpose());
    let mut vals: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().map(|v| v.max(0.0).sqrt()).collect();
    vals.sort_by(f64::total_cmp);
    vals.chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect()
}

fn two_mode(a: f64, b: f64, c: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[
            a, 0.0, c, 0.0, //
            0.0, a, 0.0, -c, //
            c, 0.0, b, 0.0, //
            0.0, -c, 0.0, b,
        ],
    )
}

/// Entangling-cloner picture of a Gaussian-modulated link with heterodyne
/// detection behind a trusted lossy, noisy detector. Returns the Alice-Bob
/// covariance matrix and Alice's detector-extended state conditioned on
/// Bob's heterodyne outcome.
pub fn cv_covariances(v_a: f64, tau: f64, xi: f64, eta: f64, v_el: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let v = v_a + 1.0;
    let chi_line = 1.0 / tau - 1.0 + xi;
    let ab = two_mode(v, tau * (v + chi_line), (tau * (v * v - 1.0)).sqrt());

    // Modes: A, B, F0, G. The detector noise is an EPR pair (F0, G) of
    // variance ve, one arm mixed into B with a beam splitter of transmission eta.
    let ve = 1.0 + 2.0 * v_el / (1.0 - eta);
    let epr = two_mode(ve, ve, (ve * ve - 1.0).sqrt());
    let mut full = DMatrix::zeros(8, 8);
    full.view_mut((0, 0), (4, 4)).copy_from(&ab);
    full.view_mut((4, 4), (4, 4)).copy_from(&epr);
    let mut s = DMatrix::identity(8, 8);
    let (t, r) = (eta.sqrt(), (1.0 - eta).sqrt());
    for q in 0..2 {
        let (b, f) = (2 + q, 4 + q);
        s[(b, b)] = t;
        s[(b, f)] = r;
        s[(f, b)] = -r;
        s[(f, f)] = t;
    }
    let full = &s * full * s.transpose();

    // Heterodyne on B': gamma_rest - sigma (gamma_B + I)^-1 sigma^T.
    let keep = [0usize, 1, 4, 5, 6, 7];
    let rest = DMatrix::from_fn(6, 6, |i, j| full[(keep[i], keep[j])]);
    let sigma = DMatrix::from_fn(6, 2, |i, j| full[(keep[i], 2 + j)]);
    let gb = DMatrix::from_fn(2, 2, |i, j| full[(2 + i, 2 + j)]) + DMatrix::identity(2, 2);
    let cond = rest - &sigma * gb.try_inverse().expect("invertible") * sigma.transpose();
    (ab, cond)
}

/// Signal gain and error gain from an explicit photon-number sum.
pub fn poisson_gain(mu: f64, eta: f64, y0: f64, e0: f64, ed: f64) -> (f64, f64) {
    let (mut q, mut eq) = (0.0, 0.0);
    let mut p = (-mu).exp();
    for n in 0..200 {
        if n > 0 {
            p *= mu / n as f64;
        }
        let click = 1.0 - (1.0 - y0) * (1.0 - eta).powi(n);
        let signal = 1.0 - (1.0 - eta).powi(n);
        q += p * click;
        eq += p * (e0 * y0 + ed * signal * (1.0 - y0));
    }
    (q, eq)
}

/// Position of the satellite `phi` radians past the station's zenith.
fn satellite_elevation(phi: f64, r: f64, h: f64) -> (f64, f64) {
    let (sx, sy) = ((r + h) * phi.sin(), (r + h) * phi.cos());
    let (dx, dy) = (sx, sy - r);
    (dy.atan2(dx), (dx * dx + dy * dy).sqrt())
}

/// Orbit phase angle at which the satellite reaches `elev` radians, by bisection.
pub fn phase_at_elevation(elev: f64, r: f64, h: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, std::f64::consts::FRAC_PI_2);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if satellite_elevation(mid, r, h).0 > elev {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Slant range (km) and elevation rate (rad/s) at elevation `elev_deg`,
/// from planar geometry and a central difference in time.
pub fn orbit_reference(elev_deg: f64, r: f64, h: f64, gm: f64) -> (f64, f64) {
    let phi = phase_at_elevation(elev_deg.to_radians(), r, h);
    let omega = (gm / (r + h).powi(3)).sqrt();
    let (_, range) = satellite_elevation(phi, r, h);
    let dt = 1e-3;
    let e1 = satellite_elevation(phi - omega * dt, r, h).0;
    let e2 = satellite_elevation(phi + omega * dt, r, h).0;
    (range, ((e1 - e2) / (2.0 * dt)).abs())
}
