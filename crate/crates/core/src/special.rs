//! Special functions not covered by `statrs`.

use statrs::function::erf;

const SERIES_LIMIT: f64 = 15.0;

/// Exponentially scaled modified Bessel function `exp(-x) I0(x)` for `x >= 0`.
pub fn bessel_i0e(x: f64) -> f64 {
    scaled_bessel(0, x)
}

/// Exponentially scaled modified Bessel function `exp(-x) I1(x)` for `x >= 0`.
pub fn bessel_i1e(x: f64) -> f64 {
    scaled_bessel(1, x)
}

fn scaled_bessel(order: u32, x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x <= SERIES_LIMIT {
        // I_n(x) = (x/2)^n sum_k (x^2/4)^k / (k! (k+n)!)
        let q = 0.25 * x * x;
        let mut term = if order == 0 { 1.0 } else { 0.5 * x };
        let mut sum = term;
        let mut k = 0.0;
        loop {
            k += 1.0;
            term *= q / (k * (k + order as f64));
            sum += term;
            if term <= sum * 1e-17 {
                break;
            }
        }
        sum * (-x).exp()
    } else {
        // Hankel asymptotic expansion, truncated at the smallest term.
        let mu = 4.0 * (order * order) as f64;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..40 {
            let kf = k as f64;
            let next = -term * (mu - (2.0 * kf - 1.0).powi(2)) / (kf * 8.0 * x);
            if next.abs() >= term.abs() {
                break;
            }
            term = next;
            sum += term;
            if term.abs() < 1e-17 {
                break;
            }
        }
        sum / (2.0 * std::f64::consts::PI * x).sqrt()
    }
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse error function.
pub fn erf_inv(x: f64) -> f64 {
    erf::erf_inv(x)
}
