//! Scalar numerics shared by the samplers: Gaussian tail functions in linear
//! and log space, log-sum-exp, and a handful of random variate helpers.

use libm::erfc;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal survival function `1 - Φ(x)`, accurate in the right tail.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn norm_logpdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * z * z - sigma.ln() - LN_SQRT_2PI
}

/// `ln(1 - Φ(x))` without underflow for large `x`.
pub fn log_norm_sf(x: f64) -> f64 {
    if x == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    if x < 25.0 {
        return norm_sf(x).ln();
    }
    // Asymptotic Mills-ratio series; relative error below 1e-11 past 25.
    let x2 = x * x;
    let inv = 1.0 / x2;
    let series = 1.0 - inv + 3.0 * inv * inv - 15.0 * inv.powi(3) + 105.0 * inv.powi(4);
    -0.5 * x2 - x.ln() - LN_SQRT_2PI + series.ln()
}

/// `ln Φ(x)`.
pub fn log_norm_cdf(x: f64) -> f64 {
    log_norm_sf(-x)
}

/// Standard normal quantile function.
pub fn norm_ppf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut x = -SQRT_2 * erfc_inv(2.0 * p);
    // The series inverse is good to ~1e-11; Newton on the tail-appropriate
    // CDF brings it to machine precision.
    for _ in 0..2 {
        let r = if x < 0.0 { norm_cdf(x) - p } else { (1.0 - p) - norm_sf(x) };
        let d = norm_pdf(x);
        if d > 0.0 {
            x -= r / d;
        }
    }
    x
}

/// `ln(1 - e^x)` for `x <= 0`.
pub fn log1m_exp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Normalizes log weights into probabilities.
pub fn softmax_log(log_weights: &[f64]) -> Result<Vec<f64>> {
    let lse = logsumexp(log_weights);
    if !lse.is_finite() {
        return Err(Error::Numerical("all allocation weights vanished (log-sum-exp is not finite)".into()));
    }
    Ok(log_weights.iter().map(|w| (w - lse).exp()).collect())
}

/// Draws an index with probability proportional to `exp(log_weights)`.
pub fn sample_log_categorical<R: Rng + ?Sized>(rng: &mut R, log_weights: &[f64]) -> Result<usize> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numerical("all allocation weights vanished (log-sum-exp is not finite)".into()));
    }
    let total: f64 = log_weights.iter().map(|w| (w - max).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (k, w) in log_weights.iter().enumerate() {
        let p = (w - max).exp();
        if p > 0.0 {
            last = k;
        }
        if u < p {
            return Ok(k);
        }
        u -= p;
    }
    Ok(last)
}

pub fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate).expect("gamma parameters must be positive").sample(rng)
}

pub fn sample_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    mean + sd * z
}

/// Dirichlet draw via normalized gammas; falls back to log-space when all
/// gamma draws underflow (tiny concentration parameters).
pub fn sample_dirichlet<R: Rng + ?Sized>(rng: &mut R, alpha: &[f64]) -> Vec<f64> {
    if alpha.len() == 1 {
        return vec![1.0];
    }
    let draws: Vec<f64> = alpha.iter().map(|&a| sample_gamma(rng, a, 1.0)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        let mut w: Vec<f64> = draws.iter().map(|d| d / total).collect();
        renormalize(&mut w);
        return w;
    }
    // ln G = ln G(a + 1) + ln(U) / a for small shapes.
    let logs: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            let g = sample_gamma(rng, a + 1.0, 1.0);
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            g.ln() + u.ln() / a
        })
        .collect();
    let lse = logsumexp(&logs);
    let mut w: Vec<f64> = logs.iter().map(|l| (l - lse).exp()).collect();
    renormalize(&mut w);
    w
}

/// Rescales so the entries sum to one in floating point as closely as possible.
pub fn renormalize(w: &mut [f64]) {
    let total: f64 = w.iter().sum();
    for x in w.iter_mut() {
        *x /= total;
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Linear-interpolated empirical quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}
