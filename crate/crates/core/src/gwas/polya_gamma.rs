//! Exact sampler for the Polya-Gamma distribution `PG(1, z)` by Devroye's
//! alternating-series method.

use std::f64::consts::{FRAC_2_PI, PI};

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::stats::norm_cdf;

const TRUNC: f64 = 0.64;

/// n-th coefficient of the alternating series for the Jacobi density.
fn series_coef(n: usize, x: f64) -> f64 {
    let k = n as f64 + 0.5;
    if x > TRUNC {
        PI * k * (-0.5 * k * k * PI * PI * x).exp()
    } else {
        let log = 1.5 * (FRAC_2_PI / x).ln() + (PI * k).ln() - 2.0 * k * k / x;
        log.exp()
    }
}

/// CDF at `x` of the inverse Gaussian with mean `mu` and shape 1.
fn inverse_gaussian_cdf(x: f64, mu: f64) -> f64 {
    let r = (1.0 / x).sqrt();
    let a = norm_cdf(r * (x / mu - 1.0));
    let b = norm_cdf(-r * (x / mu + 1.0));
    a + (2.0 / mu).exp() * b
}

/// Inverse Gaussian (mean `1/z`, shape 1) restricted to `(0, TRUNC)`.
fn truncated_inverse_gaussian<R: Rng + ?Sized>(rng: &mut R, z: f64) -> f64 {
    let mu = if z > 0.0 { 1.0 / z } else { f64::INFINITY };
    if mu > TRUNC {
        // Proposal: the z = 0 (Lévy) law truncated to (0, TRUNC), then thin.
        loop {
            let x = loop {
                let e1: f64 = Exp1.sample(rng);
                let e2: f64 = Exp1.sample(rng);
                if e1 * e1 <= 2.0 * e2 / TRUNC {
                    let d = 1.0 + e1 * TRUNC;
                    break TRUNC / (d * d);
                }
            };
            if rng.random::<f64>() <= (-0.5 * z * z * x).exp() {
                return x;
            }
        }
    }
    loop {
        let n: f64 = StandardNormal.sample(rng);
        let y = n * n;
        let mut x = mu + 0.5 * mu * mu * y - 0.5 * mu * (4.0 * mu * y + (mu * y).powi(2)).sqrt();
        if rng.random::<f64>() > mu / (mu + x) {
            x = mu * mu / x;
        }
        if x <= TRUNC {
            return x;
        }
    }
}

/// One draw from `PG(1, z)`.
pub fn sample_pg1<R: Rng + ?Sized>(rng: &mut R, z: f64) -> f64 {
    let z = 0.5 * z.abs();
    let k = PI * PI / 8.0 + 0.5 * z * z;
    let p = PI / (2.0 * k) * (-k * TRUNC).exp();
    let q = if z > 0.0 {
        2.0 * (-z).exp() * inverse_gaussian_cdf(TRUNC, 1.0 / z)
    } else {
        // Lévy limit: P(X < t) = erfc(1 / sqrt(2t)) = 2 Φ(-1/sqrt(t)).
        2.0 * 2.0 * norm_cdf(-(1.0 / TRUNC).sqrt())
    };
    loop {
        let x = if rng.random::<f64>() < p / (p + q) {
            let e: f64 = Exp1.sample(rng);
            TRUNC + e / k
        } else {
            truncated_inverse_gaussian(rng, z)
        };
        let mut s = series_coef(0, x);
        let y = rng.random::<f64>() * s;
        let mut n = 0;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= series_coef(n, x);
                if y <= s {
                    return 0.25 * x;
                }
            } else {
                s += series_coef(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

/// `E[PG(1, z)] = tanh(z/2) / (2z)`.
pub fn pg1_mean(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        0.25
    } else {
        (0.5 * z).tanh() / (2.0 * z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// `Var PG(1, z) = (sinh z - z) / (4 z³ cosh²(z/2))`, 1/24 at zero.
    fn pg1_var(z: f64) -> f64 {
        if z.abs() < 1e-4 {
            1.0 / 24.0
        } else {
            (z.sinh() - z) / (4.0 * z.powi(3) * (0.5 * z).cosh().powi(2))
        }
    }

    #[test]
    fn moments_match_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 200_000;
        for &z in &[0.0, 0.5, 1.0, 2.5, -4.0, 10.0] {
            let xs: Vec<f64> = (0..draws).map(|_| sample_pg1(&mut rng, z)).collect();
            let m = xs.iter().sum::<f64>() / draws as f64;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (draws as f64 - 1.0);
            let se = (pg1_var(z) / draws as f64).sqrt();
            assert!((m - pg1_mean(z)).abs() < 4.0 * se, "z={z}: mean {m} vs {}", pg1_mean(z));
            assert!((v / pg1_var(z) - 1.0).abs() < 0.05, "z={z}: var {v} vs {}", pg1_var(z));
            assert!(xs.iter().all(|x| *x > 0.0));
        }
        assert_eq!(pg1_mean(0.0), 0.25);
    }

    #[test]
    fn mixture_weights_are_consistent_near_zero() {
        // q is continuous at z = 0.
        let k = PI * PI / 8.0;
        let _ = k;
        let tiny = 2.0 * (-1e-9f64).exp() * inverse_gaussian_cdf(TRUNC, 1e9);
        let limit = 4.0 * norm_cdf(-(1.0 / TRUNC).sqrt());
        assert!((tiny - limit).abs() < 1e-6, "{tiny} vs {limit}");
    }
}
