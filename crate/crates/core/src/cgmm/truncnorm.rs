use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::stats::{norm_cdf, norm_ppf, norm_sf};

/// Beyond this many standard deviations the inverse CDF loses precision and
/// one-sided rejection takes over.
const TAIL_SWITCH: f64 = 6.0;

/// Draws from `Normal(mean, sd^2)` restricted to `[lower, upper]`.
pub fn sample_truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lower: f64, upper: f64) -> f64 {
    let a = (lower - mean) / sd;
    let b = (upper - mean) / sd;
    let z = standard_truncated(rng, a, b);
    (mean + sd * z).clamp(lower, upper)
}

/// Standard normal restricted to `[a, b]`.
pub fn standard_truncated<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    debug_assert!(a < b);
    if a > TAIL_SWITCH {
        return right_tail(rng, a, b);
    }
    if b < -TAIL_SWITCH {
        return -right_tail(rng, -b, -a);
    }
    let u: f64 = rng.random();
    let z = if a >= 0.0 {
        // work with upper-tail probabilities right of the mean
        let (qa, qb) = (norm_sf(a), norm_sf(b));
        -norm_ppf(qb + u * (qa - qb))
    } else {
        let (pa, pb) = (norm_cdf(a), norm_cdf(b));
        norm_ppf(pa + u * (pb - pa))
    };
    z.clamp(a, b)
}

/// Rejection sampler for `[a, b]` with `a > 0` far in the right tail.
fn right_tail<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    if (b - a) * (a + b) < 2.0 {
        // Narrow slab: uniform proposal, acceptance at least e^-1.
        loop {
            let x = a + (b - a) * rng.random::<f64>();
            if rng.random::<f64>() < (0.5 * (a * a - x * x)).exp() {
                return x;
            }
        }
    }
    // Translated exponential proposal with the optimal rate.
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let x = a + e / lambda;
        if x > b {
            continue;
        }
        if rng.random::<f64>() < (-0.5 * (x - lambda).powi(2)).exp() {
            return x;
        }
    }
}
