use statrs::function::gamma::ln_gamma;

use super::PriorConfig;
use crate::error::{Error, Result};
use crate::stats::logsumexp;

/// Log prior mass of `k` components: a beta-negative-binomial with one
/// success, shifted onto 1, 2, ...
///
/// For `alpha = beta = 1` this is `ln(1 / (k (k + 1)))`.
pub fn log_prior_k(k: usize, alpha: f64, beta: f64) -> Result<f64> {
    if k < 1 {
        return Err(Error::Domain("number of components must be at least 1".into()));
    }
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::Domain("BNB shape parameters must be positive".into()));
    }
    let x = (k - 1) as f64;
    Ok(alpha.ln() + ln_gamma(alpha + beta) - ln_gamma(beta) + ln_gamma(beta + x) - ln_gamma(alpha + beta + x + 1.0))
}

/// Prior mean of K; finite only for `alpha > 1`.
pub fn prior_k_mean(alpha: f64, beta: f64) -> Option<f64> {
    (alpha > 1.0).then(|| (alpha + beta - 1.0) / (alpha - 1.0))
}

/// Prior variance of K; finite only for `alpha > 2`.
pub fn prior_k_variance(alpha: f64, beta: f64) -> Option<f64> {
    (alpha > 2.0).then(|| alpha * beta * (alpha + beta - 1.0) / ((alpha - 2.0) * (alpha - 1.0).powi(2)))
}

/// Mode of the prior truncated to `1..=k_max` (ties to the smaller K).
pub fn prior_k_mode(prior: &PriorConfig) -> usize {
    let mut best = (1, f64::NEG_INFINITY);
    for k in 1..=prior.k_max {
        let lp = log_prior_k(k, prior.bnb_alpha, prior.bnb_beta).unwrap();
        if lp > best.1 {
            best = (k, lp);
        }
    }
    best.0
}

/// Normalized log conditional of the component count given a partition of
/// `n` observations into `k_plus` occupied clusters, over `k_plus..=k_max`:
///
/// `p(K | z) ∝ p(K) K! / (K - K+)! Γ(δK) / Γ(n + δK)`.
///
/// Returns `(K, log p(K | z))` pairs.
pub fn k_conditional(n: usize, k_plus: usize, prior: &PriorConfig) -> Result<Vec<(usize, f64)>> {
    if k_plus == 0 || k_plus > prior.k_max {
        return Err(Error::Domain(format!("occupied clusters {k_plus} outside 1..={}", prior.k_max)));
    }
    let delta = prior.delta;
    let n = n as f64;
    let kp = k_plus as f64;
    let mut out: Vec<(usize, f64)> = (k_plus..=prior.k_max)
        .map(|k| {
            let kf = k as f64;
            let lw = log_prior_k(k, prior.bnb_alpha, prior.bnb_beta).unwrap() + ln_gamma(kf + 1.0)
                - ln_gamma(kf - kp + 1.0)
                + ln_gamma(delta * kf)
                - ln_gamma(n + delta * kf);
            (k, lw)
        })
        .collect();
    let logs: Vec<f64> = out.iter().map(|(_, l)| *l).collect();
    let lse = logsumexp(&logs);
    if !lse.is_finite() {
        return Err(Error::Numerical("K conditional failed to normalize".into()));
    }
    for (_, l) in out.iter_mut() {
        *l -= lse;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed-form BNB(r = 1) pmf at k - 1, computed by the product recursion
    /// `p(x) = α/(α+β+x) Π_{i<x} (β+i)/(α+β+i)`.
    fn bnb_product(k: usize, a: f64, b: f64) -> f64 {
        let x = k - 1;
        let mut p = a / (a + b + x as f64);
        for i in 0..x {
            p *= (b + i as f64) / (a + b + i as f64);
        }
        p
    }

    #[test]
    fn default_prior_values() {
        assert!((log_prior_k(1, 1.0, 1.0).unwrap() - (0.5f64).ln()).abs() < 1e-12);
        assert!((log_prior_k(2, 1.0, 1.0).unwrap() - (1.0 / 6.0f64).ln()).abs() < 1e-12);
        assert!((log_prior_k(3, 1.0, 1.0).unwrap() - (1.0 / 12.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn matches_closed_form_up_to_100() {
        for &(a, b) in &[(1.0, 1.0), (3.0, 2.0), (0.5, 4.0)] {
            for k in 1..=100 {
                let got = log_prior_k(k, a, b).unwrap().exp();
                assert!((got - bnb_product(k, a, b)).abs() < 1e-12, "k={k} a={a} b={b}");
            }
        }
    }

    #[test]
    fn telescoping_normalization() {
        // Σ_{k≤N} 1/(k(k+1)) = 1 - 1/(N+1)
        let n = 10_000;
        let s: f64 = (1..=n).map(|k| log_prior_k(k, 1.0, 1.0).unwrap().exp()).sum();
        assert!((s - (1.0 - 1.0 / (n as f64 + 1.0))).abs() < 1e-10);
    }

    #[test]
    fn domain_errors() {
        assert!(log_prior_k(0, 1.0, 1.0).is_err());
        assert!(log_prior_k(1, 0.0, 1.0).is_err());
    }

    #[test]
    fn single_observation_conditional_equals_prior() {
        let prior = PriorConfig::default();
        let cond = k_conditional(1, 1, &prior).unwrap();
        let norm: f64 = (1..=prior.k_max).map(|k| log_prior_k(k, 1.0, 1.0).unwrap().exp()).sum();
        for (k, lp) in cond {
            let expect = log_prior_k(k, 1.0, 1.0).unwrap().exp() / norm;
            assert!((lp.exp() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn truncated_support_at_k_max() {
        let prior = PriorConfig::default();
        let cond = k_conditional(100, prior.k_max, &prior).unwrap();
        assert_eq!(cond.len(), 1);
        assert!(cond[0].1.abs() < 1e-15);
        assert!(k_conditional(100, prior.k_max + 1, &prior).is_err());
    }

    #[test]
    fn fifty_observations_two_clusters_mode_at_two() {
        let prior = PriorConfig::default();
        let cond = k_conditional(50, 2, &prior).unwrap();
        let mode = cond.iter().fold((0, f64::NEG_INFINITY), |best, (k, l)| if *l > best.1 { (*k, *l) } else { best });
        assert_eq!(mode.0, 2);
    }

    #[test]
    fn default_mode_is_one() {
        assert_eq!(prior_k_mode(&PriorConfig::default()), 1);
        assert_eq!(prior_k_mean(3.0, 2.0), Some(2.0));
        assert_eq!(prior_k_mean(1.0, 1.0), None);
    }
}
