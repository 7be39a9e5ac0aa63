use super::MixtureState;
use crate::stats::{log1m_exp, log_norm_cdf, log_norm_sf, norm_cdf, norm_sf};

/// Gaussian mass of the interval `(lower, upper)`.
///
/// Uses the survival function when the interval lies right of the mean and the
/// CDF when it lies left, so neither tail loses precision to cancellation.
pub fn cell_probability(mu: f64, sigma: f64, lower: f64, upper: f64) -> f64 {
    let a = (lower - mu) / sigma;
    let b = (upper - mu) / sigma;
    let p = if a >= 0.0 {
        norm_sf(a) - norm_sf(b)
    } else if b <= 0.0 {
        norm_cdf(b) - norm_cdf(a)
    } else {
        1.0 - norm_cdf(a) - norm_sf(b)
    };
    p.max(0.0)
}

/// Log of [`cell_probability`], finite far into the tails.
pub fn log_cell_probability(mu: f64, sigma: f64, lower: f64, upper: f64) -> f64 {
    let a = (lower - mu) / sigma;
    let b = (upper - mu) / sigma;
    if a >= 0.0 {
        let la = log_norm_sf(a);
        la + log1m_exp((log_norm_sf(b) - la).min(0.0))
    } else if b <= 0.0 {
        let lb = log_norm_cdf(b);
        lb + log1m_exp((log_norm_cdf(a) - lb).min(0.0))
    } else {
        (-(norm_cdf(a) + norm_sf(b))).ln_1p()
    }
}

/// Mixture probability that a single observation falls in `(lower, upper)`.
pub fn observation_pmf(state: &MixtureState, lower: f64, upper: f64) -> f64 {
    state
        .weights
        .iter()
        .zip(&state.means)
        .zip(&state.sds)
        .map(|((w, m), s)| w * cell_probability(*m, *s, lower, upper))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use libm::erf;

    const INF: f64 = f64::INFINITY;

    #[test]
    fn cell_probability_examples() {
        assert!((cell_probability(0.0, 1.0, -INF, 0.0) - 0.5).abs() < 1e-15);
        assert!((cell_probability(0.0, 1.0, -INF, INF) - 1.0).abs() < 1e-15);
        // erf(1/√2) oracle
        let oracle = erf(1.0 / std::f64::consts::SQRT_2);
        assert!((cell_probability(0.0, 1.0, -1.0, 1.0) - oracle).abs() < 1e-14);
        assert!((oracle - 0.682_689_492_137_085_9).abs() < 1e-15);
    }

    #[test]
    fn far_tail_cells_keep_relative_precision() {
        let p = cell_probability(0.0, 1.0, 10.0, 11.0);
        let expect = 7.619_661_958_203_076e-24; // Q(10) - Q(11), mpmath
        assert!(((p - expect) / expect).abs() < 1e-9);
        let lp = log_cell_probability(0.0, 1.0, 40.0, 41.0);
        assert!(lp.is_finite() && lp < -800.0);
        let lp = log_cell_probability(0.0, 1.0, -41.0, -40.0);
        assert!(lp.is_finite() && lp < -800.0);
    }

    #[test]
    fn log_form_agrees_with_linear_form() {
        for &(m, s, lo, hi) in &[
            (0.0, 1.0, -1.0, 1.0),
            (-4.0, 0.5, -3.0, -2.0),
            (2.0, 2.0, -INF, -1.0),
            (-1.0, 0.3, 0.0, INF),
            (0.0, 1.0, -INF, INF),
        ] {
            let lin = cell_probability(m, s, lo, hi);
            let lg = log_cell_probability(m, s, lo, hi);
            assert!((lg.exp() - lin).abs() < 1e-13 * lin.max(1e-300) + 1e-300, "{m} {s} {lo} {hi}");
        }
    }

    #[test]
    fn observation_pmf_two_component_example() {
        let state = MixtureState::with_params(vec![0.5, 0.5], vec![-4.0, -1.0], vec![1.0, 1.0]);
        // (-3, -2) standardizes to (1, 2) under mu = -4 and (-2, -1) under mu = -1.
        let expect = 0.5 * (norm_cdf(2.0) - norm_cdf(1.0)) + 0.5 * (norm_cdf(-1.0) - norm_cdf(-2.0));
        assert!((observation_pmf(&state, -3.0, -2.0) - expect).abs() < 1e-15);
        let expect = 0.5 * (norm_cdf(1.0) - norm_cdf(0.0)) + 0.5 * (norm_cdf(-2.0) - norm_cdf(-3.0));
        assert!((observation_pmf(&state, -4.0, -3.0) - expect).abs() < 1e-15);
        let single = MixtureState::with_params(vec![1.0], vec![0.3], vec![0.7]);
        assert_eq!(observation_pmf(&single, -1.0, 0.0), cell_probability(0.3, 0.7, -1.0, 0.0));
    }
}
