//! Data-driven starting values: EM for a censored Gaussian mixture on the
//! grouped cell counts, with the component count picked by BIC.

use super::likelihood::log_cell_probability;
use crate::stats::{logsumexp, norm_pdf, quantile_sorted};

const MAX_START_K: usize = 8;
const EM_ITERATIONS: usize = 500;
const EM_TOL: f64 = 1e-9;
const SD_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub log_likelihood: f64,
    pub bic: f64,
}

/// First two moments of a Gaussian restricted to `(lo, hi)`.
fn truncated_moments(mu: f64, sigma: f64, lo: f64, hi: f64, log_z: f64) -> (f64, f64) {
    let z = log_z.exp();
    if z < 1e-12 {
        let point = if hi <= mu {
            hi
        } else if lo >= mu {
            lo
        } else {
            mu
        };
        return (point, point * point);
    }
    let a = (lo - mu) / sigma;
    let b = (hi - mu) / sigma;
    let (pa, apa) = if a.is_finite() { (norm_pdf(a), a * norm_pdf(a)) } else { (0.0, 0.0) };
    let (pb, bpb) = if b.is_finite() { (norm_pdf(b), b * norm_pdf(b)) } else { (0.0, 0.0) };
    let d = (pa - pb) / z;
    let ex2 = 1.0 + (apa - bpb) / z;
    (mu + sigma * d, mu * mu + 2.0 * mu * sigma * d + sigma * sigma * ex2)
}

/// EM from the given start. Returns `None` if a component loses all mass.
pub fn em_censored(
    bounds: &[(f64, f64)],
    counts: &[usize],
    mut weights: Vec<f64>,
    mut means: Vec<f64>,
    mut sds: Vec<f64>,
) -> Option<EmFit> {
    let k = weights.len();
    let n: f64 = counts.iter().map(|c| *c as f64).sum();
    let cells: Vec<usize> = (0..counts.len()).filter(|c| counts[*c] > 0).collect();
    let mut prev = f64::NEG_INFINITY;
    let mut ll = prev;
    for _ in 0..EM_ITERATIONS {
        let mut mass = vec![0.0; k];
        let mut s1 = vec![0.0; k];
        let mut s2 = vec![0.0; k];
        ll = 0.0;
        for &c in &cells {
            let (lo, hi) = bounds[c];
            let logp: Vec<f64> = (0..k).map(|j| log_cell_probability(means[j], sds[j], lo, hi)).collect();
            let joint: Vec<f64> = (0..k).map(|j| weights[j].ln() + logp[j]).collect();
            let total = logsumexp(&joint);
            if !total.is_finite() {
                return None;
            }
            let nc = counts[c] as f64;
            ll += nc * total;
            for j in 0..k {
                let r = nc * (joint[j] - total).exp();
                let (m1, m2) = truncated_moments(means[j], sds[j], lo, hi, logp[j]);
                mass[j] += r;
                s1[j] += r * m1;
                s2[j] += r * m2;
            }
        }
        for j in 0..k {
            if mass[j] < 1e-6 {
                return None;
            }
            weights[j] = mass[j] / n;
            means[j] = s1[j] / mass[j];
            sds[j] = (s2[j] / mass[j] - means[j] * means[j]).max(0.0).sqrt().max(SD_FLOOR);
        }
        if (ll - prev).abs() <= EM_TOL * ll.abs().max(1.0) {
            break;
        }
        prev = ll;
    }
    let params = (3 * k - 1) as f64;
    Some(EmFit { weights, means, sds, log_likelihood: ll, bic: -2.0 * ll + params * n.ln() })
}

/// Best-BIC EM fit over `1..=min(k_max, 8, occupied cells)` components,
/// each started from equally spaced label quantiles.
pub fn select_start(bounds: &[(f64, f64)], labels: &[f64], counts: &[usize], k_max: usize) -> Option<EmFit> {
    let occupied = counts.iter().filter(|c| **c > 0).count();
    let mut values: Vec<f64> = Vec::new();
    for (c, &m) in counts.iter().enumerate() {
        values.extend(std::iter::repeat_n(labels[c], m));
    }
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt().max(0.5);
    let mut best: Option<EmFit> = None;
    for k in 1..=k_max.min(MAX_START_K).min(occupied.max(1)) {
        let means = (0..k).map(|j| quantile_sorted(&values, (j as f64 + 0.5) / k as f64) + 1e-6 * j as f64).collect();
        let Some(fit) = em_censored(bounds, counts, vec![1.0 / k as f64; k], means, vec![sd / k as f64; k]) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| fit.bic < b.bic) {
            best = Some(fit);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::norm_cdf;

    fn grid_bounds(lo: i32, hi: i32) -> (Vec<(f64, f64)>, Vec<f64>) {
        let d: Vec<f64> = (lo..=hi).map(f64::from).collect();
        let mut b = vec![(f64::NEG_INFINITY, d[0])];
        for w in d.windows(2) {
            b.push((w[0], w[1]));
        }
        b.push((d[d.len() - 1], f64::INFINITY));
        let mut labels = d.clone();
        labels.push(d[d.len() - 1] + 1.0);
        (b, labels)
    }

    /// Expected counts of a mixture, rounded.
    fn counts(bounds: &[(f64, f64)], w: &[f64], m: &[f64], s: &[f64], n: f64) -> Vec<usize> {
        bounds
            .iter()
            .map(|(lo, hi)| {
                let p: f64 =
                    (0..w.len()).map(|j| w[j] * (norm_cdf((hi - m[j]) / s[j]) - norm_cdf((lo - m[j]) / s[j]))).sum();
                (p * n).round() as usize
            })
            .collect()
    }

    #[test]
    fn truncated_moments_match_closed_forms() {
        // Half-normal: mean sqrt(2/pi), second moment 1.
        let (m1, m2) = truncated_moments(0.0, 1.0, 0.0, f64::INFINITY, 0.5f64.ln());
        assert!((m1 - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
        assert!((m2 - 1.0).abs() < 1e-12);
        let (m1, m2) = truncated_moments(3.0, 2.0, f64::NEG_INFINITY, f64::INFINITY, 0.0);
        assert!((m1 - 3.0).abs() < 1e-12 && (m2 - 13.0).abs() < 1e-12);
    }

    #[test]
    fn recovers_censored_two_component_mixture() {
        let (b, labels) = grid_bounds(-4, 4);
        let c = counts(&b, &[0.7, 0.3], &[-2.0, 5.0], &[0.6, 1.0], 1e6);
        let fit = select_start(&b, &labels, &c, 30).unwrap();
        assert_eq!(fit.means.len(), 2);
        assert!((fit.means[0] + 2.0).abs() < 0.02 && (fit.means[1] - 5.0).abs() < 0.05, "{:?}", fit.means);
        assert!((fit.sds[1] - 1.0).abs() < 0.05, "{:?}", fit.sds);
    }

    #[test]
    fn single_cluster_prefers_one_component() {
        let (b, labels) = grid_bounds(-6, 6);
        let c = counts(&b, &[1.0], &[0.3], &[1.0], 2000.0);
        assert_eq!(select_start(&b, &labels, &c, 30).unwrap().means.len(), 1);
        assert!(select_start(&b, &labels, &vec![0; b.len()], 30).is_none());
    }
}
