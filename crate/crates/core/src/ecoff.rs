//! Epidemiological cutoffs from a log-normal fit to the wild-type mode.
//!
//! The cumulative counts up to a subset end are fitted by
//! `C_j ≈ n Φ((d_j - μ) / σ)` with Levenberg–Marquardt; several subset ends
//! past the modal dilution are tried and the one with the smallest residual
//! sum of squares per fitted point wins.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::data::{DrugGrid, DrugSample};
use crate::error::{Error, Result};
use crate::stats::{norm_cdf, norm_pdf, norm_ppf};

const MAX_LM_ITERATIONS: usize = 200;
const GRID_TOL: f64 = 1e-9;

/// Quantiles reported by default.
pub const DEFAULT_QUANTILES: [f64; 3] = [0.95, 0.99, 0.999];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcoffCutoff {
    pub quantile: f64,
    /// `μ + z_q σ` on the log2 scale.
    pub x_q_log2: f64,
    pub cutoff_mg_l: f64,
    /// True when `x_q` lies above the top tested dilution and the censor label
    /// was returned instead.
    pub above_grid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcoffFit {
    pub drug: String,
    pub mu: f64,
    pub sigma: f64,
    pub n_fit: f64,
    /// 1-based dilution index of the last cumulative point fitted.
    pub subset_end: usize,
    pub rss: f64,
    pub lm_iterations: usize,
    pub cutoffs: Vec<EcoffCutoff>,
}

struct LmResult {
    theta: Vector3<f64>,
    rss: f64,
    iterations: usize,
}

fn residuals(theta: &Vector3<f64>, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<[f64; 3]>) {
    let (n, mu, sigma) = (theta[0], theta[1], theta[2].exp());
    let mut r = Vec::with_capacity(x.len());
    let mut jac = Vec::with_capacity(x.len());
    for (&d, &c) in x.iter().zip(y) {
        let z = (d - mu) / sigma;
        let phi = norm_pdf(z);
        r.push(c - n * norm_cdf(z));
        // derivatives of the residual with respect to (n, μ, ln σ)
        jac.push([-norm_cdf(z), n * phi / sigma, n * phi * z]);
    }
    (r, jac)
}

fn rss_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn levenberg_marquardt(start: Vector3<f64>, x: &[f64], y: &[f64]) -> Result<LmResult> {
    let mut theta = start;
    let (mut r, mut jac) = residuals(&theta, x, y);
    let mut rss = rss_of(&r);
    let mut lambda = 1e-3;
    let scale = y.iter().map(|v| v * v).sum::<f64>().max(1.0);
    for iter in 1..=MAX_LM_ITERATIONS {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (ri, ji) in r.iter().zip(&jac) {
            let j = Vector3::new(ji[0], ji[1], ji[2]);
            jtj += j * j.transpose();
            jtr += j * *ri;
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj;
            for d in 0..3 {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let cand = theta + step;
            let (rc, jc) = residuals(&cand, x, y);
            let rss_c = rss_of(&rc);
            if rss_c.is_finite() && rss_c <= rss {
                let gain = rss - rss_c;
                let small_step = step.norm() <= 1e-10 * (1.0 + theta.norm());
                theta = cand;
                r = rc;
                jac = jc;
                rss = rss_c;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if small_step || gain <= 1e-15 * scale {
                    return Ok(LmResult { theta, rss, iterations: iter });
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No descent direction left: a stationary point.
            return Ok(LmResult { theta, rss, iterations: iter });
        }
    }
    Err(Error::Convergence(format!(
        "Levenberg-Marquardt did not converge in {MAX_LM_ITERATIONS} iterations; best iterate n={:.4}, mu={:.4}, sigma={:.4}, rss={rss:.6e}",
        theta[0],
        theta[1],
        theta[2].exp()
    )))
}

/// Fits the wild-type log-normal to per-cell counts on `grid`.
///
/// `counts` has one entry per cell (left-censored cell first, right-censored
/// cell last); a vector of length `T` omits the right-censored cell.
pub fn fit_wildtype_lognormal(counts: &[f64], grid: &DrugGrid) -> Result<EcoffFit> {
    let t = grid.n_tested();
    if counts.len() != t && counts.len() != t + 1 {
        return Err(Error::Validation(format!(
            "expected {} or {} counts for drug {}, got {}",
            t,
            t + 1,
            grid.drug_code(),
            counts.len()
        )));
    }
    if counts.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
        return Err(Error::Validation("counts must be nonnegative".into()));
    }
    let mut mode = 0;
    for (j, c) in counts.iter().enumerate() {
        if *c > counts[mode] {
            mode = j;
        }
    }
    // 1-based from here on
    let mode = mode + 1;
    if counts[mode - 1] <= 0.0 {
        return Err(Error::Validation("all counts are zero".into()));
    }
    if mode == 1 || mode >= t {
        return Err(Error::Validation(format!(
            "no interior mode for drug {} (modal dilution index {mode}); choose the wild-type subset manually",
            grid.drug_code()
        )));
    }
    let d = grid.tested_log2();
    let cumulative: Vec<f64> = counts[..t]
        .iter()
        .scan(0.0, |acc, c| {
            *acc += c;
            Some(*acc)
        })
        .collect();

    let mut best: Option<(f64, EcoffFit)> = None;
    let mut last_error = None;
    for end in (mode + 1)..=(mode + 5).min(t) {
        let nonzero = counts[..end].iter().filter(|c| **c > 0.0).count();
        if nonzero < 3 {
            continue;
        }
        let x = &d[..end];
        let y = &cumulative[..end];
        // Moment starts from the subset's cells, each placed half a dilution
        // below its label.
        let total: f64 = counts[..end].iter().sum();
        let mid: Vec<f64> = d[..end].iter().map(|v| v - 0.5).collect();
        let m0 = counts[..end].iter().zip(&mid).map(|(c, v)| c * v).sum::<f64>() / total;
        let v0 = counts[..end].iter().zip(&mid).map(|(c, v)| c * (v - m0).powi(2)).sum::<f64>() / total;
        let start = Vector3::new(total, m0, v0.sqrt().max(0.3).ln());
        let fit = match levenberg_marquardt(start, x, y) {
            Ok(f) => f,
            Err(e) => {
                last_error = Some(e);
                continue;
            }
        };
        let sigma = fit.theta[2].exp();
        if !(sigma > 1e-6 && sigma.is_finite() && fit.theta[0] > 0.0) {
            last_error = Some(Error::Numerical(format!("degenerate fit at subset end {end}")));
            continue;
        }
        let score = fit.rss / end as f64;
        let candidate = EcoffFit {
            drug: grid.drug_code().to_string(),
            mu: fit.theta[1],
            sigma,
            n_fit: fit.theta[0],
            subset_end: end,
            rss: fit.rss,
            lm_iterations: fit.iterations,
            cutoffs: Vec::new(),
        };
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, candidate));
        }
    }
    match best {
        Some((_, mut fit)) => {
            fit.cutoffs = DEFAULT_QUANTILES.iter().map(|q| cutoff_row(&fit, *q, grid)).collect::<Result<_>>()?;
            Ok(fit)
        }
        None => Err(last_error.unwrap_or_else(|| {
            Error::Validation(format!(
                "fewer than 3 nonzero cells below every candidate subset end for drug {}",
                grid.drug_code()
            ))
        })),
    }
}

/// Fits the wild-type curve to one drug's recorded MICs.
pub fn fit_sample(sample: &DrugSample) -> Result<EcoffFit> {
    let counts: Vec<f64> = sample.cell_counts().iter().map(|c| *c as f64).collect();
    fit_wildtype_lognormal(&counts, sample.grid())
}

fn cutoff_row(fit: &EcoffFit, q: f64, grid: &DrugGrid) -> Result<EcoffCutoff> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("quantile {q} outside (0, 1)")));
    }
    let x_q = fit.mu + norm_ppf(q) * fit.sigma;
    let hit = grid.tested_log2().iter().find(|d| **d >= x_q - GRID_TOL);
    Ok(match hit {
        Some(d) => EcoffCutoff { quantile: q, x_q_log2: x_q, cutoff_mg_l: d.exp2(), above_grid: false },
        None => {
            EcoffCutoff { quantile: q, x_q_log2: x_q, cutoff_mg_l: grid.censor_label_log2().exp2(), above_grid: true }
        }
    })
}

/// Cutoff in mg/L: two to the power of the smallest tested dilution at or
/// above `μ + z_q σ`.
pub fn ecoff_cutoff(fit: &EcoffFit, q: f64, grid: &DrugGrid) -> Result<f64> {
    let row = cutoff_row(fit, q, grid)?;
    if row.above_grid {
        log::warn!("{}: quantile {q} lies above the top tested dilution; returning the censor label", grid.drug_code());
    }
    Ok(row.cutoff_mg_l)
}

/// One cutoff row per quantile, in the order given.
pub fn cutoff_table(fit: &EcoffFit, quantiles: &[f64], grid: &DrugGrid) -> Result<Vec<EcoffCutoff>> {
    quantiles.iter().map(|q| cutoff_row(fit, *q, grid)).collect()
}

/// Resistant flags: recorded MIC strictly above the cutoff.
pub fn classify_by_cutoff(sample: &DrugSample, drug: &str, cutoff_mg_l: f64) -> Result<Vec<bool>> {
    if sample.drug_code() != drug {
        return Err(Error::Validation(format!("cutoff for drug {drug} applied to data for {}", sample.drug_code())));
    }
    if !(cutoff_mg_l > 0.0 && cutoff_mg_l.is_finite()) {
        return Err(Error::Domain("cutoff must be a positive concentration".into()));
    }
    let threshold = cutoff_mg_l.log2() + GRID_TOL;
    Ok(sample.labels_log2().iter().map(|l| *l > threshold).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{simulate_dataset, MicObservation, SimSpec};

    fn grid() -> DrugGrid {
        DrugGrid::new("EMB", (-6..=4).map(f64::from).collect(), None).unwrap()
    }

    fn exact_counts(n: f64, mu: f64, sigma: f64, g: &DrugGrid) -> Vec<f64> {
        let bounds = g.all_bounds();
        bounds.iter().map(|(lo, hi)| n * (norm_cdf((hi - mu) / sigma) - norm_cdf((lo - mu) / sigma))).collect()
    }

    #[test]
    fn noise_free_curve_is_recovered() {
        let g = grid();
        let fit = fit_wildtype_lognormal(&exact_counts(5000.0, -2.0, 1.0, &g), &g).unwrap();
        assert!(fit.rss < 1e-6, "{}", fit.rss);
        assert!((fit.mu + 2.0).abs() < 1e-4);
        assert!((fit.sigma - 1.0).abs() < 1e-4);
        assert!((fit.n_fit - 5000.0).abs() < 1e-2);
    }

    #[test]
    fn cutoff_table_follows_requested_quantiles() {
        let g = grid();
        let fit = fit_wildtype_lognormal(&exact_counts(5000.0, -2.0, 1.0, &g), &g).unwrap();
        assert_eq!(cutoff_table(&fit, &DEFAULT_QUANTILES, &g).unwrap(), fit.cutoffs);
        let rows = cutoff_table(&fit, &[0.5, 0.99], &g).unwrap();
        assert_eq!(rows[0].cutoff_mg_l, 0.25);
        assert_eq!(rows[1].cutoff_mg_l, 2.0);
        assert!(cutoff_table(&fit, &[1.0], &g).is_err());
    }

    #[test]
    fn simulated_counts_recover_parameters() {
        for seed in 0..5 {
            let spec = SimSpec::new(grid(), 5000, vec![1.0], vec![-2.0], vec![1.0]).unwrap();
            let s = simulate_dataset(&spec, seed).unwrap().for_drug("EMB").unwrap();
            let fit = fit_sample(&s).unwrap();
            assert!((fit.mu + 2.0).abs() < 0.1, "seed {seed}: mu {}", fit.mu);
            assert!((fit.sigma - 1.0).abs() < 0.1, "seed {seed}: sigma {}", fit.sigma);
        }
    }

    #[test]
    fn degenerate_inputs_error() {
        let g = grid();
        let mut one = vec![0.0; g.n_cells()];
        one[5] = 100.0;
        assert!(fit_wildtype_lognormal(&one, &g).is_err());
        let monotone: Vec<f64> = (0..g.n_cells()).map(|j| (20 - j) as f64).collect();
        let err = fit_wildtype_lognormal(&monotone, &g).unwrap_err();
        assert!(err.to_string().contains("no interior mode"));
        assert!(fit_wildtype_lognormal(&[1.0, 2.0], &g).is_err());
    }

    fn fixed_fit(mu: f64, sigma: f64) -> EcoffFit {
        EcoffFit {
            drug: "EMB".into(),
            mu,
            sigma,
            n_fit: 1.0,
            subset_end: 3,
            rss: 0.0,
            lm_iterations: 0,
            cutoffs: vec![],
        }
    }

    #[test]
    fn cutoff_examples() {
        let g = grid();
        let f = fixed_fit(-2.0, 1.0);
        assert_eq!(ecoff_cutoff(&f, 0.99, &g).unwrap(), 2.0);
        assert_eq!(ecoff_cutoff(&f, 0.5, &g).unwrap(), 0.25);
        let sharp = fixed_fit(-2.3, 1e-9);
        for q in [0.5, 0.95, 0.999] {
            assert_eq!(ecoff_cutoff(&sharp, q, &g).unwrap(), 0.25);
        }
        assert!(ecoff_cutoff(&f, 1.0, &g).is_err());
        let high = fixed_fit(3.9, 1.0);
        assert_eq!(ecoff_cutoff(&high, 0.99, &g).unwrap(), 32.0);
    }

    #[test]
    fn cutoff_monotone_in_quantile_and_scale_equivariant() {
        let g = grid();
        let f = fixed_fit(-1.3, 0.8);
        let mut prev = 0.0;
        for i in 1..100 {
            let c = ecoff_cutoff(&f, i as f64 / 100.0, &g).unwrap();
            assert!(c >= prev);
            prev = c;
        }
        let g2 = g.shifted(1.0);
        let f2 = fixed_fit(-0.3, 0.8);
        for q in DEFAULT_QUANTILES {
            assert_eq!(ecoff_cutoff(&f2, q, &g2).unwrap(), 2.0 * ecoff_cutoff(&f, q, &g).unwrap());
        }
    }

    #[test]
    fn classification_fixture() {
        let g = grid();
        // 1-based indices: 1 is ≤ 1/64, 8 is 2 mg/L, 12 is the censor label 32.
        let idx = [1usize, 3, 5, 7, 8, 8, 9, 10, 11, 12];
        let obs = idx
            .iter()
            .enumerate()
            .map(|(i, j)| MicObservation {
                strain_id: format!("s{i}"),
                drug_code: "EMB".into(),
                dilution_index: *j,
                replicate_id: None,
            })
            .collect();
        let s = DrugSample::new(g, obs).unwrap();
        let got = classify_by_cutoff(&s, "EMB", 2.0).unwrap();
        let want = [false, false, false, false, false, false, true, true, true, true];
        assert_eq!(got, want);
        assert!(classify_by_cutoff(&s, "EMB", 64.0).unwrap().iter().all(|r| !r));
        assert!(classify_by_cutoff(&s, "INH", 2.0).is_err());
    }
}
