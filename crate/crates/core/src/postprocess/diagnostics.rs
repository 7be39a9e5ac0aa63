use serde::{Deserialize, Serialize};

use crate::cgmm::TraceSet;
use crate::error::{Error, Result};

const MIN_DRAWS: usize = 10;

fn check_chains(chains: &[Vec<f64>], min_chains: usize) -> Result<usize> {
    if chains.len() < min_chains {
        return Err(Error::Validation(format!("need at least {min_chains} chains, got {}", chains.len())));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::Validation("chains differ in length".into()));
    }
    if n < MIN_DRAWS {
        return Err(Error::Validation(format!("need at least {MIN_DRAWS} draws per chain, got {n}")));
    }
    Ok(n)
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn autocovariance(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    (0..n - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum::<f64>() / n as f64
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence
/// truncation of the combined autocorrelation. Capped at the total draw
/// count; a constant series counts as independent draws.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> Result<f64> {
    let n = check_chains(chains, 1)?;
    let m = chains.len();
    let total = (m * n) as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let acov0: Vec<f64> = chains.iter().zip(&means).map(|(c, mu)| autocovariance(c, *mu, 0)).collect();
    let nf = n as f64;
    let w = acov0.iter().map(|a| a * nf / (nf - 1.0)).sum::<f64>() / m as f64;
    let b_over_n = if m > 1 {
        let grand = mean(&means);
        means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (m as f64 - 1.0)
    } else {
        0.0
    };
    let var_plus = w * (nf - 1.0) / nf + b_over_n;
    if !(var_plus > 0.0) {
        return Ok(total);
    }
    let rho = |lag: usize| -> f64 {
        let acov = chains.iter().zip(&means).map(|(c, mu)| autocovariance(c, *mu, lag)).sum::<f64>() / m as f64;
        1.0 - (w - acov) / var_plus
    };
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let mut pair = rho(t) + rho(t + 1);
        if pair <= 0.0 {
            break;
        }
        pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        t += 2;
    }
    Ok((total / tau.max(1e-12)).min(total))
}

/// Split-chain potential scale reduction.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    let n = check_chains(chains, 2)?;
    let half = n / 2;
    let halves: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..half], &c[n - half..]]).collect();
    let h = half as f64;
    let means: Vec<f64> = halves.iter().map(|c| mean(c)).collect();
    let w = halves
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (h - 1.0))
        .sum::<f64>()
        / halves.len() as f64;
    let grand = mean(&means);
    let b = h * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (halves.len() as f64 - 1.0);
    if w <= 0.0 {
        return Ok(if b <= 0.0 { 1.0 } else { f64::INFINITY });
    }
    Ok((((h - 1.0) / h * w + b / h) / w).sqrt())
}

/// Geweke z-score comparing the first 10% of a chain with its last 50%,
/// standard errors from each segment's effective sample size.
pub fn geweke_z(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < MIN_DRAWS {
        return Err(Error::Validation(format!("need at least {MIN_DRAWS} draws, got {n}")));
    }
    let a = &series[..(n / 10).max(2)];
    let b = &series[n - n / 2..];
    let seg = |x: &[f64]| -> Result<(f64, f64)> {
        let m = mean(x);
        let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0);
        if var == 0.0 {
            return Ok((m, 0.0));
        }
        let ess = if x.len() >= MIN_DRAWS { effective_sample_size(&[x.to_vec()])? } else { x.len() as f64 };
        Ok((m, var / ess))
    };
    let (ma, va) = seg(a)?;
    let (mb, vb) = seg(b)?;
    let se = (va + vb).sqrt();
    if se == 0.0 {
        return Ok(if ma == mb { 0.0 } else { f64::INFINITY });
    }
    Ok((ma - mb) / se)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDiagnostics {
    pub name: String,
    pub ess: f64,
    pub rhat: f64,
    /// One z-score per chain.
    pub geweke_z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub chain: usize,
    pub seed: u64,
    pub draws: usize,
    /// Fraction of sweeps that changed the component count.
    pub k_change_rate: f64,
    /// Wall time; left out of the serialized report so reruns compare equal.
    #[serde(skip)]
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub method: String,
    pub drug: String,
    pub parameters: Vec<ParameterDiagnostics>,
    pub chains: Vec<ChainSummary>,
}

/// ESS, split R-hat and Geweke scores for the mean of occupied-component
/// means, the occupied-cluster count and the log-likelihood.
pub fn diagnostics(traces: &[TraceSet]) -> Result<DiagnosticsReport> {
    if traces.len() < 2 {
        return Err(Error::Validation(format!("diagnostics need at least 2 chains, got {}", traces.len())));
    }
    let series: [(&str, fn(&TraceSet) -> Vec<f64>); 3] = [
        ("mean_of_means", TraceSet::mean_of_means_series),
        ("k_plus", TraceSet::k_plus_series),
        ("log_likelihood", TraceSet::log_likelihood_series),
    ];
    let mut parameters = Vec::new();
    for (name, f) in series {
        let chains: Vec<Vec<f64>> = traces.iter().map(f).collect();
        parameters.push(ParameterDiagnostics {
            name: name.to_string(),
            ess: effective_sample_size(&chains)?,
            rhat: split_rhat(&chains)?,
            geweke_z: chains.iter().map(|c| geweke_z(c)).collect::<Result<_>>()?,
        });
    }
    Ok(DiagnosticsReport {
        method: traces[0].method.as_str().to_string(),
        drug: traces[0].drug.clone(),
        parameters,
        chains: traces
            .iter()
            .map(|t| ChainSummary {
                chain: t.chain,
                seed: t.seed,
                draws: t.draws.len(),
                k_change_rate: t.k_change_rate,
                runtime_secs: t.runtime_secs,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::sample_normal;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn iid(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| sample_normal(&mut rng, 0.0, 1.0)).collect()
    }

    fn ar1(seed: u64, n: usize, rho: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = sample_normal(&mut rng, 0.0, 1.0);
        (0..n)
            .map(|_| {
                x = rho * x + sample_normal(&mut rng, 0.0, (1.0 - rho * rho).sqrt());
                x
            })
            .collect()
    }

    #[test]
    fn iid_ess_near_n() {
        let chains = vec![iid(1, 5000), iid(2, 5000)];
        let r = effective_sample_size(&chains).unwrap() / 10_000.0;
        assert!((0.8..=1.2).contains(&r), "{r}");
    }

    #[test]
    fn ar1_ess_matches_formula() {
        let expect = 0.1 / 1.9;
        let chains = vec![ar1(3, 100_000, 0.9), ar1(4, 100_000, 0.9)];
        let r = effective_sample_size(&chains).unwrap() / 200_000.0;
        assert!((r - expect).abs() < 0.5 * expect, "{r} vs {expect}");
    }

    #[test]
    fn rhat_identical_chains_and_constants() {
        let c = iid(5, 1000);
        assert!((split_rhat(&[c.clone(), c.clone()]).unwrap() - 1.0).abs() < 1e-2);
        // Identical halves leave only the (h - 1)/h within-variance factor,
        // which is below 1e-6 away from one at this length.
        let long = iid(9, 1_000_000);
        let mut sym = long.clone();
        sym.extend_from_slice(&long);
        assert!((split_rhat(&[sym.clone(), sym]).unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(split_rhat(&[vec![2.0; 50], vec![2.0; 50]]).unwrap(), 1.0);
        assert_eq!(split_rhat(&[vec![2.0; 50], vec![3.0; 50]]).unwrap(), f64::INFINITY);
        assert_eq!(effective_sample_size(&[vec![1.0; 40], vec![1.0; 40]]).unwrap(), 80.0);
    }

    #[test]
    fn rhat_detects_disagreeing_chains() {
        let a = iid(6, 1000);
        let b: Vec<f64> = iid(7, 1000).iter().map(|x| x + 3.0).collect();
        assert!(split_rhat(&[a, b]).unwrap() > 1.5);
    }

    #[test]
    fn geweke_behaviour() {
        let z = geweke_z(&iid(8, 20_000)).unwrap();
        assert!(z.abs() < 4.0, "{z}");
        let shifted: Vec<f64> =
            iid(10, 2000).iter().enumerate().map(|(i, x)| x + if i < 1000 { 0.0 } else { 1.0 }).collect();
        assert!(geweke_z(&shifted).unwrap() < -5.0);
        assert_eq!(geweke_z(&[1.0; 20]).unwrap(), 0.0);
    }

    #[test]
    fn input_errors() {
        assert!(effective_sample_size(&[vec![0.0; 5]]).is_err());
        assert!(split_rhat(&[vec![0.0; 50]]).is_err());
        assert!(split_rhat(&[vec![0.0; 50], vec![0.0; 40]]).is_err());
        assert!(geweke_z(&[0.0; 9]).is_err());
    }
}
