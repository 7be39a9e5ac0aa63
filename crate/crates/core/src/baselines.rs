//! Comparison methods: an uncensored Gaussian mixture and a Dirichlet-process
//! mixture over the same censored-latent augmentation.

use std::time::Instant;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::cgmm::{
    chain_rng, log_cell_probability, run_sampler, sample_truncated_normal, Draw, FitConfig, Method, ObservationModel,
    PriorConfig, Sampler, TraceSet,
};
use crate::data::DrugSample;
use crate::error::{Error, Result};
use crate::stats::{logsumexp, sample_gamma, sample_log_categorical, sample_normal};

/// Gaussian mixture with the BNB prior on K that treats each recorded log2
/// label as an exact value. Boundary cells take their labels: the left cell
/// the lowest dilution, the right cell the censor label.
pub fn run_gm_chain(sample: &DrugSample, prior: &PriorConfig, fit: &FitConfig, seed: u64) -> Result<TraceSet> {
    let sampler = Sampler::new(sample, prior, ObservationModel::Exact, fit.strain_effect_sd)?;
    run_sampler(&sampler, Method::Gm, sample.drug_code(), fit, seed, 0)
}

/// Chain `chain` of the Gaussian mixture baseline.
pub fn run_gm_chain_indexed(
    sample: &DrugSample,
    prior: &PriorConfig,
    fit: &FitConfig,
    seed: u64,
    chain: usize,
) -> Result<TraceSet> {
    let sampler = Sampler::new(sample, prior, ObservationModel::Exact, fit.strain_effect_sd)?;
    run_sampler(&sampler, Method::Gm, sample.drug_code(), fit, seed, chain)
}

/// Settings of the Dirichlet-process baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpConfig {
    /// Gamma shape of the concentration prior.
    pub alpha_shape: f64,
    /// Gamma rate of the concentration prior.
    pub alpha_rate: f64,
    /// Holds the concentration at this value instead of sampling it.
    pub fixed_alpha: Option<f64>,
    /// Auxiliary components per allocation update.
    pub m: usize,
    pub iterations: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for DpConfig {
    fn default() -> Self {
        Self {
            alpha_shape: 1.0,
            alpha_rate: 1.0,
            fixed_alpha: None,
            m: 3,
            iterations: 1_000_000,
            burnin: 100_000,
            thin: 10,
            seed: 0,
        }
    }
}

impl DpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::Validation("DP auxiliary count m must be at least 1".into()));
        }
        if !(self.alpha_shape > 0.0 && self.alpha_rate > 0.0) {
            return Err(Error::Validation("DP concentration prior must have positive parameters".into()));
        }
        if let Some(a) = self.fixed_alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::Validation("fixed DP concentration must be positive".into()));
            }
        }
        self.as_fit().validate()
    }

    fn as_fit(&self) -> FitConfig {
        FitConfig {
            iterations: self.iterations,
            burnin: self.burnin,
            thin: self.thin,
            seed: self.seed,
            chains: 1,
            strain_effect_sd: None,
            init_k: None,
        }
    }
}

struct Cluster {
    mean: f64,
    sd: f64,
    count: usize,
}

fn prior_draw<R: Rng + ?Sized>(prior: &PriorConfig, rng: &mut R) -> (f64, f64) {
    let mean = sample_normal(rng, prior.mu0, prior.tau2.sqrt());
    let sd = sample_gamma(rng, prior.prec_shape, prior.prec_rate).sqrt().recip();
    (mean, sd)
}

/// Dirichlet-process mixture chain with censored latent values, using
/// auxiliary-component allocation updates and an augmented Gamma update for
/// the concentration.
pub fn run_dp_chain(sample: &DrugSample, dp: &DpConfig, prior: &PriorConfig, seed: u64) -> Result<TraceSet> {
    run_dp_chain_indexed(sample, dp, prior, seed, 0)
}

/// Chain `chain` of the DP baseline.
pub fn run_dp_chain_indexed(
    sample: &DrugSample,
    dp: &DpConfig,
    prior: &PriorConfig,
    seed: u64,
    chain: usize,
) -> Result<TraceSet> {
    dp.validate()?;
    prior.validate()?;
    let n = sample.len();
    if n == 0 {
        return Err(Error::Validation(format!("no observations for drug {}", sample.drug_code())));
    }
    let start = Instant::now();
    let mut rng = chain_rng(seed, chain);
    let bounds = sample.grid().all_bounds();
    let cells = sample.cells();
    let labels = sample.labels_log2();

    let mean0 = labels.iter().sum::<f64>() / n as f64;
    let var0 = labels.iter().map(|v| (v - mean0).powi(2)).sum::<f64>() / n.max(2) as f64;
    let mut clusters = vec![Cluster { mean: mean0, sd: if var0 > 0.0 { var0.sqrt() } else { 1.0 }, count: n }];
    let mut z = vec![0usize; n];
    let mut latent = vec![0.0; n];
    let mut alpha = dp.fixed_alpha.unwrap_or(dp.alpha_shape / dp.alpha_rate);

    let m = dp.m;
    let mut aux = vec![(0.0, 1.0); m];
    let mut logp: Vec<f64> = Vec::new();
    let mut draws = Vec::with_capacity(dp.as_fit().retained_draws());
    let mut k_changes = 0usize;

    for iter in 1..=dp.iterations {
        let k_before = clusters.iter().filter(|c| c.count > 0).count();

        // Allocations with the latent value integrated out.
        for i in 0..n {
            let (lo, hi) = bounds[cells[i]];
            let old = z[i];
            clusters[old].count -= 1;
            let singleton = clusters[old].count == 0;
            for (j, a) in aux.iter_mut().enumerate() {
                if j == 0 && singleton {
                    *a = (clusters[old].mean, clusters[old].sd);
                } else {
                    *a = prior_draw(prior, &mut rng);
                }
            }
            logp.clear();
            for c in &clusters {
                logp.push(if c.count == 0 {
                    f64::NEG_INFINITY
                } else {
                    (c.count as f64).ln() + log_cell_probability(c.mean, c.sd, lo, hi)
                });
            }
            let log_share = (alpha / m as f64).ln();
            for &(mu, sd) in &aux {
                logp.push(log_share + log_cell_probability(mu, sd, lo, hi));
            }
            let pick = sample_log_categorical(&mut rng, &logp)?;
            let target = if pick < clusters.len() {
                pick
            } else {
                let (mean, sd) = aux[pick - clusters.len()];
                match clusters.iter().position(|c| c.count == 0) {
                    Some(slot) => {
                        clusters[slot] = Cluster { mean, sd, count: 0 };
                        slot
                    }
                    None => {
                        clusters.push(Cluster { mean, sd, count: 0 });
                        clusters.len() - 1
                    }
                }
            };
            clusters[target].count += 1;
            z[i] = target;
        }

        // Drop empty clusters, keeping first-occurrence order.
        let mut remap = vec![usize::MAX; clusters.len()];
        let mut kept = Vec::new();
        for (j, c) in clusters.into_iter().enumerate() {
            if c.count > 0 {
                remap[j] = kept.len();
                kept.push(c);
            }
        }
        clusters = kept;
        for zi in z.iter_mut() {
            *zi = remap[*zi];
        }
        let k = clusters.len();
        if k != k_before {
            k_changes += 1;
        }

        for i in 0..n {
            let c = &clusters[z[i]];
            let (lo, hi) = bounds[cells[i]];
            latent[i] = sample_truncated_normal(&mut rng, c.mean, c.sd, lo, hi);
        }

        let mut sum = vec![0.0; k];
        let mut ss = vec![0.0; k];
        for i in 0..n {
            sum[z[i]] += latent[i];
            ss[z[i]] += (latent[i] - clusters[z[i]].mean).powi(2);
        }
        for (j, c) in clusters.iter_mut().enumerate() {
            let precision =
                sample_gamma(&mut rng, prior.prec_shape + 0.5 * c.count as f64, prior.prec_rate + 0.5 * ss[j]);
            let post_prec = 1.0 / prior.tau2 + c.count as f64 * precision;
            let post_mean = (prior.mu0 / prior.tau2 + precision * sum[j]) / post_prec;
            c.mean = sample_normal(&mut rng, post_mean, post_prec.sqrt().recip());
            c.sd = precision.sqrt().recip();
        }

        if dp.fixed_alpha.is_none() {
            alpha = update_concentration(alpha, k, n, dp.alpha_shape, dp.alpha_rate, &mut rng);
        }

        if iter > dp.burnin && (iter - dp.burnin) % dp.thin == 0 {
            let weights: Vec<f64> = clusters.iter().map(|c| c.count as f64 / n as f64).collect();
            let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
            let ll: f64 = cells
                .iter()
                .map(|&cell| {
                    let (lo, hi) = bounds[cell];
                    let terms: Vec<f64> = clusters
                        .iter()
                        .zip(&log_w)
                        .map(|(c, lw)| lw + log_cell_probability(c.mean, c.sd, lo, hi))
                        .collect();
                    logsumexp(&terms)
                })
                .sum();
            draws.push(Draw {
                iter,
                k,
                k_plus: k,
                weights,
                means: clusters.iter().map(|c| c.mean).collect(),
                sds: clusters.iter().map(|c| c.sd).collect(),
                allocations: z.iter().map(|v| *v as u16).collect(),
                log_likelihood: ll,
            });
        }
    }
    Ok(TraceSet {
        method: Method::Dp,
        drug: sample.drug_code().to_string(),
        seed,
        chain,
        iterations: dp.iterations,
        burnin: dp.burnin,
        thin: dp.thin,
        draws,
        k_change_rate: k_changes as f64 / dp.iterations as f64,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// Auxiliary-variable Gibbs update of the DP concentration under a
/// `Gamma(shape, rate)` prior, given `k` clusters among `n` observations.
pub fn update_concentration<R: Rng + ?Sized>(
    alpha: f64,
    k: usize,
    n: usize,
    shape: f64,
    rate: f64,
    rng: &mut R,
) -> f64 {
    let eta: f64 = Beta::new(alpha + 1.0, n as f64).unwrap().sample(rng);
    let rate_post = rate - eta.ln();
    let odds = (shape + k as f64 - 1.0) / (n as f64 * rate_post);
    let shape_post = if rng.random::<f64>() < odds / (1.0 + odds) { shape + k as f64 } else { shape + k as f64 - 1.0 };
    sample_gamma(rng, shape_post, rate_post)
}
