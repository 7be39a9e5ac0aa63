use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kernel::{ObservationModel, Sampler};
use super::prior::prior_k_mode;
use super::{Draw, FitConfig, Method, MixtureState, PriorConfig, TraceSet};
use crate::data::DrugSample;
use crate::error::{Error, Result};

/// RNG for chain `chain` of a run seeded with `seed`. Chains share the seed
/// and differ by stream, so chain 0 reproduces a single-chain run.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

pub(crate) fn draw_from_state(iter: usize, state: &MixtureState, k_plus: usize, log_likelihood: f64) -> Draw {
    Draw {
        iter,
        k: state.k(),
        k_plus,
        weights: state.weights.clone(),
        means: state.means.clone(),
        sds: state.sds.clone(),
        allocations: state.allocations.iter().map(|z| *z as u16).collect(),
        log_likelihood,
    }
}

/// Runs one chain of `sampler` and keeps the thinned post-burnin draws.
pub(crate) fn run_sampler(
    sampler: &Sampler,
    method: Method,
    drug: &str,
    fit: &FitConfig,
    seed: u64,
    chain: usize,
) -> Result<TraceSet> {
    fit.validate()?;
    if sampler.n() == 0 {
        return Err(Error::Validation(format!("no observations for drug {drug}")));
    }
    let start = Instant::now();
    let mut rng = chain_rng(seed, chain);
    let mut state = match fit.init_k {
        Some(k) => sampler.initial_state(k, &mut rng)?,
        None => sampler.fitted_initial_state(prior_k_mode(sampler.prior()), &mut rng)?,
    };
    let mut draws = Vec::with_capacity(fit.retained_draws());
    let mut k_changes = 0usize;
    for iter in 1..=fit.iterations {
        let k_before = state.k();
        let k_plus = sampler.sweep(&mut state, &mut rng)?;
        if state.k() != k_before {
            k_changes += 1;
        }
        if iter > fit.burnin && (iter - fit.burnin) % fit.thin == 0 {
            let ll = sampler.log_likelihood(&state);
            draws.push(draw_from_state(iter, &state, k_plus, ll));
        }
    }
    log::debug!(
        "{} chain {chain} on {drug}: {} draws in {:.2}s",
        method.as_str(),
        draws.len(),
        start.elapsed().as_secs_f64()
    );
    Ok(TraceSet {
        method,
        drug: drug.to_string(),
        seed,
        chain,
        iterations: fit.iterations,
        burnin: fit.burnin,
        thin: fit.thin,
        draws,
        k_change_rate: k_changes as f64 / fit.iterations as f64,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// Single censored-mixture chain; identical to chain 0 of [`run_chains`].
pub fn run_chain(sample: &DrugSample, prior: &PriorConfig, fit: &FitConfig, seed: u64) -> Result<TraceSet> {
    let sampler = Sampler::new(sample, prior, ObservationModel::Censored, fit.strain_effect_sd)?;
    run_sampler(&sampler, Method::Cgmm, sample.drug_code(), fit, seed, 0)
}

/// `fit.chains` censored-mixture chains from `fit.seed`, run concurrently.
pub fn run_chains(sample: &DrugSample, prior: &PriorConfig, fit: &FitConfig) -> Result<Vec<TraceSet>> {
    let sampler = Sampler::new(sample, prior, ObservationModel::Censored, fit.strain_effect_sd)?;
    run_chains_with(fit.chains, |chain| run_sampler(&sampler, Method::Cgmm, sample.drug_code(), fit, fit.seed, chain))
}

/// Runs `chains` independent jobs on scoped threads and returns them in
/// chain order. The first error by chain index wins.
pub fn run_chains_with<F>(chains: usize, job: F) -> Result<Vec<TraceSet>>
where
    F: Fn(usize) -> Result<TraceSet> + Sync,
{
    let job = &job;
    let results: Vec<Result<TraceSet>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..chains).map(|c| scope.spawn(move || job(c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Numerical("chain thread panicked".into()))))
            .collect()
    });
    results.into_iter().collect()
}
