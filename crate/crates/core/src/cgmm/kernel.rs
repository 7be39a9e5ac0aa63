use rand::Rng;

use super::init::select_start;
use super::likelihood::log_cell_probability;
use super::prior::{k_conditional, log_prior_k};
use super::truncnorm::sample_truncated_normal;
use super::{MixtureState, PriorConfig};
use crate::data::DrugSample;
use crate::error::{Error, Result};
use crate::stats::{
    logsumexp, norm_logpdf, quantile_sorted, sample_dirichlet, sample_gamma, sample_log_categorical, sample_normal,
};

/// How a recorded dilution informs the component densities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservationModel {
    /// The recorded cell is an interval for a latent Gaussian value.
    Censored,
    /// The recorded log2 label is taken as an exact Gaussian observation.
    Exact,
}

/// Gibbs kernel for one drug's data.
#[derive(Debug, Clone)]
pub struct Sampler {
    prior: PriorConfig,
    model: ObservationModel,
    cells: Vec<usize>,
    bounds: Vec<(f64, f64)>,
    labels: Vec<f64>,
    strain_of: Vec<usize>,
    n_strains: usize,
    strain_sd: Option<f64>,
    log_prior_k: Vec<f64>,
}

impl Sampler {
    pub fn new(
        sample: &DrugSample,
        prior: &PriorConfig,
        model: ObservationModel,
        strain_sd: Option<f64>,
    ) -> Result<Self> {
        prior.validate()?;
        let grid = sample.grid();
        let log_prior_k = (0..=prior.k_max)
            .map(|k| if k == 0 { f64::NEG_INFINITY } else { log_prior_k(k, prior.bnb_alpha, prior.bnb_beta).unwrap() })
            .collect();
        Ok(Self {
            prior: prior.clone(),
            model,
            cells: sample.cells(),
            bounds: grid.all_bounds(),
            labels: (1..=grid.n_cells()).map(|j| grid.label_log2(j).unwrap()).collect(),
            strain_of: sample.strain_of().to_vec(),
            n_strains: sample.n_strains(),
            strain_sd,
            log_prior_k,
        })
    }

    pub fn prior(&self) -> &PriorConfig {
        &self.prior
    }

    pub fn model(&self) -> ObservationModel {
        self.model
    }

    pub fn n(&self) -> usize {
        self.cells.len()
    }

    pub fn n_cells(&self) -> usize {
        self.bounds.len()
    }

    /// 0-based cell of each observation.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Replaces the observed cells (same grid, same strains).
    pub fn set_cells(&mut self, cells: Vec<usize>) {
        assert_eq!(cells.len(), self.cells.len());
        assert!(cells.iter().all(|c| *c < self.bounds.len()));
        self.cells = cells;
    }

    /// Latent interval of each observation.
    pub fn observation_bounds(&self) -> Vec<(f64, f64)> {
        self.cells.iter().map(|c| self.bounds[*c]).collect()
    }

    pub fn cell_bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    fn shift(&self, state: &MixtureState, i: usize) -> f64 {
        if state.strain_effects.is_empty() {
            0.0
        } else {
            state.strain_effects[self.strain_of[i]]
        }
    }

    fn component_loglik(&self, mu: f64, sigma: f64, cell: usize) -> f64 {
        match self.model {
            ObservationModel::Censored => {
                let (lo, hi) = self.bounds[cell];
                log_cell_probability(mu, sigma, lo, hi)
            }
            ObservationModel::Exact => norm_logpdf(self.labels[cell], mu, sigma),
        }
    }

    /// Deterministic, dispersed starting state with `k` components: means at
    /// equally spaced quantiles of the recorded labels, a common sd, nearest-mean
    /// allocations.
    pub fn initial_state<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<MixtureState> {
        let n = self.n();
        if n == 0 {
            return Err(Error::Validation("cannot fit an empty dataset".into()));
        }
        let k = k.clamp(1, self.prior.k_max);
        let values: Vec<f64> = self.cells.iter().map(|c| self.labels[*c]).collect();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let means: Vec<f64> =
            (0..k).map(|j| quantile_sorted(&sorted, (j as f64 + 0.5) / k as f64) + 1e-6 * j as f64).collect();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n.max(2) as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        let allocations: Vec<usize> = values
            .iter()
            .map(|v| {
                let mut best = 0;
                for j in 1..k {
                    if (v - means[j]).abs() < (v - means[best]).abs() {
                        best = j;
                    }
                }
                best
            })
            .collect();
        let mut counts = vec![0usize; k];
        for &z in &allocations {
            counts[z] += 1;
        }
        let denom = n as f64 + k as f64 * self.prior.delta;
        let weights = counts.iter().map(|c| (*c as f64 + self.prior.delta) / denom).collect();
        let mut state = MixtureState {
            weights,
            means,
            sds: vec![sd; k],
            allocations,
            latent: Vec::new(),
            strain_effects: if self.strain_sd.is_some() { vec![0.0; self.n_strains] } else { Vec::new() },
        };
        state.latent = self.draw_latent(&state, &state.allocations, rng);
        Ok(state)
    }

    /// Starting state from the best-BIC censored EM fit to the cell counts,
    /// allocations by largest responsibility. Falls back to
    /// [`Sampler::initial_state`] at `fallback_k` if EM fails.
    pub fn fitted_initial_state<R: Rng + ?Sized>(&self, fallback_k: usize, rng: &mut R) -> Result<MixtureState> {
        let mut counts = vec![0usize; self.n_cells()];
        for &c in &self.cells {
            counts[c] += 1;
        }
        let Some(fit) = select_start(&self.bounds, &self.labels, &counts, self.prior.k_max) else {
            return self.initial_state(fallback_k, rng);
        };
        let k = fit.weights.len();
        let best_per_cell: Vec<usize> = self
            .bounds
            .iter()
            .map(|(lo, hi)| {
                (0..k)
                    .map(|j| (j, fit.weights[j].ln() + log_cell_probability(fit.means[j], fit.sds[j], *lo, *hi)))
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .map_or(0, |(j, _)| j)
            })
            .collect();
        let mut state = MixtureState {
            weights: fit.weights,
            means: fit.means,
            sds: fit.sds,
            allocations: self.cells.iter().map(|c| best_per_cell[*c]).collect(),
            latent: Vec::new(),
            strain_effects: if self.strain_sd.is_some() { vec![0.0; self.n_strains] } else { Vec::new() },
        };
        state.latent = self.draw_latent(&state, &state.allocations, rng);
        Ok(state)
    }

    /// Draws every allocation from `π_k · p(cell_i | μ_k, σ_k)`, with the
    /// latent value integrated out.
    pub fn draw_allocations<R: Rng + ?Sized>(&self, state: &MixtureState, rng: &mut R) -> Result<Vec<usize>> {
        let k = state.k();
        let log_w: Vec<f64> = state.weights.iter().map(|w| w.ln()).collect();
        if state.strain_effects.is_empty() {
            // Without strain shifts the conditional depends only on the cell.
            let mut table: Vec<Option<Vec<f64>>> = vec![None; self.n_cells()];
            let mut out = Vec::with_capacity(self.n());
            for &c in &self.cells {
                if table[c].is_none() {
                    let lw: Vec<f64> =
                        (0..k).map(|j| log_w[j] + self.component_loglik(state.means[j], state.sds[j], c)).collect();
                    let lse = logsumexp(&lw);
                    if !lse.is_finite() {
                        return Err(Error::Numerical(format!("allocation weights underflow for cell {}", c + 1)));
                    }
                    let mut acc = 0.0;
                    let cum: Vec<f64> = lw
                        .iter()
                        .map(|l| {
                            acc += (l - lse).exp();
                            acc
                        })
                        .collect();
                    table[c] = Some(cum);
                }
                let cum = table[c].as_ref().unwrap();
                let u = rng.random::<f64>() * cum[k - 1];
                let z =
                    cum.iter().position(|p| u < *p).unwrap_or_else(|| cum.iter().rposition(|p| *p > 0.0).unwrap_or(0));
                out.push(z);
            }
            Ok(out)
        } else {
            let mut lw = vec![0.0; k];
            (0..self.n())
                .map(|i| {
                    let shift = self.shift(state, i);
                    for j in 0..k {
                        lw[j] = log_w[j] + self.component_loglik(state.means[j] + shift, state.sds[j], self.cells[i]);
                    }
                    sample_log_categorical(rng, &lw)
                })
                .collect()
        }
    }

    /// Truncated-normal draw of each latent value given its component.
    /// Under the exact model the latent values are the recorded labels.
    pub fn draw_latent<R: Rng + ?Sized>(&self, state: &MixtureState, allocations: &[usize], rng: &mut R) -> Vec<f64> {
        match self.model {
            ObservationModel::Exact => self.cells.iter().map(|c| self.labels[*c]).collect(),
            ObservationModel::Censored => (0..self.n())
                .map(|i| {
                    let z = allocations[i];
                    let (lo, hi) = self.bounds[self.cells[i]];
                    sample_truncated_normal(rng, state.means[z] + self.shift(state, i), state.sds[z], lo, hi)
                })
                .collect(),
        }
    }

    /// Conjugate precision-then-mean update for each component; empty
    /// components draw from the prior.
    pub fn draw_component_params<R: Rng + ?Sized>(&self, state: &MixtureState, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let k = state.k();
        let mut n_k = vec![0usize; k];
        let mut sum = vec![0.0; k];
        for (i, &z) in state.allocations.iter().enumerate() {
            n_k[z] += 1;
            sum[z] += state.latent[i] - self.shift(state, i);
        }
        let mut ss = vec![0.0; k];
        for (i, &z) in state.allocations.iter().enumerate() {
            ss[z] += (state.latent[i] - self.shift(state, i) - state.means[z]).powi(2);
        }
        let p = &self.prior;
        let mut means = Vec::with_capacity(k);
        let mut sds = Vec::with_capacity(k);
        for j in 0..k {
            let precision = sample_gamma(rng, p.prec_shape + 0.5 * n_k[j] as f64, p.prec_rate + 0.5 * ss[j]);
            let (m, v) = normal_posterior(p, n_k[j], sum[j], precision);
            means.push(sample_normal(rng, m, v.sqrt()));
            sds.push(precision.sqrt().recip());
        }
        (means, sds)
    }

    /// Conjugate Gaussian update of the per-strain intercepts.
    fn draw_strain_effects<R: Rng + ?Sized>(&self, state: &MixtureState, rng: &mut R) -> Vec<f64> {
        let Some(sd) = self.strain_sd else {
            return Vec::new();
        };
        let mut prec = vec![1.0 / (sd * sd); self.n_strains];
        let mut lin = vec![0.0; self.n_strains];
        for i in 0..self.n() {
            let z = state.allocations[i];
            let s = self.strain_of[i];
            let tau = 1.0 / (state.sds[z] * state.sds[z]);
            prec[s] += tau;
            lin[s] += tau * (state.latent[i] - state.means[z]);
        }
        prec.iter().zip(&lin).map(|(p, l)| sample_normal(rng, l / p, p.sqrt().recip())).collect()
    }

    /// Drops empty components, draws K from its conditional given the
    /// partition, appends fresh empty components from the prior and refreshes
    /// the weights. Returns the occupied count.
    pub fn update_k<R: Rng + ?Sized>(&self, state: &mut MixtureState, rng: &mut R) -> Result<usize> {
        let counts = state.counts();
        let mut new_index = vec![usize::MAX; state.k()];
        let mut means = Vec::new();
        let mut sds = Vec::new();
        let mut occupied = Vec::new();
        for (j, &c) in counts.iter().enumerate() {
            if c > 0 {
                new_index[j] = means.len();
                means.push(state.means[j]);
                sds.push(state.sds[j]);
                occupied.push(c);
            }
        }
        let k_plus = means.len();
        for z in state.allocations.iter_mut() {
            *z = new_index[*z];
        }
        let cond = k_conditional(self.n(), k_plus, &self.prior)?;
        let logs: Vec<f64> = cond.iter().map(|(_, l)| *l).collect();
        let k = cond[sample_log_categorical(rng, &logs)?].0;
        let p = &self.prior;
        for _ in k_plus..k {
            means.push(sample_normal(rng, p.mu0, p.tau2.sqrt()));
            sds.push(sample_gamma(rng, p.prec_shape, p.prec_rate).sqrt().recip());
        }
        let alpha: Vec<f64> = (0..k).map(|j| p.delta + occupied.get(j).copied().unwrap_or(0) as f64).collect();
        state.weights = sample_dirichlet(rng, &alpha);
        state.means = means;
        state.sds = sds;
        Ok(k_plus)
    }

    /// One full sweep; returns the occupied-cluster count after the K move.
    pub fn sweep<R: Rng + ?Sized>(&self, state: &mut MixtureState, rng: &mut R) -> Result<usize> {
        state.allocations = self.draw_allocations(state, rng)?;
        state.latent = self.draw_latent(state, &state.allocations, rng);
        let (means, sds) = self.draw_component_params(state, rng);
        state.means = means;
        state.sds = sds;
        state.weights = update_weights(&state.allocations, self.prior.delta, state.k(), rng);
        if self.strain_sd.is_some() {
            state.strain_effects = self.draw_strain_effects(state, rng);
        }
        self.update_k(state, rng)
    }

    /// Observed-data log-likelihood of the mixture (latent values and
    /// allocations integrated out).
    pub fn log_likelihood(&self, state: &MixtureState) -> f64 {
        let k = state.k();
        let log_w: Vec<f64> = state.weights.iter().map(|w| w.ln()).collect();
        let mut lw = vec![0.0; k];
        let term = |shift: f64, cell: usize, lw: &mut Vec<f64>| {
            for j in 0..k {
                lw[j] = log_w[j] + self.component_loglik(state.means[j] + shift, state.sds[j], cell);
            }
            logsumexp(lw)
        };
        if state.strain_effects.is_empty() {
            let mut counts = vec![0usize; self.n_cells()];
            for &c in &self.cells {
                counts[c] += 1;
            }
            counts.iter().enumerate().filter(|(_, n)| **n > 0).map(|(c, n)| *n as f64 * term(0.0, c, &mut lw)).sum()
        } else {
            (0..self.n()).map(|i| term(self.shift(state, i), self.cells[i], &mut lw)).sum()
        }
    }

    /// Log prior mass of K under the truncated prior (unnormalized).
    pub fn log_prior_k(&self, k: usize) -> f64 {
        self.log_prior_k[k]
    }
}

/// Posterior mean and variance of a component mean given `n` assigned values
/// summing to `sum` and a known precision.
pub(crate) fn normal_posterior(prior: &PriorConfig, n: usize, sum: f64, precision: f64) -> (f64, f64) {
    let post_prec = 1.0 / prior.tau2 + n as f64 * precision;
    let mean = (prior.mu0 / prior.tau2 + precision * sum) / post_prec;
    (mean, 1.0 / post_prec)
}

/// Allocation draw for a censored-model state on `sample`.
pub fn sample_allocations<R: Rng + ?Sized>(
    state: &MixtureState,
    sample: &DrugSample,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let prior = PriorConfig { k_max: state.k().max(1), ..PriorConfig::default() };
    Sampler::new(sample, &prior, ObservationModel::Censored, None)?.draw_allocations(state, rng)
}

/// Latent draw for a censored-model state on `sample`.
pub fn sample_latent<R: Rng + ?Sized>(
    state: &MixtureState,
    allocations: &[usize],
    sample: &DrugSample,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if allocations.len() != sample.len() {
        return Err(Error::Validation("allocations do not match the data".into()));
    }
    let prior = PriorConfig { k_max: state.k().max(1), ..PriorConfig::default() };
    Ok(Sampler::new(sample, &prior, ObservationModel::Censored, None)?.draw_latent(state, allocations, rng))
}

/// Conjugate draws of component means and sds from the latent values.
/// `current_means` enters the precision update.
pub fn update_component_params<R: Rng + ?Sized>(
    latent: &[f64],
    allocations: &[usize],
    current_means: &[f64],
    prior: &PriorConfig,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let k = current_means.len();
    let mut n_k = vec![0usize; k];
    let mut sum = vec![0.0; k];
    let mut ss = vec![0.0; k];
    for (y, &z) in latent.iter().zip(allocations) {
        n_k[z] += 1;
        sum[z] += y;
        ss[z] += (y - current_means[z]).powi(2);
    }
    let mut means = Vec::with_capacity(k);
    let mut sds = Vec::with_capacity(k);
    for j in 0..k {
        let precision = sample_gamma(rng, prior.prec_shape + 0.5 * n_k[j] as f64, prior.prec_rate + 0.5 * ss[j]);
        let (m, v) = normal_posterior(prior, n_k[j], sum[j], precision);
        means.push(sample_normal(rng, m, v.sqrt()));
        sds.push(precision.sqrt().recip());
    }
    (means, sds)
}

/// `π ~ Dirichlet(δ + n_1, ..., δ + n_K)`.
pub fn update_weights<R: Rng + ?Sized>(allocations: &[usize], delta: f64, k: usize, rng: &mut R) -> Vec<f64> {
    let mut alpha = vec![delta; k];
    for &z in allocations {
        alpha[z] += 1.0;
    }
    sample_dirichlet(rng, &alpha)
}

/// Trans-dimensional K move on a censored-model state; see [`Sampler::update_k`].
pub fn update_k<R: Rng + ?Sized>(
    state: &mut MixtureState,
    sample: &DrugSample,
    prior: &PriorConfig,
    rng: &mut R,
) -> Result<usize> {
    Sampler::new(sample, prior, ObservationModel::Censored, None)?.update_k(state, rng)
}
