//! Censored Gaussian mixture with a prior on the number of components.
//!
//! Observations are dilution cells; each carries a latent log2 value `y*`
//! inside its cell. The sampler alternates allocations (with `y*` integrated
//! out), truncated-normal `y*` draws, conjugate Normal/Gamma component
//! updates, Dirichlet weights and an exact conditional draw of the component
//! count `K` given the partition.

mod chain;
mod init;
mod kernel;
mod likelihood;
mod prior;
mod trace_io;
mod truncnorm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) use chain::run_sampler;
pub use chain::{chain_rng, run_chain, run_chains, run_chains_with};
pub use init::{em_censored, select_start, EmFit};
pub use kernel::{
    sample_allocations, sample_latent, update_component_params, update_k, update_weights, ObservationModel, Sampler,
};
pub use likelihood::{cell_probability, log_cell_probability, observation_pmf};
pub use prior::{k_conditional, log_prior_k, prior_k_mean, prior_k_mode, prior_k_variance};
pub use trace_io::{read_allocations_csv, read_trace_csv, write_allocations_csv, write_trace_csv};
pub use truncnorm::{sample_truncated_normal, standard_truncated};

/// Hyperparameters of the mixture.
///
/// Means get `Normal(mu0, tau2)`; precisions `1/sigma^2` get `Gamma(shape, rate)`;
/// weights get a symmetric `Dirichlet(delta)`; K gets the BNB prior truncated
/// at `k_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    pub mu0: f64,
    pub tau2: f64,
    pub prec_shape: f64,
    pub prec_rate: f64,
    pub delta: f64,
    pub bnb_alpha: f64,
    pub bnb_beta: f64,
    pub k_max: usize,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            mu0: 0.0,
            tau2: 100.0,
            prec_shape: 1.5,
            prec_rate: 0.5,
            delta: 1.0,
            bnb_alpha: 1.0,
            bnb_beta: 1.0,
            k_max: 30,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau2", self.tau2),
            ("prec_shape", self.prec_shape),
            ("prec_rate", self.prec_rate),
            ("delta", self.delta),
            ("bnb_alpha", self.bnb_alpha),
            ("bnb_beta", self.bnb_beta),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("prior {name} must be positive, got {v}")));
            }
        }
        if !self.mu0.is_finite() {
            return Err(Error::Validation("prior mu0 must be finite".into()));
        }
        if self.k_max < 1 {
            return Err(Error::Validation("k_max must be at least 1".into()));
        }
        Ok(())
    }
}

/// MCMC run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub iterations: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub chains: usize,
    /// Prior sd of per-strain random intercepts; `None` disables them.
    pub strain_effect_sd: Option<f64>,
    /// Starting number of components at spread quantiles; `None` starts from
    /// a censored EM fit with BIC-chosen size.
    pub init_k: Option<usize>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            iterations: 1_000_000,
            burnin: 100_000,
            thin: 10,
            seed: 0,
            chains: 4,
            strain_effect_sd: None,
            init_k: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burnin >= self.iterations {
            return Err(Error::Validation(format!(
                "burnin ({}) must be smaller than iterations ({})",
                self.burnin, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::Validation("thin must be at least 1".into()));
        }
        if self.chains == 0 {
            return Err(Error::Validation("chains must be at least 1".into()));
        }
        if let Some(sd) = self.strain_effect_sd {
            if !(sd > 0.0 && sd.is_finite()) {
                return Err(Error::Validation("strain effect sd must be positive".into()));
            }
        }
        if self.init_k == Some(0) {
            return Err(Error::Validation("init_k must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of retained draws per chain.
    pub fn retained_draws(&self) -> usize {
        (self.iterations - self.burnin) / self.thin
    }
}

/// One state of the chain. Components and allocations are 0-based here;
/// files and reports use 1-based cluster labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureState {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub allocations: Vec<usize>,
    pub latent: Vec<f64>,
    /// Per-strain intercepts; empty when strain effects are off.
    pub strain_effects: Vec<f64>,
}

impl MixtureState {
    /// A parameter-only state with no observations attached.
    pub fn with_params(weights: Vec<f64>, means: Vec<f64>, sds: Vec<f64>) -> Self {
        Self { weights, means, sds, allocations: Vec::new(), latent: Vec::new(), strain_effects: Vec::new() }
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// Number of occupied components.
    pub fn k_plus(&self) -> usize {
        let mut seen = vec![false; self.k()];
        for &z in &self.allocations {
            seen[z] = true;
        }
        seen.iter().filter(|s| **s).count()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k()];
        for &z in &self.allocations {
            c[z] += 1;
        }
        c
    }

    /// Checks simplex, positivity, allocation range and (given cell bounds per
    /// observation) that every latent value lies in its cell.
    pub fn check_invariants(&self, bounds: Option<&[(f64, f64)]>) -> Result<()> {
        let k = self.k();
        if k == 0 || self.means.len() != k || self.sds.len() != k {
            return Err(Error::Validation("inconsistent component dimensions".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 || self.weights.iter().any(|w| *w < 0.0) {
            return Err(Error::Validation(format!("weights off the simplex (sum {total})")));
        }
        if self.sds.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Validation("non-positive component sd".into()));
        }
        if self.allocations.iter().any(|z| *z >= k) {
            return Err(Error::Validation("allocation beyond K".into()));
        }
        if let Some(bounds) = bounds {
            for (i, (y, (lo, hi))) in self.latent.iter().zip(bounds).enumerate() {
                if !(*y >= *lo && *y <= *hi) {
                    return Err(Error::Validation(format!(
                        "latent value {y} of observation {i} outside its cell ({lo}, {hi})"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cgmm,
    Gm,
    Dp,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cgmm => "cgmm",
            Method::Gm => "gm",
            Method::Dp => "dp",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cgmm" => Ok(Method::Cgmm),
            "gm" => Ok(Method::Gm),
            "dp" => Ok(Method::Dp),
            other => Err(Error::Validation(format!("unknown method {other:?}"))),
        }
    }
}

/// A retained draw. `allocations` are 0-based component indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub iter: usize,
    pub k: usize,
    pub k_plus: usize,
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub allocations: Vec<u16>,
    pub log_likelihood: f64,
}

/// Thinned post-burnin draws of one chain plus run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSet {
    pub method: Method,
    pub drug: String,
    pub seed: u64,
    pub chain: usize,
    pub iterations: usize,
    pub burnin: usize,
    pub thin: usize,
    pub draws: Vec<Draw>,
    /// Fraction of sweeps in which the component count changed.
    pub k_change_rate: f64,
    /// Wall time in seconds; excluded from reproducible artifacts.
    pub runtime_secs: f64,
}

impl TraceSet {
    pub fn k_plus_series(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.k_plus as f64).collect()
    }

    pub fn log_likelihood_series(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.log_likelihood).collect()
    }

    /// Average mean of the occupied components in each draw.
    pub fn mean_of_means_series(&self) -> Vec<f64> {
        self.draws
            .iter()
            .map(|d| {
                let mut occupied = vec![false; d.k];
                for &z in &d.allocations {
                    occupied[z as usize] = true;
                }
                let (s, c) = d
                    .means
                    .iter()
                    .zip(&occupied)
                    .filter(|(_, o)| **o)
                    .fold((0.0, 0usize), |(s, c), (m, _)| (s + m, c + 1));
                if c == 0 {
                    d.means.iter().sum::<f64>() / d.k as f64
                } else {
                    s / c as f64
                }
            })
            .collect()
    }
}
