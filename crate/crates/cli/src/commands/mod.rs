pub mod ecoff;
pub mod eval;
pub mod fit;
pub mod gwas;
pub mod pipeline;
pub mod postprocess;
pub mod simulate;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use micclust_core::data::{load_dilution_grid, load_mic_dataset};
use micclust_core::{DrugGrid, DrugSample, FitConfig, MicDataset, PriorConfig};

use crate::config::{pick, ConfigFile, RunConfig};
use crate::error::{CliError, CliResult, Context};

/// MIC data, grids and an optional drug filter.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// MIC CSV with strain_id, drug and one of mic_mgL / log2_mic / dilution_index.
    #[arg(long)]
    pub data: PathBuf,
    /// Dilution grid CSV, one row per drug.
    #[arg(long)]
    pub grid: PathBuf,
    /// Drug code; required when the data holds several drugs.
    #[arg(long)]
    pub drug: Option<String>,
}

impl DataArgs {
    pub fn record(&self, run: RunConfig) -> CliResult<RunConfig> {
        run.input("data", &self.data)?.input("grid", &self.grid)
    }

    pub fn load(&self) -> CliResult<MicDataset> {
        let grids = load_grids(&self.grid)?;
        load_mic_dataset(&self.data, &grids).context("loading MIC data")
    }

    /// The named drug, or the only drug present.
    pub fn drug_of(&self, data: &MicDataset) -> CliResult<String> {
        let drugs: Vec<String> = data.counts_by_drug().into_keys().collect();
        match &self.drug {
            Some(d) if drugs.contains(d) => Ok(d.clone()),
            Some(d) => Err(CliError::Config(format!("drug {d} not present in {}", self.data.display()))),
            None if drugs.len() == 1 => Ok(drugs[0].clone()),
            None => Err(CliError::Config(format!("data holds several drugs ({}); pass --drug", drugs.join(", ")))),
        }
    }

    /// The named drug, or every drug present in code order.
    pub fn drugs_of(&self, data: &MicDataset) -> CliResult<Vec<String>> {
        match &self.drug {
            Some(_) => Ok(vec![self.drug_of(data)?]),
            None => Ok(data.counts_by_drug().into_keys().collect()),
        }
    }
}

pub fn load_grids(path: &Path) -> CliResult<BTreeMap<String, DrugGrid>> {
    load_dilution_grid(path).context("loading dilution grid")
}

pub fn sample_for(data: &MicDataset, drug: &str) -> CliResult<DrugSample> {
    data.for_drug(drug).context(format!("selecting drug {drug}"))
}

/// Chain length, thinning, chain count and seed.
#[derive(Debug, Clone, Default, Args)]
pub struct ChainArgs {
    /// Total sweeps per chain, burn-in included.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Independent chains, run concurrently.
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Mixture-prior and start overrides shared by `fit` and `pipeline`.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// Upper bound on the number of components.
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Start every chain with this many components instead of the EM start.
    #[arg(long)]
    pub init_k: Option<usize>,
    /// Prior sd of per-strain random intercepts (replicate data).
    #[arg(long)]
    pub strain_effect_sd: Option<f64>,
    /// DP auxiliary components per allocation update.
    #[arg(long)]
    pub dp_m: Option<usize>,
    /// Fix the DP concentration instead of sampling it.
    #[arg(long)]
    pub dp_alpha: Option<f64>,
}

pub fn resolve_seed(flag: Option<u64>, file: &ConfigFile) -> u64 {
    pick(flag, file.seed, 0)
}

pub fn resolve_prior(model: &ModelArgs, file: &ConfigFile) -> CliResult<PriorConfig> {
    let mut prior = file.prior.clone().unwrap_or_default();
    if let Some(k) = model.k_max {
        prior.k_max = k;
    }
    prior.validate().context("prior settings").map_err(as_config)?;
    Ok(prior)
}

pub fn resolve_fit(chain: &ChainArgs, model: &ModelArgs, file: &ConfigFile) -> CliResult<FitConfig> {
    let base = file.fit.clone().unwrap_or_default();
    let fit = FitConfig {
        iterations: pick(chain.iters, None, base.iterations),
        burnin: pick(chain.burnin, None, base.burnin),
        thin: pick(chain.thin, None, base.thin),
        chains: pick(chain.chains, None, base.chains),
        seed: pick(chain.seed, file.seed, base.seed),
        strain_effect_sd: model.strain_effect_sd.or(base.strain_effect_sd),
        init_k: model.init_k.or(base.init_k),
    };
    fit.validate().context("fit settings").map_err(as_config)?;
    Ok(fit)
}

/// Validation failures of user-supplied settings are configuration errors.
pub fn as_config(e: CliError) -> CliError {
    match e {
        CliError::Core { context, source } => CliError::Config(format!("{context}: {source}")),
        other => other,
    }
}

/// Cell labels for plots: the tested dilutions, then `>d_T`.
pub fn cell_labels(grid: &DrugGrid) -> Vec<String> {
    let mut labels: Vec<String> = grid.tested_log2().iter().map(|d| format!("{d}")).collect();
    labels[0] = format!("≤{}", labels[0]);
    labels.push(format!(">{}", grid.top_tested()));
    labels
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_flags_override_file_values() {
        let file =
            ConfigFile::parse("seed = 9\n[fit]\niterations = 500\nburnin = 100\nthin = 2\nchains = 3\n").unwrap();
        let fit =
            resolve_fit(&ChainArgs { thin: Some(5), ..ChainArgs::default() }, &ModelArgs::default(), &file).unwrap();
        assert_eq!((fit.iterations, fit.burnin, fit.thin, fit.chains, fit.seed), (500, 100, 5, 3, 9));
        let fit =
            resolve_fit(&ChainArgs { seed: Some(1), ..ChainArgs::default() }, &ModelArgs::default(), &file).unwrap();
        assert_eq!(fit.seed, 1);
    }

    #[test]
    fn defaults_are_the_long_production_run() {
        let fit = resolve_fit(&ChainArgs::default(), &ModelArgs::default(), &ConfigFile::default()).unwrap();
        assert_eq!((fit.iterations, fit.burnin, fit.thin), (1_000_000, 100_000, 10));
    }

    #[test]
    fn invalid_settings_are_config_errors() {
        let args = ChainArgs { iters: Some(10), burnin: Some(20), ..ChainArgs::default() };
        let err = resolve_fit(&args, &ModelArgs::default(), &ConfigFile::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err =
            resolve_prior(&ModelArgs { k_max: Some(0), ..ModelArgs::default() }, &ConfigFile::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
