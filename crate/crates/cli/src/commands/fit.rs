use std::path::PathBuf;

use clap::{Args, ValueEnum};
use micclust_core::baselines::{run_dp_chain_indexed, run_gm_chain_indexed, DpConfig};
use micclust_core::cgmm::{run_chains, run_chains_with, write_allocations_csv, write_trace_csv};
use micclust_core::{DrugSample, FitConfig, Method, PriorConfig, TraceSet};
use serde::{Deserialize, Serialize};

use super::{as_config, resolve_fit, resolve_prior, ChainArgs, DataArgs, ModelArgs};
use crate::config::{ConfigFile, RunConfig};
use crate::error::{CliError, CliResult, Context};
use crate::output::{OutDir, Timing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Censored Gaussian mixture with a prior on the component count.
    Cgmm,
    /// Gaussian mixture treating recorded labels as exact values.
    Gm,
    /// Dirichlet-process mixture on the censored likelihood.
    Dp,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Cgmm => Method::Cgmm,
            MethodArg::Gm => Method::Gm,
            MethodArg::Dp => Method::Dp,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "cgmm")]
    pub method: MethodArg,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

/// Everything needed to rerun a fit.
#[derive(Debug, Clone)]
pub struct FitSettings {
    pub method: Method,
    pub prior: PriorConfig,
    pub fit: FitConfig,
    pub dp: Option<DpConfig>,
}

impl FitSettings {
    pub fn resolve(method: Method, chain: &ChainArgs, model: &ModelArgs, file: &ConfigFile) -> CliResult<Self> {
        let prior = resolve_prior(model, file)?;
        let fit = resolve_fit(chain, model, file)?;
        let dp = match method {
            Method::Dp => {
                if fit.strain_effect_sd.is_some() || fit.init_k.is_some() {
                    return Err(CliError::Config("strain effects and init_k apply to cgmm and gm only, not dp".into()));
                }
                let base = file.dp.clone().unwrap_or_default();
                let dp = DpConfig {
                    m: model.dp_m.unwrap_or(base.m),
                    fixed_alpha: model.dp_alpha.or(base.fixed_alpha),
                    iterations: fit.iterations,
                    burnin: fit.burnin,
                    thin: fit.thin,
                    seed: fit.seed,
                    ..base
                };
                dp.validate().context("dp settings").map_err(as_config)?;
                Some(dp)
            }
            _ => {
                if model.dp_m.is_some() || model.dp_alpha.is_some() {
                    return Err(CliError::Config("--dp-m and --dp-alpha apply to --method dp only".into()));
                }
                None
            }
        };
        Ok(Self { method, prior, fit, dp })
    }

    pub fn record(&self, run: &mut RunConfig) {
        run.method = Some(self.method.as_str().to_string());
        run.prior = Some(self.prior.clone());
        run.fit = Some(self.fit.clone());
        run.dp = self.dp.clone();
    }
}

/// Index of a fit directory: one entry per chain with its files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitManifest {
    pub method: Method,
    pub drug: String,
    pub n_observations: usize,
    pub chains: Vec<ChainEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainEntry {
    pub chain: usize,
    pub seed: u64,
    pub iterations: usize,
    pub burnin: usize,
    pub thin: usize,
    pub draws: usize,
    pub k_change_rate: f64,
    pub trace: String,
    pub allocations: String,
}

pub const MANIFEST: &str = "fit.json";

pub fn run_fit(sample: &DrugSample, s: &FitSettings) -> CliResult<Vec<TraceSet>> {
    let fit = &s.fit;
    let traces = match s.method {
        Method::Cgmm => run_chains(sample, &s.prior, fit),
        Method::Gm => run_chains_with(fit.chains, |c| run_gm_chain_indexed(sample, &s.prior, fit, fit.seed, c)),
        Method::Dp => {
            let dp = s.dp.as_ref().expect("dp settings resolved");
            run_chains_with(fit.chains, |c| run_dp_chain_indexed(sample, dp, &s.prior, fit.seed, c))
        }
    };
    traces.context(format!("{} fit for {}", s.method.as_str(), sample.drug_code()))
}

/// Writes per-chain trace and allocation files plus the manifest.
pub fn write_fit(out: &OutDir, sample: &DrugSample, traces: &[TraceSet]) -> CliResult<()> {
    let mut chains = Vec::new();
    for t in traces {
        let trace = format!("trace_chain{}.csv", t.chain + 1);
        let allocations = format!("allocations_chain{}.csv", t.chain + 1);
        write_trace_csv(out.path(&trace), &t.draws).context("writing trace")?;
        write_allocations_csv(out.path(&allocations), &t.draws).context("writing allocations")?;
        chains.push(ChainEntry {
            chain: t.chain,
            seed: t.seed,
            iterations: t.iterations,
            burnin: t.burnin,
            thin: t.thin,
            draws: t.draws.len(),
            k_change_rate: t.k_change_rate,
            trace,
            allocations,
        });
    }
    let manifest = FitManifest {
        method: traces[0].method,
        drug: sample.drug_code().to_string(),
        n_observations: sample.len(),
        chains,
    };
    out.write_json(MANIFEST, &manifest)
}

pub fn execute(args: &FitArgs, file: &ConfigFile) -> CliResult<()> {
    let settings = FitSettings::resolve(args.method.into(), &args.chain, &args.model, file)?;
    let mut run = args.data.record(RunConfig::new("fit", &args.out, settings.fit.seed))?;
    let mut timing = Timing::new();
    let data = timing.time("load", || args.data.load())?;
    let drug = args.data.drug_of(&data)?;
    let sample = super::sample_for(&data, &drug)?;
    let traces = timing.time("mcmc", || run_fit(&sample, &settings))?;
    let out = OutDir::create(&args.out)?;
    write_fit(&out, &sample, &traces)?;
    log::info!("{} chains of {} draws written to {}", traces.len(), traces[0].draws.len(), args.out.display());
    run.drug = Some(drug);
    settings.record(&mut run);
    out.write_run_config(&run)?;
    timing.write(&out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> ChainArgs {
        ChainArgs { iters: Some(100), burnin: Some(10), thin: Some(1), chains: Some(2), seed: Some(3) }
    }

    #[test]
    fn dp_settings_follow_the_chain_flags() {
        let model = ModelArgs { dp_m: Some(5), ..ModelArgs::default() };
        let s = FitSettings::resolve(Method::Dp, &chain(), &model, &ConfigFile::default()).unwrap();
        let dp = s.dp.unwrap();
        assert_eq!((dp.iterations, dp.burnin, dp.thin, dp.seed, dp.m), (100, 10, 1, 3, 5));
    }

    #[test]
    fn contradictory_options_are_rejected() {
        let model = ModelArgs { dp_alpha: Some(1.0), ..ModelArgs::default() };
        let err = FitSettings::resolve(Method::Cgmm, &chain(), &model, &ConfigFile::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let model = ModelArgs { init_k: Some(2), ..ModelArgs::default() };
        assert!(FitSettings::resolve(Method::Dp, &chain(), &model, &ConfigFile::default()).is_err());
    }
}
