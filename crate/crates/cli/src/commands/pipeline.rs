use std::path::PathBuf;

use clap::Args;
use micclust_core::ecoff::DEFAULT_QUANTILES;
use micclust_core::eval::{labels_from_assignments, load_truth_csv, write_labels_csv};
use micclust_core::gwas::load_snp_csv;

use super::fit::{run_fit, write_fit, FitSettings, MethodArg};
use super::gwas::{resolve_gwas, run_gwas, write_gwas, GwasOptions};
use super::postprocess::{postprocess, write_postprocessed};
use super::{ecoff, eval, sample_for, ChainArgs, DataArgs, ModelArgs};
use crate::config::{ConfigFile, RunConfig};
use crate::error::{CliResult, Context};
use crate::output::{OutDir, Timing};

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Genotypes; enables the association stage.
    #[arg(long)]
    pub snps: Option<PathBuf>,
    /// Known resistant strains and susceptible controls; enables evaluation.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "cgmm")]
    pub method: MethodArg,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub gwas_iters: Option<usize>,
    /// Defaults to a fifth of the GWAS iterations when only those are given.
    #[arg(long)]
    pub gwas_burnin: Option<usize>,
    #[arg(long)]
    pub gwas_thin: Option<usize>,
    #[command(flatten)]
    pub gwas: GwasOptions,
    #[arg(long)]
    pub out: PathBuf,
}

/// Per drug: fit, postprocess, ECOFF baseline and association; then one
/// evaluation over all drugs.
pub fn execute(args: &PipelineArgs, file: &ConfigFile) -> CliResult<()> {
    let settings = FitSettings::resolve(args.method.into(), &args.chain, &args.model, file)?;
    let seed = settings.fit.seed;
    let gwas_burnin = args.gwas_burnin.or(args.gwas_iters.map(|i| i / 5));
    let gwas_cfg = resolve_gwas(args.gwas_iters, gwas_burnin, args.gwas_thin, Some(seed), &args.gwas, file)?;
    let mut run = args.data.record(RunConfig::new("pipeline", &args.out, seed))?;
    if let Some(p) = &args.snps {
        run = run.input("snps", p)?;
    }
    if let Some(p) = &args.truth {
        run = run.input("truth", p)?;
    }
    let mut timing = Timing::new();
    let data = timing.time("load", || args.data.load())?;
    let drugs = args.data.drugs_of(&data)?;
    let snps = match &args.snps {
        Some(p) => Some(timing.time("load_snps", || load_snp_csv(p).context("loading genotypes"))?),
        None => None,
    };
    let out = OutDir::create(&args.out)?;
    let method = settings.method.as_str().to_string();
    let mut labels = Vec::new();
    let mut ecoff_labels = Vec::new();
    for drug in &drugs {
        let sample = sample_for(&data, drug)?;
        let dir = out.sub(drug)?;
        let traces = timing.time(&format!("fit:{drug}"), || run_fit(&sample, &settings))?;
        write_fit(&dir.sub("fit")?, &sample, &traces)?;
        let (post, report) = timing.time(&format!("postprocess:{drug}"), || postprocess(&traces, &sample))?;
        write_postprocessed(&dir.sub("post")?, &sample, &post, report.as_ref())?;
        labels.extend(labels_from_assignments(&post.assignments));

        let counts: Vec<f64> = sample.cell_counts().iter().map(|c| *c as f64).collect();
        match ecoff::fit_counts(&counts, sample.grid(), &DEFAULT_QUANTILES) {
            Ok(fit) => {
                let ecoff_dir = dir.sub("ecoff")?;
                ecoff_dir.write_json("ecoff.json", &fit)?;
                ecoff_labels.extend(ecoff::classify(&sample, &fit, 0.99)?);
            }
            Err(e) => log::warn!("{drug}: ECOFF baseline skipped: {e}"),
        }

        if let Some(snps) = snps.as_ref().filter(|_| post.summary.clusters.len() >= 2) {
            let (result, _) =
                timing.time(&format!("gwas:{drug}"), || run_gwas(&post.assignments, snps, &gwas_cfg, 1))?;
            write_gwas(&dir.sub("gwas")?, &result, &format!("{drug}: posterior inclusion"))?;
        } else if snps.is_some() {
            log::warn!("{drug}: a single cluster leaves nothing to associate; GWAS skipped");
        }
    }
    write_labels_csv(out.path("labels.csv"), &labels).context("writing labels")?;
    if let Some(path) = &args.truth {
        let truth = load_truth_csv(path).context("loading truth")?;
        let mut methods = vec![(method.clone(), labels)];
        if !ecoff_labels.is_empty() {
            methods.push(("ecoff_0.99".to_string(), ecoff_labels));
        }
        let rates = timing.time("eval", || eval::evaluate(&methods, &truth))?;
        eval::write_rates(&out.sub("eval")?, &rates)?;
    }
    run.drug = args.data.drug.clone();
    settings.record(&mut run);
    if snps.is_some() {
        run.gwas = Some(gwas_cfg);
    }
    out.write_run_config(&run)?;
    timing.write(&out)
}
