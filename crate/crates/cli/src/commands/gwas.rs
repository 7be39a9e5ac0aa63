use std::path::PathBuf;

use clap::Args;
use micclust_core::eval::{load_labels_csv, PredictedLabel};
use micclust_core::gwas::{
    attach_pvalues, compute_grm, load_snp_csv, manhattan_score, run_gwas_chain, score_test_pvalues, summarize_gwas,
    write_manhattan_csv, write_pvalue_manhattan_csv, write_results_csv, GwasConfig, GwasLabels, GwasResult, GwasTrace,
    SnpMatrix,
};
use micclust_core::postprocess::ClusterAssignment;

use super::as_config;
use crate::config::{pick, ConfigFile, RunConfig};
use crate::error::{CliError, CliResult, Context};
use crate::output::{OutDir, Timing};
use crate::svg;

#[derive(Debug, Clone, Default, Args)]
pub struct GwasOptions {
    /// Number of GWAS chains, run concurrently.
    #[arg(long = "gwas-chains", id = "gwas_chains")]
    pub chains: Option<usize>,
    /// Posterior inclusion probability that flags a variant.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub min_maf: Option<f64>,
    #[arg(long)]
    pub max_variants: Option<usize>,
    /// Drop the polygenic random effect.
    #[arg(long)]
    pub no_random_effect: bool,
    /// Also report per-variant score-test p-values.
    #[arg(long)]
    pub score_test: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GwasArgs {
    /// Cluster labels (`assignments.csv` or `strain_id,drug,level`).
    #[arg(long)]
    pub labels: PathBuf,
    /// Genotype CSV, long or wide form.
    #[arg(long)]
    pub snps: PathBuf,
    /// Drug whose labels are used; required when the file holds several.
    #[arg(long)]
    pub drug: Option<String>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub options: GwasOptions,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn resolve_gwas(
    iters: Option<usize>,
    burnin: Option<usize>,
    thin: Option<usize>,
    seed: Option<u64>,
    o: &GwasOptions,
    file: &ConfigFile,
) -> CliResult<GwasConfig> {
    let base = file.gwas.clone().unwrap_or_default();
    let cfg = GwasConfig {
        iterations: pick(iters, None, base.iterations),
        burnin: pick(burnin, None, base.burnin),
        thin: pick(thin, None, base.thin),
        seed: pick(seed, file.seed, base.seed),
        threshold: pick(o.threshold, None, base.threshold),
        min_maf: pick(o.min_maf, None, base.min_maf),
        max_variants: pick(o.max_variants, None, base.max_variants),
        random_effect: base.random_effect && !o.no_random_effect,
        score_test: base.score_test || o.score_test,
        ..base
    };
    cfg.validate().context("gwas settings").map_err(as_config)?;
    Ok(cfg)
}

/// Labels of one drug as cluster assignments, for majority voting per strain.
pub fn assignments_for(labels: &[PredictedLabel], drug: Option<&str>) -> CliResult<(String, Vec<ClusterAssignment>)> {
    let mut drugs: Vec<&str> = labels.iter().map(|l| l.drug.as_str()).collect();
    drugs.sort_unstable();
    drugs.dedup();
    let drug = match drug {
        Some(d) if drugs.contains(&d) => d.to_string(),
        Some(d) => return Err(CliError::Config(format!("no labels for drug {d}"))),
        None if drugs.len() == 1 => drugs[0].to_string(),
        None => {
            return Err(CliError::Config(format!("labels cover several drugs ({}); pass --drug", drugs.join(", "))))
        }
    };
    let rows = labels
        .iter()
        .filter(|l| l.drug == drug)
        .map(|l| ClusterAssignment {
            strain_id: l.strain_id.clone(),
            drug: l.drug.clone(),
            map_cluster: l.level,
            probabilities: Vec::new(),
            susceptible: l.level == 1,
        })
        .collect();
    Ok((drug, rows))
}

/// Aligns labels with genotypes, filters variants, runs the chains and
/// summarizes them.
pub fn run_gwas(
    assignments: &[ClusterAssignment],
    snps: &SnpMatrix,
    cfg: &GwasConfig,
    chains: usize,
) -> CliResult<(GwasResult, GwasLabels)> {
    let aligned = GwasLabels::from_assignments(assignments, snps).context("aligning labels with genotypes")?;
    let filtered = aligned.snps.filter(cfg.min_maf, cfg.max_variants).context("filtering variants")?;
    let labels = GwasLabels { snps: filtered, ..aligned };
    let grm = if cfg.random_effect { Some(compute_grm(&labels.snps).context("relationship matrix")?) } else { None };
    let traces: Vec<micclust_core::Result<GwasTrace>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..chains)
            .map(|c| {
                let (labels, grm) = (&labels, grm.as_ref());
                scope.spawn(move || run_gwas_chain(labels, grm, cfg, cfg.seed, c))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(micclust_core::Error::Numerical("GWAS chain panicked".into()))))
            .collect()
    });
    let traces = traces.into_iter().collect::<micclust_core::Result<Vec<_>>>().context("GWAS sampler")?;
    let mut result = summarize_gwas(&traces, cfg, &labels.snps).context("summarizing GWAS")?;
    if cfg.score_test {
        attach_pvalues(&mut result, &labels.snps, &score_test_pvalues(&labels));
    }
    Ok((result, labels))
}

pub fn write_gwas(out: &OutDir, result: &GwasResult, title: &str) -> CliResult<()> {
    write_results_csv(out.path("results.csv"), result).context("writing results")?;
    write_manhattan_csv(out.path("manhattan.csv"), result).context("writing Manhattan data")?;
    if result.variants.iter().any(|v| v.p_value.is_some()) {
        write_pvalue_manhattan_csv(out.path("manhattan_pvalues.csv"), result).context("writing p-values")?;
    }
    out.write_json("gwas.json", result)?;
    let positions: Vec<u64> = result.variants.iter().map(|v| v.position).collect();
    let scores: Vec<f64> = result.variants.iter().map(|v| manhattan_score(v.pip)).collect();
    let flags: Vec<bool> = result.variants.iter().map(|v| v.significant).collect();
    out.write_text("manhattan.svg", &svg::manhattan(title, &positions, &scores, &flags, result.threshold_line()))
}

pub fn execute(args: &GwasArgs, file: &ConfigFile) -> CliResult<()> {
    let cfg = resolve_gwas(args.iters, args.burnin, args.thin, args.seed, &args.options, file)?;
    let chains = args.options.chains.unwrap_or(1);
    if chains == 0 {
        return Err(CliError::Config("--gwas-chains must be at least 1".into()));
    }
    let mut run = RunConfig::new("gwas", &args.out, cfg.seed)
        .input("labels", &args.labels)?
        .input("snps", &args.snps)?
        .option("chains", chains);
    let mut timing = Timing::new();
    let labels = load_labels_csv(&args.labels).context("loading labels")?;
    let (drug, assignments) = assignments_for(&labels, args.drug.as_deref())?;
    let snps = timing.time("load", || load_snp_csv(&args.snps).context("loading genotypes"))?;
    let (result, _) = timing.time("mcmc", || run_gwas(&assignments, &snps, &cfg, chains))?;
    let out = OutDir::create(&args.out)?;
    write_gwas(&out, &result, &format!("{drug}: posterior inclusion"))?;
    log::info!("{} of {} variants pass PIP {}", result.significant().count(), result.variants.len(), cfg.threshold);
    run.drug = Some(drug);
    run.gwas = Some(cfg);
    out.write_run_config(&run)?;
    timing.write(&out)
}
