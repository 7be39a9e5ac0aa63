use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use micclust_core::cgmm::{read_allocations_csv, read_trace_csv};
use micclust_core::postprocess::{
    cluster_summaries, diagnostics, map_allocations, pool_traces, posterior_k, write_assignments_csv,
    ClusterAssignment, ClusterSummary, DiagnosticsReport, KPosterior,
};
use micclust_core::{DrugSample, TraceSet};
use serde::Serialize;

use super::fit::{FitManifest, MANIFEST};
use super::{cell_labels, load_grids, sample_for};
use crate::config::{require_file, ConfigFile, RunConfig};
use crate::error::{CliError, CliResult, Context};
use crate::output::{OutDir, Timing};
use crate::svg;

#[derive(Debug, Clone, Args)]
pub struct PostprocessArgs {
    /// Output directory of a `fit` run.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub method: String,
    pub drug: String,
    pub chains: usize,
    pub draws: usize,
    pub k_posterior: KPosterior,
    pub clusters: Vec<ClusterSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_rhat: Option<f64>,
}

pub struct Postprocessed {
    pub assignments: Vec<ClusterAssignment>,
    pub summary: Summary,
}

pub fn load_traces(run: &Path) -> CliResult<Vec<TraceSet>> {
    let manifest_path = run.join(MANIFEST);
    require_file(&manifest_path)?;
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| CliError::io(&manifest_path, e))?;
    let manifest: FitManifest = serde_json::from_str(&text)
        .map_err(micclust_core::Error::from)
        .context(format!("reading {}", manifest_path.display()))?;
    manifest
        .chains
        .iter()
        .map(|c| {
            let mut draws = read_trace_csv(run.join(&c.trace)).context("reading trace")?;
            read_allocations_csv(run.join(&c.allocations), &mut draws).context("reading allocations")?;
            Ok(TraceSet {
                method: manifest.method,
                drug: manifest.drug.clone(),
                seed: c.seed,
                chain: c.chain,
                iterations: c.iterations,
                burnin: c.burnin,
                thin: c.thin,
                draws,
                k_change_rate: c.k_change_rate,
                runtime_secs: 0.0,
            })
        })
        .collect()
}

/// Relabels, pools chains and derives allocations, cluster summaries and
/// diagnostics.
pub fn postprocess(traces: &[TraceSet], sample: &DrugSample) -> CliResult<(Postprocessed, Option<DiagnosticsReport>)> {
    let pooled = pool_traces(traces).context("pooling chains")?;
    let assignments = map_allocations(&pooled, sample).context("allocating observations")?;
    let report = if traces.len() >= 2 { Some(diagnostics(traces).context("diagnostics")?) } else { None };
    let summary = Summary {
        method: pooled.method.as_str().to_string(),
        drug: pooled.drug.clone(),
        chains: traces.len(),
        draws: pooled.draws.len(),
        k_posterior: posterior_k(&pooled).context("cluster count")?,
        clusters: cluster_summaries(&pooled).context("cluster summaries")?,
        max_rhat: report.as_ref().map(|r| r.parameters.iter().map(|p| p.rhat).fold(f64::NAN, f64::max)),
    };
    Ok((Postprocessed { assignments, summary }, report))
}

pub fn write_postprocessed(
    out: &OutDir,
    sample: &DrugSample,
    post: &Postprocessed,
    report: Option<&DiagnosticsReport>,
) -> CliResult<()> {
    write_assignments_csv(out.path("assignments.csv"), &post.assignments).context("writing assignments")?;
    let mut k = String::from("k_plus,probability\n");
    for (kp, p) in &post.summary.k_posterior.pmf {
        writeln!(k, "{kp},{p:.6}").unwrap();
    }
    out.write_text("k_posterior.csv", &k)?;
    let mut c = String::from("cluster,weight,mean_log2,sd_log2,mean_lower,mean_upper\n");
    for s in &post.summary.clusters {
        writeln!(
            c,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            s.cluster, s.weight, s.mean, s.sd, s.mean_interval.0, s.mean_interval.1
        )
        .unwrap();
    }
    out.write_text("clusters.csv", &c)?;
    out.write_json("summary.json", &post.summary)?;
    if let Some(r) = report {
        out.write_json("diagnostics.json", r)?;
    }
    let k = post.summary.clusters.len();
    let mut series = vec![vec![0.0; sample.grid().n_cells()]; k];
    for (obs, a) in sample.observations().iter().zip(&post.assignments) {
        series[a.map_cluster - 1][obs.dilution_index - 1] += 1.0;
    }
    let title = format!("{} {}: MAP clusters", sample.drug_code(), post.summary.method);
    out.write_text("histogram.svg", &svg::histogram(&title, &cell_labels(sample.grid()), &series, &[]))
}

pub fn execute(args: &PostprocessArgs, _file: &ConfigFile) -> CliResult<()> {
    let run = RunConfig::new("postprocess", &args.out, 0)
        .input("data", &args.data)?
        .input("grid", &args.grid)?
        .input("fit", &args.run.join(MANIFEST))?;
    let mut timing = Timing::new();
    let traces = timing.time("load", || load_traces(&args.run))?;
    let drug = traces[0].drug.clone();
    let grids = load_grids(&args.grid)?;
    let data = micclust_core::data::load_mic_dataset(&args.data, &grids).context("loading MIC data")?;
    let sample = sample_for(&data, &drug)?;
    let (post, report) = timing.time("postprocess", || postprocess(&traces, &sample))?;
    let out = OutDir::create(&args.out)?;
    write_postprocessed(&out, &sample, &post, report.as_ref())?;
    let mut run = run;
    run.drug = Some(drug);
    run.method = Some(post.summary.method.clone());
    out.write_run_config(&run)?;
    timing.write(&out)
}
