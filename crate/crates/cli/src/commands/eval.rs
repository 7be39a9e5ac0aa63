use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use micclust_core::eval::{
    format_level_table, format_rate_table, load_labels_csv, load_truth_csv, true_negative_rate, true_positive_rate,
    PredictedLabel, RateTable, TruthSet,
};

use crate::config::{ConfigFile, RunConfig};
use crate::error::{CliError, CliResult, Context};
use crate::output::{OutDir, Timing};

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Label files (`assignments.csv` or `strain_id,drug,level`); repeatable.
    #[arg(long, required = true)]
    pub labels: Vec<PathBuf>,
    /// Column name for each label file, in the same order.
    #[arg(long)]
    pub method: Vec<String>,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub struct Rates {
    pub tpr: Vec<(String, RateTable)>,
    pub tnr: Vec<(String, RateTable)>,
}

pub fn evaluate(methods: &[(String, Vec<PredictedLabel>)], truth: &TruthSet) -> CliResult<Rates> {
    let mut tpr = Vec::new();
    let mut tnr = Vec::new();
    for (name, labels) in methods {
        tpr.push((name.clone(), true_positive_rate(labels, truth).context(format!("true positive rate of {name}"))?));
        tnr.push((name.clone(), true_negative_rate(labels, truth).context(format!("true negative rate of {name}"))?));
    }
    Ok(Rates { tpr, tnr })
}

/// `tpr.csv`, `tnr.csv`, per-level breakdowns and `eval.json`.
pub fn write_rates(out: &OutDir, rates: &Rates) -> CliResult<()> {
    out.write_text("tpr.csv", &format_rate_table(&rates.tpr))?;
    out.write_text("tnr.csv", &format_rate_table(&rates.tnr))?;
    out.write_text("tpr_levels.csv", &format_level_table(&rates.tpr))?;
    out.write_text("tnr_levels.csv", &format_level_table(&rates.tnr))?;
    let json = |v: &[(String, RateTable)]| v.iter().cloned().collect::<BTreeMap<String, RateTable>>();
    out.write_json("eval.json", &serde_json::json!({ "tpr": json(&rates.tpr), "tnr": json(&rates.tnr) }))
}

pub fn execute(args: &EvalArgs, _file: &ConfigFile) -> CliResult<()> {
    if !args.method.is_empty() && args.method.len() != args.labels.len() {
        return Err(CliError::Config(format!(
            "{} --method names for {} --labels files",
            args.method.len(),
            args.labels.len()
        )));
    }
    let mut run = RunConfig::new("eval", &args.out, 0).input("truth", &args.truth)?;
    let mut methods = Vec::new();
    for (i, path) in args.labels.iter().enumerate() {
        run = run.input(&format!("labels{}", i + 1), path)?;
        let name = match args.method.get(i) {
            Some(m) => m.clone(),
            None => {
                path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| format!("method{}", i + 1))
            }
        };
        methods.push((name, load_labels_csv(path).context("loading labels")?));
    }
    run = run.option("methods", methods.iter().map(|m| m.0.clone()).collect::<Vec<_>>());
    let mut timing = Timing::new();
    let truth = load_truth_csv(&args.truth).context("loading truth")?;
    let rates = timing.time("eval", || evaluate(&methods, &truth))?;
    let out = OutDir::create(&args.out)?;
    write_rates(&out, &rates)?;
    out.write_run_config(&run)?;
    timing.write(&out)
}
