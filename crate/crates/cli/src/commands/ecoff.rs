use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use micclust_core::ecoff::{classify_by_cutoff, cutoff_table, fit_wildtype_lognormal, EcoffFit, DEFAULT_QUANTILES};
use micclust_core::eval::{labels_from_binary, write_labels_csv, PredictedLabel};
use micclust_core::{DrugGrid, DrugSample};
use serde::Serialize;

use super::{as_config, cell_labels, load_grids, sample_for};
use crate::config::{ConfigFile, RunConfig};
use crate::error::{CliError, CliResult, Context};
use crate::output::{OutDir, Timing};
use crate::svg;

#[derive(Debug, Clone, Args)]
pub struct EcoffArgs {
    /// Raw MIC CSV (as for `fit`).
    #[arg(long, conflicts_with = "counts", required_unless_present = "counts")]
    pub data: Option<PathBuf>,
    /// Count CSV `drug,log2_mic,count` (or `drug,mic_mgL,count`).
    #[arg(long)]
    pub counts: Option<PathBuf>,
    #[arg(long)]
    pub grid: PathBuf,
    /// Drug code; all drugs when omitted.
    #[arg(long)]
    pub drug: Option<String>,
    /// Quantiles reported in the cutoff table.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_QUANTILES)]
    pub quantiles: Vec<f64>,
    /// Quantile whose cutoff labels the strains in `labels.csv`.
    #[arg(long, default_value_t = 0.99)]
    pub classify_quantile: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct EcoffReport<'a> {
    quantiles: &'a [f64],
    classify_quantile: f64,
    fits: Vec<EcoffFit>,
}

/// Fit plus cutoffs at `quantiles`.
pub fn fit_counts(counts: &[f64], grid: &DrugGrid, quantiles: &[f64]) -> CliResult<EcoffFit> {
    let mut fit = fit_wildtype_lognormal(counts, grid).context(format!("ECOFF fit for {}", grid.drug_code()))?;
    fit.cutoffs = cutoff_table(&fit, quantiles, grid).context("cutoff table").map_err(as_config)?;
    Ok(fit)
}

/// Binary labels of one drug's strains at the cutoff for `q`.
pub fn classify(sample: &DrugSample, fit: &EcoffFit, q: f64) -> CliResult<Vec<PredictedLabel>> {
    let row = cutoff_table(fit, &[q], sample.grid()).context("classification quantile").map_err(as_config)?;
    let resistant = classify_by_cutoff(sample, &fit.drug, row[0].cutoff_mg_l).context("classifying strains")?;
    let ids: Vec<String> = sample.observations().iter().map(|o| o.strain_id.clone()).collect();
    labels_from_binary(&ids, &fit.drug, &resistant).context("labels")
}

fn read_counts(
    path: &Path,
    grids: &std::collections::BTreeMap<String, DrugGrid>,
) -> CliResult<Vec<(String, Vec<f64>)>> {
    let data_err = |line: usize, msg: String| CliError::Core {
        context: "reading counts".into(),
        source: micclust_core::Error::Parse { file: path.display().to_string(), line: line as u64, message: msg },
    };
    let mut rdr =
        csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| data_err(1, e.to_string()))?;
    let headers = rdr.headers().map_err(|e| data_err(1, e.to_string()))?.clone();
    let mg = match (headers.get(0), headers.get(1), headers.get(2)) {
        (Some("drug"), Some("log2_mic"), Some("count")) => false,
        (Some("drug"), Some("mic_mgL"), Some("count")) => true,
        _ => return Err(data_err(1, "expected header drug,log2_mic,count or drug,mic_mgL,count".into())),
    };
    let mut out: Vec<(String, Vec<f64>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| data_err(line, e.to_string()))?;
        let grid = grids.get(&rec[0]).ok_or_else(|| data_err(line, format!("no grid for drug {}", &rec[0])))?;
        let value: f64 = rec[1].parse().map_err(|_| data_err(line, format!("bad MIC {:?}", &rec[1])))?;
        let log2 = if mg { value.log2() } else { value };
        let count: f64 = rec[2]
            .parse()
            .ok()
            .filter(|c: &f64| *c >= 0.0)
            .ok_or_else(|| data_err(line, format!("bad count {:?}", &rec[2])))?;
        let idx = grid.label_to_index(log2).context("mapping MIC onto the grid")?;
        let pos = match out.iter().position(|(d, _)| d == &rec[0]) {
            Some(p) => p,
            None => {
                out.push((rec[0].to_string(), vec![0.0; grid.n_cells()]));
                out.len() - 1
            }
        };
        out[pos].1[idx - 1] += count;
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

pub fn execute(args: &EcoffArgs, _file: &ConfigFile) -> CliResult<()> {
    let mut run = RunConfig::new("ecoff", &args.out, 0).input("grid", &args.grid)?;
    run = match (&args.data, &args.counts) {
        (Some(d), _) => run.input("data", d)?,
        (None, Some(c)) => run.input("counts", c)?,
        (None, None) => return Err(CliError::Config("pass --data or --counts".into())),
    };
    run = run.option("quantiles", &args.quantiles).option("classify_quantile", args.classify_quantile);
    run.drug = args.drug.clone();
    let mut timing = Timing::new();
    let grids = load_grids(&args.grid)?;
    let out = OutDir::create(&args.out)?;
    let mut fits = Vec::new();
    let mut labels = Vec::new();
    let mut samples = Vec::new();
    timing.time("fit", || {
        if let Some(path) = &args.data {
            let data = micclust_core::data::load_mic_dataset(path, &grids).context("loading MIC data")?;
            let drugs = super::DataArgs { data: path.clone(), grid: args.grid.clone(), drug: args.drug.clone() }
                .drugs_of(&data)?;
            for drug in drugs {
                let sample = sample_for(&data, &drug)?;
                let counts: Vec<f64> = sample.cell_counts().iter().map(|c| *c as f64).collect();
                let fit = fit_counts(&counts, sample.grid(), &args.quantiles)?;
                labels.extend(classify(&sample, &fit, args.classify_quantile)?);
                samples.push((sample.grid().clone(), counts));
                fits.push(fit);
            }
        } else {
            let path = args.counts.as_ref().expect("checked above");
            for (drug, counts) in read_counts(path, &grids)? {
                if args.drug.as_ref().is_some_and(|d| d != &drug) {
                    continue;
                }
                let grid = &grids[&drug];
                fits.push(fit_counts(&counts, grid, &args.quantiles)?);
                samples.push((grid.clone(), counts));
            }
            if fits.is_empty() {
                return Err(CliError::Config("no counts for the requested drug".into()));
            }
        }
        Ok(())
    })?;
    let mut table = String::from("drug,quantile,x_q_log2,cutoff_mg_l,above_grid\n");
    for f in &fits {
        for c in &f.cutoffs {
            writeln!(table, "{},{},{:.6},{},{}", f.drug, c.quantile, c.x_q_log2, c.cutoff_mg_l, c.above_grid).unwrap();
        }
    }
    out.write_text("cutoffs.csv", &table)?;
    out.write_json(
        "ecoff.json",
        &EcoffReport { quantiles: &args.quantiles, classify_quantile: args.classify_quantile, fits: fits.clone() },
    )?;
    if args.data.is_some() {
        write_labels_csv(out.path("labels.csv"), &labels).context("writing labels")?;
    }
    for (f, (grid, counts)) in fits.iter().zip(&samples) {
        let markers: Vec<(f64, String)> = f
            .cutoffs
            .iter()
            .map(|c| {
                let idx = grid.label_to_index(c.cutoff_mg_l.log2()).unwrap_or(grid.n_cells());
                (idx as f64, format!("q={}", c.quantile))
            })
            .collect();
        let svg = svg::histogram(
            &format!("{}: ECOFF cutoffs", f.drug),
            &cell_labels(grid),
            std::slice::from_ref(counts),
            &markers,
        );
        out.write_text(&format!("histogram_{}.svg", f.drug), &svg)?;
    }
    out.write_run_config(&run)?;
    timing.write(&out)
}
