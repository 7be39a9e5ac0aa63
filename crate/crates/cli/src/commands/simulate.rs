use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use micclust_core::data::{simulate_with_truth, write_dilution_grid, write_mic_dataset, SimSpec};
use micclust_core::eval::{write_truth_csv, TruthKind, TruthSet};
use micclust_core::gwas::{simulate_linked_snps, write_snp_csv, LinkedSnpSpec};
use micclust_core::DrugGrid;
use serde::{Deserialize, Serialize};

use super::{as_config, resolve_seed};
use crate::config::{ConfigFile, RunConfig};
use crate::error::{CliError, CliResult, Context};
use crate::output::{OutDir, Timing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Three well-separated levels on a -6..4 grid.
    ThreeComponent,
    /// Wild type plus one broad resistant level.
    TwoComponent,
    /// A single wild-type Gaussian.
    Single,
    /// Two levels with a quarter of all strains above the top dilution.
    Censored,
}

impl Preset {
    /// `(grid min, grid max, weights, means, sds)` in log2 units.
    fn mixture(self) -> (i32, i32, Vec<f64>, Vec<f64>, Vec<f64>) {
        match self {
            Preset::ThreeComponent => (-6, 4, vec![0.55, 0.3, 0.15], vec![-3.0, 0.0, 3.0], vec![0.5, 0.5, 0.5]),
            Preset::TwoComponent => (-6, 4, vec![0.7, 0.3], vec![-2.0, 2.0], vec![0.7, 1.0]),
            Preset::Single => (-6, 4, vec![1.0], vec![-2.0], vec![1.0]),
            Preset::Censored => (-4, 4, vec![0.725, 0.275], vec![-2.0, 6.0], vec![0.6, 1.5]),
        }
    }
}

/// Settings of a synthetic study. Explicit mixture fields override the preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub preset: Preset,
    pub n: usize,
    pub drug: String,
    /// Lowest and highest tested log2 dilution.
    pub grid: Option<(i32, i32)>,
    pub weights: Option<Vec<f64>>,
    pub means: Option<Vec<f64>>,
    pub sds: Option<Vec<f64>>,
    pub snps: LinkedSnpSpec,
    /// Wild-type strains without marker variants reported as susceptible controls.
    pub controls: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            preset: Preset::ThreeComponent,
            n: 500,
            drug: "RIF".into(),
            grid: None,
            weights: None,
            means: None,
            sds: None,
            snps: LinkedSnpSpec::default(),
            controls: 20,
        }
    }
}

impl SimulateConfig {
    pub fn spec(&self) -> CliResult<SimSpec> {
        let (lo, hi, w, m, s) = self.preset.mixture();
        let (lo, hi) = self.grid.unwrap_or((lo, hi));
        if lo >= hi {
            return Err(CliError::Config(format!("grid range {lo}..{hi} is empty")));
        }
        let grid = DrugGrid::new(&self.drug, (lo..=hi).map(f64::from).collect(), None)
            .context("simulation grid")
            .map_err(as_config)?;
        SimSpec::new(
            grid,
            self.n,
            self.weights.clone().unwrap_or(w),
            self.means.clone().unwrap_or(m),
            self.sds.clone().unwrap_or(s),
        )
        .context("simulation mixture")
        .map_err(as_config)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Number of strains.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub drug: Option<String>,
    /// Number of variants in the genotype file.
    #[arg(long)]
    pub variants: Option<usize>,
    #[arg(long)]
    pub controls: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn execute(args: &SimulateArgs, file: &ConfigFile) -> CliResult<()> {
    let mut cfg = file.simulate.clone().unwrap_or_default();
    if let Some(p) = args.preset {
        cfg.preset = p;
    }
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(d) = &args.drug {
        cfg.drug = d.clone();
    }
    if let Some(p) = args.variants {
        cfg.snps.p = p;
    }
    if let Some(c) = args.controls {
        cfg.controls = c;
    }
    let seed = resolve_seed(args.seed, file);
    let spec = cfg.spec()?;
    let mut timing = Timing::new();
    let out = OutDir::create(&args.out)?;
    timing.time("simulate", || write_study(&cfg, &spec, seed, &out))?;
    let mut run = RunConfig::new("simulate", &args.out, seed);
    run.drug = Some(cfg.drug.clone());
    run.simulate = Some(cfg);
    out.write_run_config(&run)?;
    timing.write(&out)
}

/// Writes `mic.csv`, `grid.csv`, `components.csv`, `snps.csv` and `truth.csv`.
///
/// Each non-reference component gets one marker variant; its carriers are the
/// resistant truth set. Controls are the first wild-type strains carrying no
/// marker.
fn write_study(cfg: &SimulateConfig, spec: &SimSpec, seed: u64, out: &OutDir) -> CliResult<()> {
    let sim = simulate_with_truth(spec, seed).context("simulating MIC data")?;
    let ids: Vec<String> = sim.dataset.observations().iter().map(|o| o.strain_id.clone()).collect();
    write_mic_dataset(out.path("mic.csv"), &sim.dataset).context("writing mic.csv")?;
    write_dilution_grid(out.path("grid.csv"), sim.dataset.grids()).context("writing grid.csv")?;
    let mut comps = String::from("strain_id,drug,component\n");
    for (id, c) in ids.iter().zip(&sim.components) {
        comps.push_str(&format!("{id},{},{}\n", cfg.drug, c + 1));
    }
    out.write_text("components.csv", &comps)?;

    let snp_seed = seed ^ 0x5eed_5eed;
    let (snps, causal) =
        simulate_linked_snps(&ids, &sim.components, &cfg.snps, snp_seed).context("simulating genotypes")?;
    write_snp_csv(out.path("snps.csv"), &snps).context("writing snps.csv")?;

    let markers: BTreeSet<u32> = causal.iter().flat_map(|j| snps.carriers(*j).iter().copied()).collect();
    let mut truth = TruthSet::new();
    for i in &markers {
        truth.insert(&cfg.drug, &ids[*i as usize], TruthKind::ResistantByVariant);
    }
    let controls =
        (0..ids.len()).filter(|i| sim.components[*i] == 0 && !markers.contains(&(*i as u32))).take(cfg.controls);
    for i in controls {
        truth.insert(&cfg.drug, &ids[i], TruthKind::SusceptibleControl);
    }
    write_truth_csv(out.path("truth.csv"), &truth).context("writing truth.csv")?;
    let causal_ids: BTreeMap<usize, &str> =
        causal.iter().enumerate().map(|(c, j)| (c + 2, snps.variant_ids()[*j].as_str())).collect();
    out.write_json("causal_variants.json", &causal_ids)
}
