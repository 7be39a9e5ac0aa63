use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DrugGrid, MicDataset, MicObservation};
use crate::error::{Error, Result};
use crate::stats::sample_normal;

/// Repeated measurements of a smaller set of strains, each strain carrying a
/// random log2 intercept shared by all its replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrainStructure {
    pub strains: usize,
    pub replicates_per_strain: usize,
    pub effect_sd: f64,
}

/// Generative description of a censored Gaussian mixture on one grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub grid: DrugGrid,
    pub n: usize,
    pub weights: Vec<f64>,
    pub means_log2: Vec<f64>,
    pub sds_log2: Vec<f64>,
    pub strains: Option<StrainStructure>,
}

impl SimSpec {
    pub fn new(grid: DrugGrid, n: usize, weights: Vec<f64>, means_log2: Vec<f64>, sds_log2: Vec<f64>) -> Result<Self> {
        let spec = Self { grid, n, weights, means_log2, sds_log2, strains: None };
        spec.validate()?;
        Ok(spec)
    }

    /// Replaces `n` by `strains * replicates_per_strain`.
    pub fn with_strains(mut self, strains: StrainStructure) -> Result<Self> {
        self.n = strains.strains * strains.replicates_per_strain;
        self.strains = Some(strains);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || self.means_log2.len() != k || self.sds_log2.len() != k {
            return Err(Error::Validation("weights, means and sds must be non-empty and of equal length".into()));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Validation("weights must be non-negative".into()));
        }
        if (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::Validation("weights must sum to 1".into()));
        }
        if self.sds_log2.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Validation("sds must be positive".into()));
        }
        if self.means_log2.iter().any(|m| !m.is_finite()) {
            return Err(Error::Validation("means must be finite".into()));
        }
        if let Some(s) = &self.strains {
            if s.strains == 0 || s.replicates_per_strain == 0 || !(s.effect_sd >= 0.0) {
                return Err(Error::Validation("invalid strain structure".into()));
            }
            if s.strains * s.replicates_per_strain != self.n {
                return Err(Error::Validation("n must equal strains * replicates_per_strain".into()));
            }
        }
        Ok(())
    }
}

/// A simulated dataset together with the generating component and latent
/// value of each observation (0-based components).
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub dataset: MicDataset,
    pub components: Vec<usize>,
    pub latent: Vec<f64>,
}

pub fn simulate_dataset(spec: &SimSpec, seed: u64) -> Result<MicDataset> {
    Ok(simulate_with_truth(spec, seed)?.dataset)
}

pub fn simulate_with_truth(spec: &SimSpec, seed: u64) -> Result<SimulatedData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drug = spec.grid.drug_code().to_string();
    let mut observations = Vec::with_capacity(spec.n);
    let mut components = Vec::with_capacity(spec.n);
    let mut latent = Vec::with_capacity(spec.n);

    let mut push = |rng: &mut ChaCha8Rng, strain_id: String, replicate_id: Option<u32>, comp: usize, shift: f64| {
        let y = sample_normal(rng, spec.means_log2[comp] + shift, spec.sds_log2[comp]);
        observations.push(MicObservation {
            strain_id,
            drug_code: drug.clone(),
            dilution_index: spec.grid.censor_to_grid(y).expect("finite draw"),
            replicate_id,
        });
        components.push(comp);
        latent.push(y);
    };

    match &spec.strains {
        None => {
            let width = spec.n.to_string().len().max(5);
            for i in 0..spec.n {
                let comp = draw_component(&mut rng, &spec.weights);
                push(&mut rng, format!("S{:0width$}", i + 1), None, comp, 0.0);
            }
        }
        Some(s) => {
            let width = s.strains.to_string().len().max(4);
            for strain in 0..s.strains {
                let comp = draw_component(&mut rng, &spec.weights);
                let effect = if s.effect_sd > 0.0 { sample_normal(&mut rng, 0.0, s.effect_sd) } else { 0.0 };
                for r in 0..s.replicates_per_strain {
                    push(&mut rng, format!("S{:0width$}", strain + 1), Some(r as u32 + 1), comp, effect);
                }
            }
        }
    }

    let grids: BTreeMap<String, DrugGrid> = [(drug, spec.grid.clone())].into();
    Ok(SimulatedData { dataset: MicDataset::new(observations, grids)?, components, latent })
}

fn draw_component<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}
