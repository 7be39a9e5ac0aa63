//! Dilution grids, censored MIC observations, file ingestion and a synthetic
//! generator. All modeling happens on the log2(MIC) scale; mg/L appears only
//! at the file boundary.

mod grid;
mod io;
mod simulate;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use grid::{censor_to_grid, DrugGrid};
pub use io::{
    load_dilution_grid, load_mic_dataset, parse_dilution_grid, parse_mic_dataset, write_dilution_grid,
    write_mic_dataset, MicColumn,
};
pub use simulate::{simulate_dataset, simulate_with_truth, SimSpec, SimulatedData, StrainStructure};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MicObservation {
    pub strain_id: String,
    pub drug_code: String,
    /// 1-based cell index; T+1 is the right-censor label.
    pub dilution_index: usize,
    pub replicate_id: Option<u32>,
}

/// Latent interval for an observation on its drug's grid.
pub fn interval_bounds(obs: &MicObservation, grid: &DrugGrid) -> Result<(f64, f64)> {
    if obs.drug_code != grid.drug_code() {
        return Err(Error::Validation(format!(
            "observation for {} checked against the {} grid",
            obs.drug_code,
            grid.drug_code()
        )));
    }
    grid.interval_bounds(obs.dilution_index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicDataset {
    observations: Vec<MicObservation>,
    grids: BTreeMap<String, DrugGrid>,
}

impl MicDataset {
    pub fn new(observations: Vec<MicObservation>, grids: BTreeMap<String, DrugGrid>) -> Result<Self> {
        for (i, obs) in observations.iter().enumerate() {
            let grid = grids.get(&obs.drug_code).ok_or_else(|| {
                Error::Validation(format!(
                    "observation {} ({}) references unknown drug {}",
                    i + 1,
                    obs.strain_id,
                    obs.drug_code
                ))
            })?;
            grid.interval_bounds(obs.dilution_index)?;
        }
        Ok(Self { observations, grids })
    }

    pub fn observations(&self) -> &[MicObservation] {
        &self.observations
    }

    pub fn grids(&self) -> &BTreeMap<String, DrugGrid> {
        &self.grids
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Isolate counts per drug, the table-of-isolates view of the data.
    pub fn counts_by_drug(&self) -> BTreeMap<String, usize> {
        let mut counts: BTreeMap<String, usize> = self.grids.keys().map(|k| (k.clone(), 0)).collect();
        for obs in &self.observations {
            *counts.get_mut(&obs.drug_code).unwrap() += 1;
        }
        counts
    }

    /// The single-drug view consumed by the samplers.
    pub fn for_drug(&self, drug_code: &str) -> Result<DrugSample> {
        let grid = self
            .grids
            .get(drug_code)
            .ok_or_else(|| Error::Validation(format!("no grid for drug {drug_code}")))?
            .clone();
        let observations: Vec<MicObservation> =
            self.observations.iter().filter(|o| o.drug_code == drug_code).cloned().collect();
        DrugSample::new(grid, observations)
    }
}

/// Observations of one drug bound to its grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DrugSample {
    grid: DrugGrid,
    observations: Vec<MicObservation>,
    strain_of: Vec<usize>,
    strain_ids: Vec<String>,
}

impl DrugSample {
    pub fn new(grid: DrugGrid, observations: Vec<MicObservation>) -> Result<Self> {
        let mut strain_ids: Vec<String> = Vec::new();
        let mut lookup: BTreeMap<&str, usize> = BTreeMap::new();
        let mut strain_of = Vec::with_capacity(observations.len());
        for obs in &observations {
            interval_bounds(obs, &grid)?;
            let next = lookup.len();
            let idx = *lookup.entry(obs.strain_id.as_str()).or_insert(next);
            if idx == strain_ids.len() {
                strain_ids.push(obs.strain_id.clone());
            }
            strain_of.push(idx);
        }
        Ok(Self { grid, observations, strain_of, strain_ids })
    }

    pub fn grid(&self) -> &DrugGrid {
        &self.grid
    }

    pub fn drug_code(&self) -> &str {
        self.grid.drug_code()
    }

    pub fn observations(&self) -> &[MicObservation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// 0-based cell of each observation.
    pub fn cells(&self) -> Vec<usize> {
        self.observations.iter().map(|o| o.dilution_index - 1).collect()
    }

    /// Recorded log2 label of each observation, as a naive analysis would read it.
    pub fn labels_log2(&self) -> Vec<f64> {
        self.observations.iter().map(|o| self.grid.label_log2(o.dilution_index).unwrap()).collect()
    }

    /// Number of observations in each cell (length T+1).
    pub fn cell_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.grid.n_cells()];
        for o in &self.observations {
            counts[o.dilution_index - 1] += 1;
        }
        counts
    }

    /// Dense strain index per observation, in order of first appearance.
    pub fn strain_of(&self) -> &[usize] {
        &self.strain_of
    }

    pub fn n_strains(&self) -> usize {
        self.strain_ids.len()
    }

    /// Same data on a grid shifted by `offset` log2 units.
    pub fn shifted(&self, offset: f64) -> Self {
        let grid = self.grid.shifted(offset);
        Self {
            grid,
            observations: self.observations.clone(),
            strain_of: self.strain_of.clone(),
            strain_ids: self.strain_ids.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> DrugGrid {
        DrugGrid::new("RIF", vec![-5.0, -4.0, -3.0, -2.0, -1.0, 0.0], None).unwrap()
    }

    fn obs(strain: &str, drug: &str, idx: usize) -> MicObservation {
        MicObservation { strain_id: strain.into(), drug_code: drug.into(), dilution_index: idx, replicate_id: None }
    }

    #[test]
    fn dataset_rejects_unknown_drug_and_bad_index() {
        let grids: BTreeMap<_, _> = [("RIF".to_string(), grid())].into();
        assert!(MicDataset::new(vec![obs("a", "INH", 1)], grids.clone()).is_err());
        assert!(MicDataset::new(vec![obs("a", "RIF", 8)], grids.clone()).is_err());
        assert!(MicDataset::new(vec![obs("a", "RIF", 7)], grids).is_ok());
    }

    #[test]
    fn drug_sample_tracks_strains_and_counts() {
        let grids: BTreeMap<_, _> = [("RIF".to_string(), grid())].into();
        let ds = MicDataset::new(vec![obs("a", "RIF", 1), obs("b", "RIF", 3), obs("a", "RIF", 3)], grids).unwrap();
        let s = ds.for_drug("RIF").unwrap();
        assert_eq!(s.strain_of(), &[0, 1, 0]);
        assert_eq!(s.n_strains(), 2);
        assert_eq!(s.cell_counts(), vec![1, 0, 2, 0, 0, 0, 0]);
        assert_eq!(s.labels_log2(), vec![-5.0, -3.0, -3.0]);
        assert_eq!(ds.counts_by_drug()["RIF"], 3);
    }

    #[test]
    fn interval_bounds_checks_drug() {
        let g = grid();
        assert_eq!(interval_bounds(&obs("a", "RIF", 4), &g).unwrap(), (-3.0, -2.0));
        assert!(interval_bounds(&obs("a", "INH", 4), &g).is_err());
    }
}
