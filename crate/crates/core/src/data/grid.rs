use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for matching a recorded log2 MIC to a tested dilution.
const LABEL_TOL: f64 = 1e-9;

/// The ascending log2 dilution ladder of one drug on the plate.
///
/// Cells are indexed 1..=T+1. Cell 1 is the left-censored cell `(-inf, d_1)`,
/// cell `j` in 2..=T is `[d_{j-1}, d_j)`, and cell T+1 is the right-censored
/// cell `[d_T, inf)` recorded under the untested label `censor_label_log2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrugGrid {
    drug_code: String,
    tested_log2: Vec<f64>,
    censor_label_log2: f64,
    irregular: bool,
}

impl DrugGrid {
    /// Builds a grid, deriving the censor label as `d_T + 1` when absent.
    ///
    /// Non-unit steps are accepted but flagged as irregular.
    pub fn new(drug_code: impl Into<String>, tested_log2: Vec<f64>, censor_label_log2: Option<f64>) -> Result<Self> {
        let drug_code = drug_code.into();
        if drug_code.is_empty() {
            return Err(Error::Validation("grid has an empty drug code".into()));
        }
        if tested_log2.is_empty() {
            return Err(Error::Validation(format!("grid for {drug_code} has no tested dilutions")));
        }
        if tested_log2.iter().any(|d| !d.is_finite()) {
            return Err(Error::Validation(format!("grid for {drug_code} contains a non-finite dilution")));
        }
        let mut irregular = false;
        for w in tested_log2.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Validation(format!(
                    "grid for {drug_code} is not strictly ascending ({} then {})",
                    w[0], w[1]
                )));
            }
            if ((w[1] - w[0]) - 1.0).abs() > LABEL_TOL {
                irregular = true;
            }
        }
        let top = *tested_log2.last().unwrap();
        let censor_label_log2 = censor_label_log2.unwrap_or(top + 1.0);
        if !(censor_label_log2 > top) {
            return Err(Error::Validation(format!(
                "censor label {censor_label_log2} for {drug_code} must exceed the top dilution {top}"
            )));
        }
        if irregular {
            log::warn!("grid for {drug_code} has non-unit log2 steps");
        }
        Ok(Self { drug_code, tested_log2, censor_label_log2, irregular })
    }

    pub fn drug_code(&self) -> &str {
        &self.drug_code
    }

    pub fn tested_log2(&self) -> &[f64] {
        &self.tested_log2
    }

    pub fn censor_label_log2(&self) -> f64 {
        self.censor_label_log2
    }

    pub fn is_irregular(&self) -> bool {
        self.irregular
    }

    /// Number of tested dilutions T.
    pub fn n_tested(&self) -> usize {
        self.tested_log2.len()
    }

    /// Number of observable cells, T + 1.
    pub fn n_cells(&self) -> usize {
        self.tested_log2.len() + 1
    }

    pub fn top_tested(&self) -> f64 {
        *self.tested_log2.last().unwrap()
    }

    /// The log2 value recorded for a cell (`d_j`, or the censor label for T+1).
    pub fn label_log2(&self, index: usize) -> Result<f64> {
        self.check_index(index)?;
        Ok(if index == self.n_cells() { self.censor_label_log2 } else { self.tested_log2[index - 1] })
    }

    /// Maps a latent log2 value onto its 1-based cell index.
    pub fn censor_to_grid(&self, log2_value: f64) -> Result<usize> {
        if log2_value.is_nan() {
            return Err(Error::Domain("cannot censor a NaN value".into()));
        }
        Ok(self.tested_log2.partition_point(|d| *d <= log2_value) + 1)
    }

    /// Maps a recorded log2 MIC (the first inhibiting concentration) onto its
    /// cell: the smallest tested dilution at or above the value, otherwise the
    /// right-censored cell.
    pub fn label_to_index(&self, log2_value: f64) -> Result<usize> {
        if !log2_value.is_finite() {
            return Err(Error::Domain(format!("recorded MIC {log2_value} is not a finite log2 value")));
        }
        Ok(self.tested_log2.partition_point(|d| *d + LABEL_TOL < log2_value) + 1)
    }

    /// Latent interval `(lower, upper)` for a cell index.
    pub fn interval_bounds(&self, index: usize) -> Result<(f64, f64)> {
        self.check_index(index)?;
        let t = self.n_tested();
        let lower = if index == 1 { f64::NEG_INFINITY } else { self.tested_log2[index - 2] };
        let upper = if index == t + 1 { f64::INFINITY } else { self.tested_log2[index - 1] };
        Ok((lower, upper))
    }

    /// Bounds of every cell, in index order.
    pub fn all_bounds(&self) -> Vec<(f64, f64)> {
        (1..=self.n_cells()).map(|j| self.interval_bounds(j).unwrap()).collect()
    }

    /// Returns a copy with every dilution shifted by `offset` log2 units.
    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            drug_code: self.drug_code.clone(),
            tested_log2: self.tested_log2.iter().map(|d| d + offset).collect(),
            censor_label_log2: self.censor_label_log2 + offset,
            irregular: self.irregular,
        }
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index == 0 || index > self.n_cells() {
            return Err(Error::Validation(format!(
                "dilution index {index} outside 1..={} for {}",
                self.n_cells(),
                self.drug_code
            )));
        }
        Ok(())
    }
}

/// Free-function form of [`DrugGrid::censor_to_grid`].
pub fn censor_to_grid(log2_value: f64, grid: &DrugGrid) -> Result<usize> {
    grid.censor_to_grid(log2_value)
}
