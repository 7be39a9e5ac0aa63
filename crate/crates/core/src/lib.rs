//! Bayesian clustering of censored MIC dilution data.
//!
//! The crate models log2 minimum inhibitory concentrations recorded on a
//! doubling-dilution grid as interval-censored draws from a Gaussian mixture
//! with an unknown number of components, and provides the comparison methods
//! (plain Gaussian mixture, Dirichlet-process mixture, ECOFF), posterior
//! summaries and a spike-and-slab association model for cluster labels.

pub mod baselines;
pub mod cgmm;
pub mod data;
pub mod ecoff;
pub mod error;
pub mod eval;
pub mod gwas;
pub mod postprocess;
pub mod stats;

pub use cgmm::{Draw, FitConfig, Method, MixtureState, PriorConfig, TraceSet};
pub use data::{DrugGrid, DrugSample, MicDataset, MicObservation};
pub use error::{Error, Result};
