use nalgebra::DVector;
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::snps::{compute_grm, SnpMatrix};
use super::{softmax_probs, GwasLabels};
use crate::error::{Error, Result};
use crate::stats::sample_normal;

/// Synthetic association data: independent binary variants, a few causal
/// ones shifting the non-reference predictors, and an optional polygenic
/// effect drawn from the relationship matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GwasSimSpec {
    pub n: usize,
    pub p: usize,
    pub n_causal: usize,
    pub effect: f64,
    /// Non-reference class intercepts; their count fixes the class count.
    pub intercepts: Vec<f64>,
    pub maf_min: f64,
    pub maf_max: f64,
    pub random_effect_var: f64,
    /// When set, causal variant `c` shifts only class `2 + c mod (K-1)`.
    pub class_specific: bool,
}

impl Default for GwasSimSpec {
    fn default() -> Self {
        Self {
            n: 500,
            p: 200,
            n_causal: 3,
            effect: 3.0,
            intercepts: vec![-1.0, -1.5],
            maf_min: 0.1,
            maf_max: 0.5,
            random_effect_var: 0.25,
            class_specific: false,
        }
    }
}

/// Genotypes for strains of known cluster. Causal variant `c` marks cluster
/// `c + 2` (0-based `c + 1`): members carry it with probability `penetrance`,
/// everyone else with probability `background`. Other variants are
/// independent with frequencies drawn from `maf_min..=maf_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkedSnpSpec {
    pub p: usize,
    pub penetrance: f64,
    pub background: f64,
    pub maf_min: f64,
    pub maf_max: f64,
}

impl Default for LinkedSnpSpec {
    fn default() -> Self {
        Self { p: 100, penetrance: 0.9, background: 0.02, maf_min: 0.05, maf_max: 0.5 }
    }
}

/// Returns the genotypes and the ascending indices of the causal variants,
/// one per non-reference cluster. `clusters` are 0-based, one per strain.
pub fn simulate_linked_snps(
    strain_ids: &[String],
    clusters: &[usize],
    spec: &LinkedSnpSpec,
    seed: u64,
) -> Result<(SnpMatrix, Vec<usize>)> {
    if strain_ids.len() != clusters.len() || strain_ids.is_empty() {
        return Err(Error::Validation("need one cluster per strain and at least one strain".into()));
    }
    let n_causal = clusters.iter().max().copied().unwrap_or(0);
    if n_causal > spec.p {
        return Err(Error::Validation(format!("{} variants cannot mark {n_causal} clusters", spec.p)));
    }
    let probs = [spec.penetrance, spec.background];
    if probs.iter().any(|q| !(0.0..=1.0).contains(q))
        || !(0.0 < spec.maf_min && spec.maf_min <= spec.maf_max && spec.maf_max <= 0.5)
    {
        return Err(Error::Validation(
            "carrier probabilities must lie in [0, 1] and 0 < maf_min <= maf_max <= 0.5".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut causal = sample(&mut rng, spec.p, n_causal).into_vec();
    causal.sort_unstable();
    let carriers: Vec<Vec<u32>> = (0..spec.p)
        .map(|j| match causal.iter().position(|c| *c == j) {
            Some(c) => (0..clusters.len() as u32)
                .filter(|i| {
                    let q = if clusters[*i as usize] == c + 1 { spec.penetrance } else { spec.background };
                    rng.random_bool(q)
                })
                .collect(),
            None => {
                let f = rng.random_range(spec.maf_min..=spec.maf_max);
                (0..clusters.len() as u32).filter(|_| rng.random_bool(f)).collect()
            }
        })
        .collect();
    let snps = SnpMatrix::new(
        strain_ids.to_vec(),
        (0..spec.p).map(|j| format!("var{:05}", j + 1)).collect(),
        (0..spec.p as u64).map(|j| 1000 * (j + 1)).collect(),
        carriers,
    )?;
    Ok((snps, causal))
}

#[derive(Debug, Clone)]
pub struct GwasSimulation {
    pub labels: GwasLabels,
    /// Indices of causal variants, ascending.
    pub causal: Vec<usize>,
}

pub fn simulate_gwas(spec: &GwasSimSpec, seed: u64) -> Result<GwasSimulation> {
    if spec.n < 2 || spec.p == 0 || spec.n_causal > spec.p || spec.intercepts.is_empty() {
        return Err(Error::Validation("simulation needs n >= 2, p >= 1, n_causal <= p and an intercept".into()));
    }
    if !(0.0 < spec.maf_min && spec.maf_min <= spec.maf_max && spec.maf_max <= 0.5) || spec.random_effect_var < 0.0 {
        return Err(Error::Validation("allele frequencies must satisfy 0 < min <= max <= 0.5".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, p, l) = (spec.n, spec.p, spec.intercepts.len());
    let carriers: Vec<Vec<u32>> = (0..p)
        .map(|_| {
            let f = rng.random_range(spec.maf_min..=spec.maf_max);
            (0..n as u32).filter(|_| rng.random_bool(f)).collect()
        })
        .collect();
    let snps = SnpMatrix::new(
        (0..n).map(|i| format!("S{:04}", i + 1)).collect(),
        (0..p).map(|j| format!("var{:05}", j + 1)).collect(),
        (0..p as u64).map(|j| 1000 * (j + 1)).collect(),
        carriers,
    )?;
    let mut causal = sample(&mut rng, p, spec.n_causal).into_vec();
    causal.sort_unstable();
    let mut eta: Vec<Vec<f64>> = vec![spec.intercepts.clone(); n];
    if spec.random_effect_var > 0.0 {
        let chol = compute_grm(&snps)?
            .cholesky()
            .ok_or_else(|| Error::Numerical("relationship matrix is not positive definite".into()))?;
        let z = DVector::from_iterator(n, (0..n).map(|_| sample_normal(&mut rng, 0.0, 1.0)));
        let u = chol.l() * z * spec.random_effect_var.sqrt();
        for (row, ui) in eta.iter_mut().zip(u.iter()) {
            row.iter_mut().for_each(|e| *e += ui);
        }
    }
    for (c, &j) in causal.iter().enumerate() {
        for &i in snps.carriers(j) {
            let row = &mut eta[i as usize];
            if spec.class_specific {
                row[c % l] += spec.effect;
            } else {
                row.iter_mut().for_each(|e| *e += spec.effect);
            }
        }
    }
    let labels: Vec<usize> = eta
        .iter()
        .map(|row| {
            let full: Vec<f64> = std::iter::once(0.0).chain(row.iter().copied()).collect();
            let probs = softmax_probs(&full);
            let mut r = rng.random::<f64>();
            for (k, pk) in probs.iter().enumerate() {
                if r < *pk {
                    return k + 1;
                }
                r -= pk;
            }
            probs.len()
        })
        .collect();
    Ok(GwasSimulation { labels: GwasLabels::new(snps, &labels)?, causal })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linked_variants_track_their_cluster() {
        let n = 4000;
        let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        let clusters: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let spec = LinkedSnpSpec { p: 20, ..LinkedSnpSpec::default() };
        let (snps, causal) = simulate_linked_snps(&ids, &clusters, &spec, 4).unwrap();
        assert_eq!(causal.len(), 2);
        for (c, &j) in causal.iter().enumerate() {
            let (mut inside, mut outside) = (0.0, 0.0);
            for &i in snps.carriers(j) {
                if clusters[i as usize] == c + 1 {
                    inside += 1.0;
                } else {
                    outside += 1.0;
                }
            }
            let members = (n / 3) as f64;
            assert!((inside / members - 0.9).abs() < 0.04, "{}", inside / members);
            assert!((outside / (n as f64 - members) - 0.02).abs() < 0.01);
        }
        let again = simulate_linked_snps(&ids, &clusters, &spec, 4).unwrap();
        assert_eq!(again.0, snps);
        assert!(simulate_linked_snps(&ids, &clusters, &LinkedSnpSpec { p: 1, ..spec }, 4).is_err());
    }

    #[test]
    fn simulated_gwas_is_reproducible() {
        let spec = GwasSimSpec { n: 60, p: 10, ..GwasSimSpec::default() };
        let a = simulate_gwas(&spec, 9).unwrap();
        let b = simulate_gwas(&spec, 9).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.causal, b.causal);
        assert_eq!(a.causal.len(), 3);
    }
}
