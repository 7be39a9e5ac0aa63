//! Association of cluster labels with binary genomic variants: softmax
//! regression with spike-and-slab effects and a polygenic random effect.

mod polya_gamma;
mod sampler;
mod simulate;
mod snps;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::postprocess::ClusterAssignment;
use crate::stats::quantile_sorted;

pub use polya_gamma::{pg1_mean, sample_pg1};
#[doc(hidden)]
pub use sampler::permute_strains;
pub use sampler::run_gwas_chain;
pub use simulate::{simulate_gwas, simulate_linked_snps, GwasSimSpec, GwasSimulation, LinkedSnpSpec};
pub use snps::{compute_grm, load_snp_csv, parse_snp_csv, write_snp_csv, SnpMatrix};

/// Lower bound on `1 - PIP` in the Manhattan score, so scores top out at 6.
pub const SCORE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GwasConfig {
    /// Slab variance of each effect.
    pub tau2_beta: f64,
    pub omega_a: f64,
    /// Defaults to the number of variants.
    pub omega_b: Option<f64>,
    pub sigma_u_shape: f64,
    pub sigma_u_scale: f64,
    /// Prior variance of the class intercepts.
    pub intercept_var: f64,
    pub iterations: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub threshold: f64,
    pub min_maf: f64,
    pub max_variants: usize,
    pub random_effect: bool,
    pub score_test: bool,
}

impl Default for GwasConfig {
    fn default() -> Self {
        Self {
            tau2_beta: 1.0,
            omega_a: 1.0,
            omega_b: None,
            sigma_u_shape: 2.0,
            sigma_u_scale: 1.0,
            intercept_var: 100.0,
            iterations: 5000,
            burnin: 1000,
            thin: 5,
            seed: 0,
            threshold: 0.95,
            min_maf: 0.01,
            max_variants: 20_000,
            random_effect: true,
            score_test: false,
        }
    }
}

impl GwasConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau2_beta", self.tau2_beta),
            ("omega_a", self.omega_a),
            ("omega_b", self.omega_b.unwrap_or(1.0)),
            ("sigma_u_shape", self.sigma_u_shape),
            ("sigma_u_scale", self.sigma_u_scale),
            ("intercept_var", self.intercept_var),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Validation(format!("threshold must be in (0,1), got {}", self.threshold)));
        }
        if !(0.0..0.5).contains(&self.min_maf) {
            return Err(Error::Validation(format!("min_maf must be in [0,0.5), got {}", self.min_maf)));
        }
        if self.thin == 0 || self.iterations <= self.burnin || self.max_variants == 0 {
            return Err(Error::Validation("need thin >= 1, iterations > burnin and max_variants >= 1".into()));
        }
        Ok(())
    }

    pub fn retained_draws(&self) -> usize {
        self.iterations.saturating_sub(self.burnin) / self.thin.max(1)
    }
}

/// Genotypes and class labels aligned by strain. `y` holds 0-based class
/// indices into `classes`, whose first entry is the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct GwasLabels {
    pub snps: SnpMatrix,
    pub y: Vec<usize>,
    pub classes: Vec<usize>,
}

impl GwasLabels {
    /// `labels` are cluster numbers in genotype strain order.
    pub fn new(snps: SnpMatrix, labels: &[usize]) -> Result<Self> {
        if labels.len() != snps.n_strains() {
            return Err(Error::Validation(format!(
                "{} labels for {} genotyped strains",
                labels.len(),
                snps.n_strains()
            )));
        }
        let mut classes: Vec<usize> = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() < 2 {
            return Err(Error::Validation("association needs at least two label classes".into()));
        }
        let y = labels.iter().map(|c| classes.binary_search(c).unwrap()).collect();
        Ok(Self { snps, y, classes })
    }

    /// Aligns MAP cluster assignments with genotypes. Strains with several
    /// assignments take their most frequent cluster (lowest on ties);
    /// genotyped strains without a label are dropped.
    pub fn from_assignments(assignments: &[ClusterAssignment], snps: &SnpMatrix) -> Result<Self> {
        let mut votes: BTreeMap<&str, BTreeMap<usize, usize>> = BTreeMap::new();
        for a in assignments {
            *votes.entry(a.strain_id.as_str()).or_default().entry(a.map_cluster).or_default() += 1;
        }
        let genotyped: HashMap<&str, usize> =
            snps.strain_ids().iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        if let Some(missing) = votes.keys().find(|s| !genotyped.contains_key(*s)) {
            return Err(Error::Validation(format!("labelled strain {missing} has no genotypes")));
        }
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        for s in snps.strain_ids() {
            if let Some(v) = votes.get(s.as_str()) {
                let best = v.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).unwrap();
                ids.push(s.clone());
                labels.push(*best.0);
            }
        }
        let dropped = snps.n_strains() - ids.len();
        if dropped > 0 {
            log::info!("dropping {dropped} genotyped strains without labels");
        }
        Self::new(snps.subset_strains(&ids)?, &labels)
    }
}

/// Retained state of one sweep. Effects are listed for included variants
/// only, one value per non-reference class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwasDraw {
    pub iter: usize,
    pub included: Vec<u32>,
    pub effects: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub omega: f64,
    pub sigma_u2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwasTrace {
    pub classes: Vec<usize>,
    pub n_strains: usize,
    pub n_variants: usize,
    pub seed: u64,
    pub chain: usize,
    pub draws: Vec<GwasDraw>,
    pub add_acceptance: f64,
    pub remove_acceptance: f64,
    #[serde(skip)]
    pub runtime_secs: f64,
}

/// Overflow-safe softmax; invariant to adding a constant to every entry.
pub fn softmax_probs(eta: &[f64]) -> Vec<f64> {
    let m = eta.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
    let e: Vec<f64> = eta.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Class probabilities of every strain for given intercepts, effects of
/// included variants and random effect. The reference class has predictor 0.
pub fn predict_probabilities(
    snps: &SnpMatrix,
    intercepts: &[f64],
    effects: &[(usize, Vec<f64>)],
    u: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let n = snps.n_strains();
    let l = intercepts.len();
    if u.len() != n || effects.iter().any(|(j, b)| *j >= snps.n_variants() || b.len() != l) {
        return Err(Error::Validation("effect or random-effect dimensions do not match".into()));
    }
    let mut eta: Vec<Vec<f64>> =
        (0..n).map(|i| std::iter::once(0.0).chain(intercepts.iter().map(|a| a + u[i])).collect()).collect();
    for (j, b) in effects {
        for &i in snps.carriers(*j) {
            for k in 0..l {
                eta[i as usize][k + 1] += b[k];
            }
        }
    }
    Ok(eta.iter().map(|e| softmax_probs(e)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant_id: String,
    pub position: u64,
    pub pip: f64,
    /// Posterior mean effect per non-reference class, given inclusion.
    /// Zero when the variant was never included.
    pub effects: Vec<f64>,
    pub significant: bool,
    pub score: f64,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwasResult {
    pub classes: Vec<usize>,
    pub threshold: f64,
    pub significance_rule: String,
    pub draws: usize,
    pub sigma_u2_mean: f64,
    pub sigma_u2_interval: (f64, f64),
    pub add_acceptance: f64,
    pub remove_acceptance: f64,
    /// Ordered by position.
    pub variants: Vec<VariantResult>,
}

impl GwasResult {
    pub fn threshold_line(&self) -> f64 {
        -(1.0 - self.threshold).log10()
    }

    pub fn significant(&self) -> impl Iterator<Item = &VariantResult> {
        self.variants.iter().filter(|v| v.significant)
    }
}

pub fn manhattan_score(pip: f64) -> f64 {
    -(1.0 - pip).max(SCORE_FLOOR).log10()
}

/// Posterior inclusion probabilities, conditional effect means and
/// Manhattan scores from one or more chains over the same variants.
pub fn summarize_gwas(traces: &[GwasTrace], config: &GwasConfig, snps: &SnpMatrix) -> Result<GwasResult> {
    let first = traces.first().ok_or_else(|| Error::Validation("no traces to summarize".into()))?;
    let p = snps.n_variants();
    if traces.iter().any(|t| t.n_variants != p || t.classes != first.classes) {
        return Err(Error::Validation("traces disagree on variants or classes".into()));
    }
    let total: usize = traces.iter().map(|t| t.draws.len()).sum();
    if total == 0 {
        return Err(Error::Validation("traces hold no draws".into()));
    }
    let l = first.classes.len() - 1;
    let mut hits = vec![0usize; p];
    let mut sums = vec![vec![0.0; l]; p];
    let mut sigma: Vec<f64> = Vec::with_capacity(total);
    for d in traces.iter().flat_map(|t| &t.draws) {
        for (j, b) in d.included.iter().zip(&d.effects) {
            let j = *j as usize;
            hits[j] += 1;
            for k in 0..l {
                sums[j][k] += b[k];
            }
        }
        sigma.push(d.sigma_u2);
    }
    sigma.sort_by(f64::total_cmp);
    let mut variants: Vec<VariantResult> = (0..p)
        .map(|j| {
            let pip = hits[j] as f64 / total as f64;
            VariantResult {
                variant_id: snps.variant_ids()[j].clone(),
                position: snps.positions()[j],
                pip,
                effects: sums[j].iter().map(|s| if hits[j] > 0 { s / hits[j] as f64 } else { 0.0 }).collect(),
                significant: pip >= config.threshold,
                score: manhattan_score(pip),
                p_value: None,
            }
        })
        .collect();
    variants.sort_by(|a, b| a.position.cmp(&b.position).then_with(|| a.variant_id.cmp(&b.variant_id)));
    let n_traces = traces.len() as f64;
    Ok(GwasResult {
        classes: first.classes.clone(),
        threshold: config.threshold,
        significance_rule: format!("posterior inclusion probability >= {}", config.threshold),
        draws: total,
        sigma_u2_mean: sigma.iter().sum::<f64>() / total as f64,
        sigma_u2_interval: (quantile_sorted(&sigma, 0.025), quantile_sorted(&sigma, 0.975)),
        add_acceptance: traces.iter().map(|t| t.add_acceptance).sum::<f64>() / n_traces,
        remove_acceptance: traces.iter().map(|t| t.remove_acceptance).sum::<f64>() / n_traces,
        variants,
    })
}

/// Per-variant multinomial score test against the intercept-only model,
/// chi-square with one degree of freedom per non-reference class.
/// Returns p-values in variant order.
pub fn score_test_pvalues(labels: &GwasLabels) -> Vec<f64> {
    let snps = &labels.snps;
    let n = snps.n_strains() as f64;
    let k = labels.classes.len();
    let l = k - 1;
    let mut freq = vec![0.0; k];
    for &c in &labels.y {
        freq[c] += 1.0 / n;
    }
    let mut v = DMatrix::<f64>::zeros(l, l);
    for a in 0..l {
        for b in 0..l {
            v[(a, b)] = if a == b { freq[a + 1] } else { 0.0 } - freq[a + 1] * freq[b + 1];
        }
    }
    (0..snps.n_variants())
        .map(|j| {
            let carriers = snps.carriers(j);
            let m = carriers.len() as f64;
            let ss = m * (1.0 - m / n);
            if ss <= 0.0 {
                return 1.0;
            }
            let mut u = DVector::<f64>::zeros(l);
            for &i in carriers {
                let y = labels.y[i as usize];
                for c in 0..l {
                    u[c] += (y == c + 1) as u8 as f64 - freq[c + 1];
                }
            }
            let info = &v * ss;
            let Some(chol) = info.cholesky() else { return 1.0 };
            let stat = u.dot(&chol.solve(&u));
            gamma_ur(0.5 * l as f64, 0.5 * stat.max(0.0))
        })
        .collect()
}

/// Attaches score-test p-values to a summary.
pub fn attach_pvalues(result: &mut GwasResult, snps: &SnpMatrix, pvalues: &[f64]) {
    let index: HashMap<&str, usize> = snps.variant_ids().iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    for v in &mut result.variants {
        v.p_value = index.get(v.variant_id.as_str()).map(|j| pvalues[*j]);
    }
}

fn write_text(path: &Path, text: String) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `variant_id,position,pip,effect_class2..K,significant`.
pub fn write_results_csv(path: impl AsRef<Path>, result: &GwasResult) -> Result<()> {
    let mut out = String::from("variant_id,position,pip");
    for c in &result.classes[1..] {
        let _ = write!(out, ",effect_class{c}");
    }
    out.push_str(",significant\n");
    for v in &result.variants {
        let _ = write!(out, "{},{},{:.6}", v.variant_id, v.position, v.pip);
        for e in &v.effects {
            let _ = write!(out, ",{e:.6}");
        }
        let _ = writeln!(out, ",{}", v.significant);
    }
    write_text(path.as_ref(), out)
}

/// `variant_id,position,score,threshold_line`.
pub fn write_manhattan_csv(path: impl AsRef<Path>, result: &GwasResult) -> Result<()> {
    let line = result.threshold_line();
    let mut out = String::from("variant_id,position,score,threshold_line\n");
    for v in &result.variants {
        let _ = writeln!(out, "{},{},{:.6},{:.6}", v.variant_id, v.position, v.score, line);
    }
    write_text(path.as_ref(), out)
}

/// `variant_id,position,neg_log10_p,bonferroni_line` at family-wise 0.05.
pub fn write_pvalue_manhattan_csv(path: impl AsRef<Path>, result: &GwasResult) -> Result<()> {
    let line = -(0.05 / result.variants.len().max(1) as f64).log10();
    let mut out = String::from("variant_id,position,neg_log10_p,bonferroni_line\n");
    for v in &result.variants {
        let p = v.p_value.unwrap_or(1.0).max(1e-300);
        let _ = writeln!(out, "{},{},{:.6},{:.6}", v.variant_id, v.position, -p.log10(), line);
    }
    write_text(path.as_ref(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quick(iterations: usize) -> GwasConfig {
        GwasConfig { iterations, burnin: iterations / 5, thin: 2, ..GwasConfig::default() }
    }

    #[test]
    fn softmax_examples() {
        let p = softmax_probs(&[0.0, 0.0, 0.0]);
        assert!(p.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        let p = softmax_probs(&[2f64.ln(), 0.0]);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        let big = softmax_probs(&[1000.0, 999.0, -5.0]);
        assert!((big.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(big.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn null_predictor_gives_uniform_classes() {
        let sim = simulate_gwas(&GwasSimSpec { n: 30, p: 10, n_causal: 0, ..GwasSimSpec::default() }, 1).unwrap();
        let probs = predict_probabilities(&sim.labels.snps, &[0.0, 0.0], &[(3, vec![0.0, 0.0])], &[0.0; 30]).unwrap();
        for row in probs {
            assert!(row.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
        }
    }

    fn fake_trace(p: usize, included: &[(usize, usize)], draws: usize) -> GwasTrace {
        // `included` lists (variant, number of draws including it).
        GwasTrace {
            classes: vec![1, 2],
            n_strains: 4,
            n_variants: p,
            seed: 0,
            chain: 0,
            draws: (0..draws)
                .map(|d| {
                    let inc: Vec<u32> = included.iter().filter(|(_, c)| d < *c).map(|(j, _)| *j as u32).collect();
                    GwasDraw {
                        iter: d + 1,
                        effects: inc.iter().map(|_| vec![2.0]).collect(),
                        included: inc,
                        intercepts: vec![0.0],
                        omega: 0.1,
                        sigma_u2: 1.0,
                    }
                })
                .collect(),
            add_acceptance: 0.0,
            remove_acceptance: 0.0,
            runtime_secs: 0.0,
        }
    }

    #[test]
    fn summary_counting_and_clipping() {
        let rows = vec![vec![1, 0, 1], vec![0, 1, 1], vec![1, 1, 0], vec![0, 0, 1]];
        let snps = SnpMatrix::from_dense(
            (0..4).map(|i| format!("s{i}")).collect(),
            vec!["a".into(), "b".into(), "c".into()],
            vec![30, 10, 20],
            &rows,
        )
        .unwrap();
        let trace = fake_trace(3, &[(0, 200), (1, 190), (2, 10)], 200);
        let r = summarize_gwas(&[trace], &GwasConfig::default(), &snps).unwrap();
        let ids: Vec<&str> = r.variants.iter().map(|v| v.variant_id.as_str()).collect();
        assert_eq!(ids, ["b", "c", "a"]);
        let a = &r.variants[2];
        assert_eq!(a.pip, 1.0);
        assert!((a.score - 6.0).abs() < 1e-12);
        assert_eq!(a.effects, vec![2.0]);
        let b = &r.variants[0];
        assert!((b.pip - 0.95).abs() < 1e-15 && b.significant);
        assert!(!r.variants[1].significant);
        assert!((r.threshold_line() - 20f64.log10()).abs() < 1e-12);
        assert!(summarize_gwas(&[], &GwasConfig::default(), &snps).is_err());
    }

    #[test]
    fn csv_outputs() {
        let rows = vec![vec![1], vec![0]];
        let snps = SnpMatrix::from_dense(vec!["x".into(), "y".into()], vec!["v".into()], vec![7], &rows).unwrap();
        let r = summarize_gwas(&[fake_trace(1, &[(0, 3)], 4)], &GwasConfig::default(), &snps).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_results_csv(dir.path().join("r.csv"), &r).unwrap();
        write_manhattan_csv(dir.path().join("m.csv"), &r).unwrap();
        let res = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
        assert_eq!(res, "variant_id,position,pip,effect_class2,significant\nv,7,0.750000,2.000000,false\n");
        let man = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
        assert_eq!(man, "variant_id,position,score,threshold_line\nv,7,0.602060,1.301030\n");
    }

    #[test]
    fn label_alignment() {
        let rows = vec![vec![1], vec![0], vec![1]];
        let snps =
            SnpMatrix::from_dense(vec!["a".into(), "b".into(), "c".into()], vec!["v".into()], vec![1], &rows).unwrap();
        let assign = |s: &str, c: usize| ClusterAssignment {
            strain_id: s.into(),
            drug: "RIF".into(),
            map_cluster: c,
            probabilities: vec![],
            susceptible: c == 1,
        };
        let l = GwasLabels::from_assignments(&[assign("c", 3), assign("a", 1), assign("c", 3), assign("c", 1)], &snps)
            .unwrap();
        assert_eq!(l.snps.strain_ids(), &["a", "c"]);
        assert_eq!(l.classes, vec![1, 3]);
        assert_eq!(l.y, vec![0, 1]);
        assert!(GwasLabels::from_assignments(&[assign("a", 1), assign("b", 1)], &snps).is_err());
        assert!(GwasLabels::from_assignments(&[assign("zz", 1), assign("a", 2)], &snps).is_err());
        assert!(GwasLabels::new(snps, &[1, 2]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(GwasConfig::default().validate().is_ok());
        for bad in [
            GwasConfig { tau2_beta: 0.0, ..GwasConfig::default() },
            GwasConfig { threshold: 1.0, ..GwasConfig::default() },
            GwasConfig { omega_b: Some(-1.0), ..GwasConfig::default() },
            GwasConfig { burnin: 5000, ..GwasConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn causal_variants_found_and_run_is_deterministic() {
        let sim = simulate_gwas(&GwasSimSpec { n: 300, p: 60, n_causal: 2, ..GwasSimSpec::default() }, 3).unwrap();
        let grm = compute_grm(&sim.labels.snps).unwrap();
        let cfg = quick(600);
        let t = run_gwas_chain(&sim.labels, Some(&grm), &cfg, 5, 0).unwrap();
        let again = run_gwas_chain(&sim.labels, Some(&grm), &cfg, 5, 0).unwrap();
        assert_eq!(t.draws, again.draws);
        let r = summarize_gwas(&[t], &cfg, &sim.labels.snps).unwrap();
        for &c in &sim.causal {
            let id = &sim.labels.snps.variant_ids()[c];
            let v = r.variants.iter().find(|v| &v.variant_id == id).unwrap();
            assert!(v.pip >= 0.95, "{id}: {}", v.pip);
            assert!(v.effects.iter().all(|e| *e > 1.0), "{:?}", v.effects);
        }
        assert!(r.significant().count() <= 3);
    }

    #[test]
    fn uninformative_data_reproduces_inclusion_prior() {
        // Variants without carriers leave the likelihood unchanged.
        let n = 40;
        let p = 20;
        let mut carriers = vec![Vec::new(); p];
        carriers[0] = (0..20).collect();
        let snps = SnpMatrix::new(
            (0..n).map(|i| format!("s{i}")).collect(),
            (0..p).map(|j| format!("v{j}")).collect(),
            (0..p as u64).collect(),
            carriers,
        )
        .unwrap();
        let labels: Vec<usize> = (0..n).map(|i| 1 + i % 2).collect();
        let labels = GwasLabels::new(snps, &labels).unwrap();
        let cfg = GwasConfig {
            omega_a: 1.0,
            omega_b: Some(3.0),
            random_effect: false,
            iterations: 6000,
            burnin: 500,
            thin: 1,
            ..GwasConfig::default()
        };
        let t = run_gwas_chain(&labels, None, &cfg, 1, 0).unwrap();
        let r = summarize_gwas(&[t], &cfg, &labels.snps).unwrap();
        let mean_pip = r.variants[1..].iter().map(|v| v.pip).sum::<f64>() / (p - 1) as f64;
        assert!((mean_pip - 0.25).abs() < 0.03, "{mean_pip}");
    }

    #[test]
    fn strain_permutation_preserves_summaries() {
        let sim = simulate_gwas(&GwasSimSpec { n: 300, p: 40, n_causal: 2, ..GwasSimSpec::default() }, 8).unwrap();
        let cfg = GwasConfig { random_effect: false, ..quick(500) };
        let (perm, _) = permute_strains(&sim.labels, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let a =
            summarize_gwas(&[run_gwas_chain(&sim.labels, None, &cfg, 2, 0).unwrap()], &cfg, &sim.labels.snps).unwrap();
        let b = summarize_gwas(&[run_gwas_chain(&perm, None, &cfg, 2, 0).unwrap()], &cfg, &perm.snps).unwrap();
        for (x, y) in a.variants.iter().zip(&b.variants) {
            assert_eq!(x.variant_id, y.variant_id);
            assert!((x.pip - y.pip).abs() < 0.15, "{}: {} vs {}", x.variant_id, x.pip, y.pip);
        }
    }

    #[test]
    fn class_swap_permutes_effects() {
        let spec = GwasSimSpec {
            n: 400,
            p: 30,
            n_causal: 1,
            class_specific: true,
            random_effect_var: 0.0,
            ..GwasSimSpec::default()
        };
        let sim = simulate_gwas(&spec, 12).unwrap();
        let swapped: Vec<usize> = sim.labels.y.iter().map(|c| [1, 3, 2][*c]).collect();
        let other = GwasLabels::new(sim.labels.snps.clone(), &swapped).unwrap();
        let cfg = GwasConfig { random_effect: false, ..quick(800) };
        let a =
            summarize_gwas(&[run_gwas_chain(&sim.labels, None, &cfg, 3, 0).unwrap()], &cfg, &sim.labels.snps).unwrap();
        let b = summarize_gwas(&[run_gwas_chain(&other, None, &cfg, 3, 0).unwrap()], &cfg, &other.snps).unwrap();
        let id = &sim.labels.snps.variant_ids()[sim.causal[0]];
        let va = a.variants.iter().find(|v| &v.variant_id == id).unwrap();
        let vb = b.variants.iter().find(|v| &v.variant_id == id).unwrap();
        assert!(va.pip > 0.95 && vb.pip > 0.95);
        assert!((va.effects[0] - vb.effects[1]).abs() < 0.5, "{:?} {:?}", va.effects, vb.effects);
        assert!((va.effects[1] - vb.effects[0]).abs() < 0.5, "{:?} {:?}", va.effects, vb.effects);
    }

    #[test]
    fn score_test_separates_signal_from_noise() {
        let sim = simulate_gwas(&GwasSimSpec { n: 400, p: 50, n_causal: 1, ..GwasSimSpec::default() }, 21).unwrap();
        let p = score_test_pvalues(&sim.labels);
        assert!(p[sim.causal[0]] < 1e-10);
        let null_small = p.iter().enumerate().filter(|(j, v)| *j != sim.causal[0] && **v < 0.05 / 50.0).count();
        assert!(null_small <= 1);
        assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn errors() {
        let sim = simulate_gwas(&GwasSimSpec { n: 20, p: 5, n_causal: 0, ..GwasSimSpec::default() }, 2).unwrap();
        let wrong = DMatrix::<f64>::identity(19, 19);
        assert!(run_gwas_chain(&sim.labels, Some(&wrong), &quick(50), 0, 0).is_err());
        assert!(run_gwas_chain(&sim.labels, None, &quick(50), 0, 0).is_err());
    }
}
