//! Label-switching removal, point estimates of the cluster count and
//! allocations, and convergence diagnostics.

mod diagnostics;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cgmm::{Draw, TraceSet};
use crate::data::DrugSample;
use crate::error::{Error, Result};
use crate::stats::quantile_sorted;

pub use diagnostics::{
    diagnostics, effective_sample_size, geweke_z, split_rhat, ChainSummary, DiagnosticsReport, ParameterDiagnostics,
};

/// Reorders one draw: occupied components by ascending mean (ties keep the
/// original index order), then empty components in their original order.
pub fn relabel_draw(draw: &Draw) -> Draw {
    let k = draw.k;
    let mut occupied = vec![false; k];
    for &z in &draw.allocations {
        occupied[z as usize] = true;
    }
    let mut order: Vec<usize> = (0..k).collect();
    // Stable sort keeps index order among ties.
    order.sort_by(|&a, &b| match (occupied[a], occupied[b]) {
        (true, true) => draw.means[a].total_cmp(&draw.means[b]),
        (true, false) => std::cmp::Ordering::Less,
        (false, true) => std::cmp::Ordering::Greater,
        (false, false) => std::cmp::Ordering::Equal,
    });
    let mut new_label = vec![0u16; k];
    for (new, &old) in order.iter().enumerate() {
        new_label[old] = new as u16;
    }
    Draw {
        iter: draw.iter,
        k,
        k_plus: draw.k_plus,
        weights: order.iter().map(|j| draw.weights[*j]).collect(),
        means: order.iter().map(|j| draw.means[*j]).collect(),
        sds: order.iter().map(|j| draw.sds[*j]).collect(),
        allocations: draw.allocations.iter().map(|z| new_label[*z as usize]).collect(),
        log_likelihood: draw.log_likelihood,
    }
}

/// Applies [`relabel_draw`] to every draw.
pub fn relabel_trace(trace: &TraceSet) -> TraceSet {
    TraceSet { draws: trace.draws.iter().map(relabel_draw).collect(), ..trace.clone() }
}

/// Concatenates the draws of several chains (in chain order) into one trace.
pub fn pool_traces(traces: &[TraceSet]) -> Result<TraceSet> {
    let first = traces.first().ok_or_else(|| Error::Validation("no traces to pool".into()))?;
    let mut pooled = first.clone();
    for t in &traces[1..] {
        if t.method != first.method || t.drug != first.drug {
            return Err(Error::Validation("cannot pool traces of different methods or drugs".into()));
        }
        pooled.draws.extend(t.draws.iter().cloned());
        pooled.runtime_secs += t.runtime_secs;
    }
    pooled.k_change_rate = traces.iter().map(|t| t.k_change_rate).sum::<f64>() / traces.len() as f64;
    Ok(pooled)
}

/// Empirical distribution of the occupied-cluster count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KPosterior {
    /// `K+ -> probability`, ascending.
    pub pmf: BTreeMap<usize, f64>,
    /// Most probable K+, ties to the smaller value.
    pub mode: usize,
    pub mean: f64,
}

pub fn posterior_k(trace: &TraceSet) -> Result<KPosterior> {
    if trace.draws.is_empty() {
        return Err(Error::Validation("trace has no draws".into()));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for d in &trace.draws {
        *counts.entry(d.k_plus).or_default() += 1;
    }
    let n = trace.draws.len() as f64;
    let mut mode = (0, 0);
    for (&k, &c) in &counts {
        if c > mode.1 {
            mode = (k, c);
        }
    }
    Ok(KPosterior {
        pmf: counts.iter().map(|(k, c)| (*k, *c as f64 / n)).collect(),
        mode: mode.0,
        mean: trace.draws.iter().map(|d| d.k_plus as f64).sum::<f64>() / n,
    })
}

/// Posterior summary of one sorted cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    /// 1-based; cluster 1 has the lowest mean.
    pub cluster: usize,
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
    /// Central 95% interval of the mean.
    pub mean_interval: (f64, f64),
}

/// Per-cluster posterior means over the relabeled draws at the modal K+.
/// Weights are renormalized over the occupied components of each draw.
pub fn cluster_summaries(trace: &TraceSet) -> Result<Vec<ClusterSummary>> {
    let k = posterior_k(trace)?.mode;
    let draws: Vec<Draw> = trace.draws.iter().filter(|d| d.k_plus == k).map(relabel_draw).collect();
    let m = draws.len() as f64;
    Ok((0..k)
        .map(|j| {
            let mut means: Vec<f64> = draws.iter().map(|d| d.means[j]).collect();
            let weight = draws.iter().map(|d| d.weights[j] / d.weights[..k].iter().sum::<f64>()).sum::<f64>() / m;
            let sd = draws.iter().map(|d| d.sds[j]).sum::<f64>() / m;
            let mean = means.iter().sum::<f64>() / m;
            means.sort_by(f64::total_cmp);
            ClusterSummary {
                cluster: j + 1,
                weight,
                mean,
                sd,
                mean_interval: (quantile_sorted(&means, 0.025), quantile_sorted(&means, 0.975)),
            }
        })
        .collect())
}

/// Point allocation of one observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub strain_id: String,
    pub drug: String,
    /// 1-based; cluster 1 has the lowest mean.
    pub map_cluster: usize,
    /// Probability of each sorted cluster among the modal-K+ draws.
    pub probabilities: Vec<f64>,
    pub susceptible: bool,
}

/// MAP cluster of every observation, estimated from the draws whose
/// occupied-cluster count equals the posterior mode. Draws are relabeled
/// first, so cluster 1 is always the lowest-mean occupied component.
pub fn map_allocations(trace: &TraceSet, sample: &DrugSample) -> Result<Vec<ClusterAssignment>> {
    if trace.drug != sample.drug_code() {
        return Err(Error::Validation(format!(
            "trace for drug {} does not match data for {}",
            trace.drug,
            sample.drug_code()
        )));
    }
    let post = posterior_k(trace)?;
    let k = post.mode;
    let n = sample.len();
    let mut counts = vec![vec![0usize; k]; n];
    let mut used = 0usize;
    for d in trace.draws.iter().filter(|d| d.k_plus == k) {
        if d.allocations.len() != n {
            return Err(Error::Validation(format!(
                "draw at iteration {} has {} allocations for {} observations",
                d.iter,
                d.allocations.len(),
                n
            )));
        }
        let d = relabel_draw(d);
        for (i, z) in d.allocations.iter().enumerate() {
            counts[i][*z as usize] += 1;
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::Validation("no draws at the modal cluster count".into()));
    }
    Ok(sample
        .observations()
        .iter()
        .zip(counts)
        .map(|(obs, c)| {
            let mut best = 0;
            for j in 1..k {
                if c[j] > c[best] {
                    best = j;
                }
            }
            ClusterAssignment {
                strain_id: obs.strain_id.clone(),
                drug: obs.drug_code.clone(),
                map_cluster: best + 1,
                probabilities: c.iter().map(|v| *v as f64 / used as f64).collect(),
                susceptible: best == 0,
            }
        })
        .collect())
}

/// Writes `strain_id,drug,map_cluster,susceptible,p_1..p_K` where K is the
/// largest cluster count among the rows.
pub fn write_assignments_csv(path: impl AsRef<Path>, rows: &[ClusterAssignment]) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let k = rows.iter().map(|r| r.probabilities.len()).max().unwrap_or(0);
    let mut header = String::from("strain_id,drug,map_cluster,susceptible");
    for j in 1..=k {
        header.push_str(&format!(",p_{j}"));
    }
    writeln!(w, "{header}").map_err(io)?;
    for r in rows {
        let mut line = format!("{},{},{},{}", r.strain_id, r.drug, r.map_cluster, r.susceptible);
        for j in 0..k {
            line.push_str(&format!(",{:.6}", r.probabilities.get(j).copied().unwrap_or(0.0)));
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads an assignment CSV back; probabilities beyond the row's own count
/// columns are kept as written.
pub fn read_assignments_csv(path: impl AsRef<Path>) -> Result<Vec<ClusterAssignment>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, 1, e.to_string()))?;
    let headers = reader.headers()?.clone();
    let expect = ["strain_id", "drug", "map_cluster", "susceptible"];
    if headers.len() < 4 || headers.iter().take(4).ne(expect) {
        return Err(Error::parse(path, 1, "expected header strain_id,drug,map_cluster,susceptible,p_1,..."));
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec?;
        let map_cluster: usize = rec[2]
            .parse()
            .ok()
            .filter(|v| *v >= 1)
            .ok_or_else(|| Error::parse(path, line, format!("bad cluster {:?}", &rec[2])))?;
        let susceptible = match &rec[3] {
            "true" => true,
            "false" => false,
            other => return Err(Error::parse(path, line, format!("bad susceptible flag {other:?}"))),
        };
        let probabilities = rec
            .iter()
            .skip(4)
            .map(|s| s.parse::<f64>().map_err(|_| Error::parse(path, line, format!("bad probability {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        out.push(ClusterAssignment {
            strain_id: rec[0].to_string(),
            drug: rec[1].to_string(),
            map_cluster,
            probabilities,
            susceptible,
        });
    }
    Ok(out)
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Validation("labelings differ in length".into()));
    }
    let n = a.len();
    if n < 2 {
        return Ok(1.0);
    }
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let pairs = |v: u64| (v * v.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.values().map(|v| pairs(*v)).sum();
    let sa: f64 = rows.values().map(|v| pairs(*v)).sum();
    let sb: f64 = cols.values().map(|v| pairs(*v)).sum();
    let expected = sa * sb / pairs(n as u64);
    let max = 0.5 * (sa + sb);
    if (max - expected).abs() < 1e-12 {
        // Both labelings trivial (all-one or all-singletons) in the same way.
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}
