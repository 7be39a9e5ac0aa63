//! True-positive and true-negative rates of cluster labels against known
//! resistant strains and susceptible control replicates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::postprocess::ClusterAssignment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthKind {
    ResistantByVariant,
    SusceptibleControl,
}

impl TruthKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TruthKind::ResistantByVariant => "resistant_by_variant",
            TruthKind::SusceptibleControl => "susceptible_control",
        }
    }
}

impl std::str::FromStr for TruthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "resistant_by_variant" => Ok(TruthKind::ResistantByVariant),
            "susceptible_control" => Ok(TruthKind::SusceptibleControl),
            other => Err(Error::Validation(format!("unknown truth kind {other:?}"))),
        }
    }
}

/// Strains asserted resistant or susceptible, per drug.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TruthSet {
    sets: BTreeMap<(String, TruthKind), BTreeSet<String>>,
}

impl TruthSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, drug: &str, strain_id: &str, kind: TruthKind) {
        self.sets.entry((drug.to_string(), kind)).or_default().insert(strain_id.to_string());
    }

    pub fn strains(&self, drug: &str, kind: TruthKind) -> Option<&BTreeSet<String>> {
        self.sets.get(&(drug.to_string(), kind))
    }

    /// Drugs with at least one strain of `kind`.
    pub fn drugs(&self, kind: TruthKind) -> Vec<String> {
        self.sets.keys().filter(|(_, k)| *k == kind).map(|(d, _)| d.clone()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

/// Parses a `drug,strain_id,kind` truth file.
pub fn parse_truth_csv<R: Read>(reader: R, name: &str) -> Result<TruthSet> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(["drug", "strain_id", "kind"]) {
        return Err(Error::parse(name, 1, "expected header drug,strain_id,kind"));
    }
    let mut truth = TruthSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| Error::parse(name, line, e.to_string()))?;
        if rec.len() != 3 || rec[0].is_empty() || rec[1].is_empty() {
            return Err(Error::parse(name, line, "expected drug,strain_id,kind"));
        }
        let kind: TruthKind = rec[2].parse().map_err(|e: Error| Error::parse(name, line, e.to_string()))?;
        truth.insert(&rec[0], &rec[1], kind);
    }
    Ok(truth)
}

pub fn load_truth_csv(path: impl AsRef<Path>) -> Result<TruthSet> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_truth_csv(file, &path.display().to_string())
}

pub fn write_truth_csv(path: impl AsRef<Path>, truth: &TruthSet) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("drug,strain_id,kind\n");
    for ((drug, kind), strains) in &truth.sets {
        for s in strains {
            writeln!(out, "{drug},{s},{}", kind.as_str()).unwrap();
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Predicted level of one observation: 1 is susceptible, 2 and above are
/// increasingly resistant clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedLabel {
    pub strain_id: String,
    pub drug: String,
    pub level: usize,
}

pub fn labels_from_assignments(rows: &[ClusterAssignment]) -> Vec<PredictedLabel> {
    rows.iter()
        .map(|r| PredictedLabel { strain_id: r.strain_id.clone(), drug: r.drug.clone(), level: r.map_cluster })
        .collect()
}

/// Binary labels (e.g. from a cutoff) as levels 1 and 2.
pub fn labels_from_binary(strain_ids: &[String], drug: &str, resistant: &[bool]) -> Result<Vec<PredictedLabel>> {
    if strain_ids.len() != resistant.len() {
        return Err(Error::Validation("label and strain counts differ".into()));
    }
    Ok(strain_ids
        .iter()
        .zip(resistant)
        .map(|(s, r)| PredictedLabel { strain_id: s.clone(), drug: drug.to_string(), level: if *r { 2 } else { 1 } })
        .collect())
}

/// Writes `strain_id,drug,level`.
pub fn write_labels_csv(path: impl AsRef<Path>, labels: &[PredictedLabel]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("strain_id,drug,level\n");
    for l in labels {
        writeln!(out, "{},{},{}", l.strain_id, l.drug, l.level).unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads labels from either a `strain_id,drug,level` file or an assignment
/// file (`strain_id,drug,map_cluster,...`).
pub fn load_labels_csv(path: impl AsRef<Path>) -> Result<Vec<PredictedLabel>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, 1, e.to_string()))?;
    let headers = rdr.headers()?.clone();
    let level_col = match headers.get(2) {
        Some("level") | Some("map_cluster")
            if headers.get(0) == Some("strain_id") && headers.get(1) == Some("drug") =>
        {
            2
        }
        _ => {
            return Err(Error::parse(path, 1, "expected header strain_id,drug,level or strain_id,drug,map_cluster,..."))
        }
    };
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec?;
        let level = rec
            .get(level_col)
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|v| *v >= 1)
            .ok_or_else(|| Error::parse(path, line, "level must be a positive integer"))?;
        if rec[0].is_empty() || rec[1].is_empty() {
            return Err(Error::parse(path, line, "missing strain or drug"));
        }
        out.push(PredictedLabel { strain_id: rec[0].to_string(), drug: rec[1].to_string(), level });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub correct: usize,
    pub total: usize,
    pub percent: f64,
    /// Count of truth rows per predicted level.
    pub by_level: BTreeMap<usize, usize>,
}

/// Per-drug percentages, ordered by drug code.
pub type RateTable = BTreeMap<String, RateRow>;

fn rate(labels: &[PredictedLabel], truth: &TruthSet, kind: TruthKind) -> Result<RateTable> {
    let mut table = RateTable::new();
    let drugs: BTreeSet<&str> = labels.iter().map(|l| l.drug.as_str()).collect();
    for drug in drugs {
        let Some(strains) = truth.strains(drug, kind).filter(|s| !s.is_empty()) else {
            log::warn!("no {} truth strains for drug {drug}; row omitted", kind.as_str());
            continue;
        };
        let rows: Vec<&PredictedLabel> =
            labels.iter().filter(|l| l.drug == drug && strains.contains(&l.strain_id)).collect();
        let seen: BTreeSet<&str> = rows.iter().map(|l| l.strain_id.as_str()).collect();
        if let Some(missing) = strains.iter().find(|s| !seen.contains(s.as_str())) {
            return Err(Error::Validation(format!("truth strain {missing} has no label for drug {drug}")));
        }
        let mut by_level = BTreeMap::new();
        for l in &rows {
            *by_level.entry(l.level).or_default() += 1;
        }
        let correct = rows
            .iter()
            .filter(|l| match kind {
                TruthKind::ResistantByVariant => l.level >= 2,
                TruthKind::SusceptibleControl => l.level == 1,
            })
            .count();
        table.insert(
            drug.to_string(),
            RateRow { correct, total: rows.len(), percent: 100.0 * correct as f64 / rows.len() as f64, by_level },
        );
    }
    Ok(table)
}

/// Percentage of labeled rows of known-resistant strains placed above the
/// first cluster. Every label row of a truth strain counts once.
pub fn true_positive_rate(labels: &[PredictedLabel], truth: &TruthSet) -> Result<RateTable> {
    rate(labels, truth, TruthKind::ResistantByVariant)
}

/// Percentage of susceptible control rows (replicates) placed in the first
/// cluster.
pub fn true_negative_rate(labels: &[PredictedLabel], truth: &TruthSet) -> Result<RateTable> {
    rate(labels, truth, TruthKind::SusceptibleControl)
}

/// One row per drug, one column per method, percentages to three decimals.
/// Drugs missing for a method print `NA`.
pub fn format_rate_table(methods: &[(String, RateTable)]) -> String {
    let mut out = String::from("drug");
    for (name, _) in methods {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    let drugs: BTreeSet<&String> = methods.iter().flat_map(|(_, t)| t.keys()).collect();
    for drug in drugs {
        out.push_str(drug);
        for (_, t) in methods {
            match t.get(drug) {
                Some(r) => write!(out, ",{:.3}", r.percent).unwrap(),
                None => out.push_str(",NA"),
            }
        }
        out.push('\n');
    }
    out
}

/// `method,drug,level,count,percent` breakdown of truth rows by predicted
/// level.
pub fn format_level_table(methods: &[(String, RateTable)]) -> String {
    let mut out = String::from("method,drug,level,count,percent\n");
    for (name, t) in methods {
        for (drug, r) in t {
            for (level, count) in &r.by_level {
                writeln!(out, "{name},{drug},{level},{count},{:.3}", 100.0 * *count as f64 / r.total as f64).unwrap();
            }
        }
    }
    out
}
