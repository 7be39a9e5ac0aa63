use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::Draw;
use crate::error::{Error, Result};

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

fn split(field: &str, path: &Path, line: u64) -> Result<Vec<f64>> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(';')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::parse(path, line, format!("bad number {s:?}"))))
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Writes `iter,K,Kplus,weights,means,sds,loglik`, one row per draw, with the
/// per-component lists joined by `;`.
pub fn write_trace_csv(path: impl AsRef<Path>, draws: &[Draw]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "iter,K,Kplus,weights,means,sds,loglik").map_err(io)?;
    for d in draws {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            d.iter,
            d.k,
            d.k_plus,
            join(&d.weights),
            join(&d.means),
            join(&d.sds),
            d.log_likelihood
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a trace written by [`write_trace_csv`]. Allocations are left empty.
pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<Vec<Draw>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, 1, e.to_string()))?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec?;
        if rec.len() < 6 {
            return Err(Error::parse(path, line, "expected at least 6 columns"));
        }
        let int = |j: usize| {
            rec[j].trim().parse::<usize>().map_err(|_| Error::parse(path, line, format!("bad integer {:?}", &rec[j])))
        };
        let draw = Draw {
            iter: int(0)?,
            k: int(1)?,
            k_plus: int(2)?,
            weights: split(&rec[3], path, line)?,
            means: split(&rec[4], path, line)?,
            sds: split(&rec[5], path, line)?,
            allocations: Vec::new(),
            log_likelihood: match rec.get(6) {
                Some(s) => {
                    s.trim().parse().map_err(|_| Error::parse(path, line, format!("bad log-likelihood {s:?}")))?
                }
                None => f64::NAN,
            },
        };
        if draw.weights.len() != draw.k || draw.means.len() != draw.k || draw.sds.len() != draw.k {
            return Err(Error::parse(path, line, "component lists do not match K"));
        }
        out.push(draw);
    }
    Ok(out)
}

/// Writes `iter,allocations` with 1-based cluster labels joined by `;`.
pub fn write_allocations_csv(path: impl AsRef<Path>, draws: &[Draw]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "iter,allocations").map_err(io)?;
    for d in draws {
        let z: Vec<String> = d.allocations.iter().map(|z| (z + 1).to_string()).collect();
        writeln!(w, "{},{}", d.iter, z.join(";")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Attaches allocations from [`write_allocations_csv`] output to `draws`,
/// matched by iteration.
pub fn read_allocations_csv(path: impl AsRef<Path>, draws: &mut [Draw]) -> Result<()> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, 1, e.to_string()))?;
    let mut by_iter = std::collections::HashMap::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::parse(path, line, "expected 2 columns"));
        }
        let iter: usize = rec[0].trim().parse().map_err(|_| Error::parse(path, line, "bad iteration"))?;
        let z = rec[1]
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| match s.trim().parse::<u16>() {
                Ok(v) if v >= 1 => Ok(v - 1),
                _ => Err(Error::parse(path, line, format!("bad cluster label {s:?}"))),
            })
            .collect::<Result<Vec<u16>>>()?;
        by_iter.insert(iter, z);
    }
    for d in draws.iter_mut() {
        let z = by_iter
            .remove(&d.iter)
            .ok_or_else(|| Error::Validation(format!("no allocations for iteration {}", d.iter)))?;
        if z.iter().any(|v| *v as usize >= d.k) {
            return Err(Error::Validation(format!("allocation beyond K at iteration {}", d.iter)));
        }
        d.allocations = z;
    }
    Ok(())
}
