use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Trim};

use super::{DrugGrid, MicDataset, MicObservation};
use crate::error::{Error, Result};

/// How the MIC column of a dataset file is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MicColumn {
    MgPerL,
    Log2,
    DilutionIndex,
}

impl MicColumn {
    fn header(self) -> &'static str {
        match self {
            MicColumn::MgPerL => "mic_mgL",
            MicColumn::Log2 => "log2_mic",
            MicColumn::DilutionIndex => "dilution_index",
        }
    }
}

fn reader<R: Read>(rdr: R) -> csv::Reader<R> {
    ReaderBuilder::new().has_headers(false).flexible(true).trim(Trim::All).comment(Some(b'#')).from_reader(rdr)
}

fn line_of(record: &StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

/// Reads a grids CSV: one row per drug, `drug,d1,d2,...` in log2 units.
///
/// An optional header row starting with `drug` may name `censor_label` as its
/// second column, in which case every row carries that (possibly empty) field
/// before the dilutions.
pub fn load_dilution_grid(path: impl AsRef<Path>) -> Result<BTreeMap<String, DrugGrid>> {
    let path = path.as_ref();
    parse_dilution_grid(open(path)?, path)
}

pub fn parse_dilution_grid<R: Read>(rdr: R, name: impl AsRef<Path>) -> Result<BTreeMap<String, DrugGrid>> {
    let name = name.as_ref();
    let mut grids = BTreeMap::new();
    let mut has_censor_column = false;
    for (i, record) in reader(rdr).records().enumerate() {
        let record = record?;
        let line = line_of(&record);
        let first = record.get(0).unwrap_or("");
        if i == 0 && first.eq_ignore_ascii_case("drug") {
            has_censor_column = record.get(1).is_some_and(|f| f.eq_ignore_ascii_case("censor_label"));
            continue;
        }
        if first.is_empty() {
            return Err(Error::parse(name, line, "missing drug code"));
        }
        let mut fields = record.iter().skip(1);
        let censor = if has_censor_column {
            match fields.next() {
                Some("") | None => None,
                Some(v) => Some(parse_f64(v, name, line, "censor_label")?),
            }
        } else {
            None
        };
        let dilutions = fields
            .filter(|f| !f.is_empty())
            .map(|f| parse_f64(f, name, line, "dilution"))
            .collect::<Result<Vec<_>>>()?;
        let grid = DrugGrid::new(first, dilutions, censor).map_err(|e| match e {
            Error::Validation(msg) => Error::Validation(format!("{}:{line}: {msg}", name.display())),
            other => other,
        })?;
        if grids.insert(first.to_string(), grid).is_some() {
            return Err(Error::parse(name, line, format!("duplicate grid for {first}")));
        }
    }
    Ok(grids)
}

pub fn write_dilution_grid(path: impl AsRef<Path>, grids: &BTreeMap<String, DrugGrid>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("drug,censor_label,dilutions...\n");
    for grid in grids.values() {
        out.push_str(grid.drug_code());
        out.push(',');
        out.push_str(&fmt_num(grid.censor_label_log2()));
        for d in grid.tested_log2() {
            out.push(',');
            out.push_str(&fmt_num(*d));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a MIC CSV whose header names `strain_id`, `drug`, exactly one of
/// `mic_mgL` / `log2_mic` / `dilution_index`, and optionally `replicate_id`.
pub fn load_mic_dataset(path: impl AsRef<Path>, grids: &BTreeMap<String, DrugGrid>) -> Result<MicDataset> {
    let path = path.as_ref();
    parse_mic_dataset(open(path)?, path, grids)
}

pub fn parse_mic_dataset<R: Read>(
    rdr: R,
    name: impl AsRef<Path>,
    grids: &BTreeMap<String, DrugGrid>,
) -> Result<MicDataset> {
    let name = name.as_ref();
    let mut records = reader(rdr).into_records();
    let header = records.next().ok_or_else(|| Error::parse(name, 1, "empty file"))??;
    let col = |wanted: &str| header.iter().position(|h| h.eq_ignore_ascii_case(wanted));
    let strain_col = col("strain_id").ok_or_else(|| Error::parse(name, 1, "missing strain_id column"))?;
    let drug_col = col("drug").ok_or_else(|| Error::parse(name, 1, "missing drug column"))?;
    let modes: Vec<(MicColumn, usize)> = [MicColumn::MgPerL, MicColumn::Log2, MicColumn::DilutionIndex]
        .into_iter()
        .filter_map(|m| col(m.header()).map(|c| (m, c)))
        .collect();
    let (mode, mic_col) = match modes.as_slice() {
        [one] => *one,
        [] => return Err(Error::parse(name, 1, "header needs one of mic_mgL, log2_mic, dilution_index")),
        _ => return Err(Error::parse(name, 1, "header names more than one MIC column")),
    };
    let rep_col = col("replicate_id");

    let mut observations = Vec::new();
    for record in records {
        let record = record?;
        let line = line_of(&record);
        let field = |c: usize, what: &str| {
            record.get(c).filter(|f| !f.is_empty()).ok_or_else(|| Error::parse(name, line, format!("missing {what}")))
        };
        let strain_id = field(strain_col, "strain_id")?.to_string();
        let drug_code = field(drug_col, "drug")?.to_string();
        let grid =
            grids.get(&drug_code).ok_or_else(|| Error::parse(name, line, format!("unknown drug code {drug_code}")))?;
        let raw = field(mic_col, mode.header())?;
        let dilution_index = match mode {
            MicColumn::DilutionIndex => {
                let idx: usize =
                    raw.parse().map_err(|_| Error::parse(name, line, format!("invalid dilution index {raw:?}")))?;
                if idx == 0 || idx > grid.n_cells() {
                    return Err(Error::parse(
                        name,
                        line,
                        format!("dilution index {idx} outside 1..={}", grid.n_cells()),
                    ));
                }
                idx
            }
            MicColumn::MgPerL => {
                let v = parse_f64(raw, name, line, "mic_mgL")?;
                if !(v > 0.0) {
                    return Err(Error::parse(name, line, format!("MIC {v} mg/L is not positive")));
                }
                grid.label_to_index(v.log2()).map_err(|e| Error::parse(name, line, e.to_string()))?
            }
            MicColumn::Log2 => {
                let v = parse_f64(raw, name, line, "log2_mic")?;
                grid.label_to_index(v).map_err(|e| Error::parse(name, line, e.to_string()))?
            }
        };
        let replicate_id = match rep_col.and_then(|c| record.get(c)).filter(|f| !f.is_empty()) {
            Some(r) => Some(r.parse().map_err(|_| Error::parse(name, line, format!("invalid replicate_id {r:?}")))?),
            None => None,
        };
        observations.push(MicObservation { strain_id, drug_code, dilution_index, replicate_id });
    }
    MicDataset::new(observations, grids.clone())
}

/// Writes observations in `dilution_index` form, which round-trips exactly.
pub fn write_mic_dataset(path: impl AsRef<Path>, dataset: &MicDataset) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "strain_id,drug,dilution_index,replicate_id").map_err(io)?;
    for o in dataset.observations() {
        let rep = o.replicate_id.map(|r| r.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{}", o.strain_id, o.drug_code, o.dilution_index, rep).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn parse_f64(s: &str, name: &Path, line: u64, what: &str) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| Error::parse(name, line, format!("invalid {what} value {s:?}")))?;
    if v.is_nan() {
        return Err(Error::parse(name, line, format!("{what} is NaN")));
    }
    Ok(v)
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_row_without_header() {
        let grids = parse_dilution_grid("RIF,-5,-4,-3,-2,-1,0\n".as_bytes(), "g.csv").unwrap();
        let g = &grids["RIF"];
        assert_eq!(g.tested_log2(), &[-5.0, -4.0, -3.0, -2.0, -1.0, 0.0]);
        assert_eq!(g.censor_label_log2(), 1.0);
    }

    #[test]
    fn grid_header_with_censor_label_column() {
        let text = "drug,censor_label,dilutions\nRIF,,-5,-4\nINH,3,-2,-1,0\n";
        let grids = parse_dilution_grid(text.as_bytes(), "g.csv").unwrap();
        assert_eq!(grids["RIF"].censor_label_log2(), -3.0);
        assert_eq!(grids["INH"].censor_label_log2(), 3.0);
    }

    #[test]
    fn grid_errors_name_the_line() {
        let err = parse_dilution_grid("RIF,-5,-4\nINH,-2,x\n".as_bytes(), "g.csv").unwrap_err();
        assert!(err.to_string().contains("g.csv:2"), "{err}");
        let err = parse_dilution_grid("RIF\n".as_bytes(), "g.csv").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        let err = parse_dilution_grid("RIF,0,-1\n".as_bytes(), "g.csv").unwrap_err();
        assert!(err.to_string().contains("ascending"));
    }

    fn rif() -> BTreeMap<String, DrugGrid> {
        parse_dilution_grid("RIF,-5,-4,-3,-2,-1,0\n".as_bytes(), "g").unwrap()
    }

    #[test]
    fn mg_per_l_values_map_onto_grid() {
        let text = "strain_id,drug,mic_mgL\na,RIF,0.001\nb,RIF,0.03125\nc,RIF,5\nd,RIF,0.25\ne,RIF,2\n";
        let ds = parse_mic_dataset(text.as_bytes(), "m", &rif()).unwrap();
        let idx: Vec<usize> = ds.observations().iter().map(|o| o.dilution_index).collect();
        // 0.03125 = 2^-5 = d1; 0.25 = 2^-2 = d4; 2 = censor label.
        assert_eq!(idx, vec![1, 1, 7, 4, 7]);
    }

    #[test]
    fn mic_errors() {
        let g = rif();
        let e = parse_mic_dataset("strain_id,drug,mic_mgL\na,INH,1\n".as_bytes(), "m", &g).unwrap_err();
        assert!(e.to_string().contains("unknown drug"));
        let e = parse_mic_dataset("strain_id,drug,mic_mgL\na,RIF,0\n".as_bytes(), "m", &g).unwrap_err();
        assert!(e.to_string().contains("not positive"));
        let e = parse_mic_dataset("strain_id,drug,dilution_index\na,RIF,9\n".as_bytes(), "m", &g).unwrap_err();
        assert!(e.to_string().contains("outside"));
        let e = parse_mic_dataset("strain_id,drug\na,RIF\n".as_bytes(), "m", &g).unwrap_err();
        assert!(e.to_string().contains("header"));
    }

    #[test]
    fn log2_and_replicates() {
        let text = "strain_id,drug,log2_mic,replicate_id\nh37rv,RIF,-3,1\nh37rv,RIF,-2,2\n";
        let ds = parse_mic_dataset(text.as_bytes(), "m", &rif()).unwrap();
        assert_eq!(ds.observations()[0].dilution_index, 3);
        assert_eq!(ds.observations()[1].replicate_id, Some(2));
    }
}
