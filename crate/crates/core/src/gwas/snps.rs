use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Binary genotypes stored column-wise as the sorted indices of carrier
/// strains.
#[derive(Debug, Clone, PartialEq)]
pub struct SnpMatrix {
    strain_ids: Vec<String>,
    variant_ids: Vec<String>,
    positions: Vec<u64>,
    carriers: Vec<Vec<u32>>,
}

impl SnpMatrix {
    pub fn new(
        strain_ids: Vec<String>,
        variant_ids: Vec<String>,
        positions: Vec<u64>,
        carriers: Vec<Vec<u32>>,
    ) -> Result<Self> {
        let p = variant_ids.len();
        if positions.len() != p || carriers.len() != p {
            return Err(Error::Validation("variant ids, positions and genotype columns differ in length".into()));
        }
        let n = strain_ids.len() as u32;
        let mut carriers = carriers;
        for (j, c) in carriers.iter_mut().enumerate() {
            c.sort_unstable();
            c.dedup();
            if c.last().is_some_and(|i| *i >= n) {
                return Err(Error::Validation(format!(
                    "variant {} has a carrier beyond the strain list",
                    variant_ids[j]
                )));
            }
        }
        let mut seen = HashMap::new();
        for (i, s) in strain_ids.iter().enumerate() {
            if seen.insert(s.as_str(), i).is_some() {
                return Err(Error::Validation(format!("duplicate strain id {s}")));
            }
        }
        Ok(Self { strain_ids, variant_ids, positions, carriers })
    }

    /// Builds from a dense strain-by-variant 0/1 matrix.
    pub fn from_dense(
        strain_ids: Vec<String>,
        variant_ids: Vec<String>,
        positions: Vec<u64>,
        rows: &[Vec<u8>],
    ) -> Result<Self> {
        if rows.len() != strain_ids.len() {
            return Err(Error::Validation("genotype rows do not match strain ids".into()));
        }
        let p = variant_ids.len();
        let mut carriers = vec![Vec::new(); p];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Validation(format!(
                    "genotype row {} has {} entries, expected {p}",
                    i + 1,
                    row.len()
                )));
            }
            for (j, &g) in row.iter().enumerate() {
                match g {
                    0 => {}
                    1 => carriers[j].push(i as u32),
                    other => return Err(Error::Validation(format!("genotype {other} is not 0/1"))),
                }
            }
        }
        Self::new(strain_ids, variant_ids, positions, carriers)
    }

    pub fn n_strains(&self) -> usize {
        self.strain_ids.len()
    }

    pub fn n_variants(&self) -> usize {
        self.variant_ids.len()
    }

    pub fn strain_ids(&self) -> &[String] {
        &self.strain_ids
    }

    pub fn variant_ids(&self) -> &[String] {
        &self.variant_ids
    }

    pub fn positions(&self) -> &[u64] {
        &self.positions
    }

    /// Sorted carrier indices of variant `j`.
    pub fn carriers(&self, j: usize) -> &[u32] {
        &self.carriers[j]
    }

    pub fn get(&self, strain: usize, variant: usize) -> u8 {
        self.carriers[variant].binary_search(&(strain as u32)).is_ok() as u8
    }

    /// Minor-allele frequency of each variant.
    pub fn maf(&self) -> Vec<f64> {
        let n = self.n_strains() as f64;
        self.carriers
            .iter()
            .map(|c| {
                let f = c.len() as f64 / n;
                f.min(1.0 - f)
            })
            .collect()
    }

    fn select_variants(&self, keep: &[usize]) -> Self {
        Self {
            strain_ids: self.strain_ids.clone(),
            variant_ids: keep.iter().map(|j| self.variant_ids[*j].clone()).collect(),
            positions: keep.iter().map(|j| self.positions[*j]).collect(),
            carriers: keep.iter().map(|j| self.carriers[*j].clone()).collect(),
        }
    }

    /// Drops monomorphic variants and those below `min_maf`, orders the rest
    /// by position (then variant id) and keeps at most `max_variants` of them
    /// from the start of that order.
    pub fn filter(&self, min_maf: f64, max_variants: usize) -> Result<Self> {
        let maf = self.maf();
        let mut keep: Vec<usize> =
            (0..self.n_variants()).filter(|j| maf[*j] > 0.0 && maf[*j] + 1e-12 >= min_maf).collect();
        keep.sort_by(|a, b| {
            self.positions[*a].cmp(&self.positions[*b]).then_with(|| self.variant_ids[*a].cmp(&self.variant_ids[*b]))
        });
        if keep.len() > max_variants {
            log::warn!("keeping the first {max_variants} of {} variants by position", keep.len());
            keep.truncate(max_variants);
        }
        if keep.is_empty() {
            return Err(Error::Validation("no variants left after filtering".into()));
        }
        Ok(self.select_variants(&keep))
    }

    /// Restricts and reorders strains to `ids`.
    pub fn subset_strains(&self, ids: &[String]) -> Result<Self> {
        let index: HashMap<&str, usize> = self.strain_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut new_of_old = vec![u32::MAX; self.n_strains()];
        for (new, id) in ids.iter().enumerate() {
            let old =
                *index.get(id.as_str()).ok_or_else(|| Error::Validation(format!("strain {id} has no genotypes")))?;
            new_of_old[old] = new as u32;
        }
        let carriers = self
            .carriers
            .iter()
            .map(|c| {
                let mut v: Vec<u32> = c.iter().map(|i| new_of_old[*i as usize]).filter(|i| *i != u32::MAX).collect();
                v.sort_unstable();
                v
            })
            .collect();
        Self::new(ids.to_vec(), self.variant_ids.clone(), self.positions.clone(), carriers)
    }
}

/// Genetic relationship matrix from column-standardized genotypes,
/// `Z Zᵀ / p + 1e-6 I`. Monomorphic columns are skipped.
pub fn compute_grm(snps: &SnpMatrix) -> Result<DMatrix<f64>> {
    let n = snps.n_strains();
    let nf = n as f64;
    let usable: Vec<usize> = (0..snps.n_variants())
        .filter(|j| {
            let c = snps.carriers(*j).len();
            c > 0 && c < n
        })
        .collect();
    let p = usable.len();
    if p == 0 {
        return Err(Error::Validation("no polymorphic variants for the relationship matrix".into()));
    }
    let mut grm = DMatrix::<f64>::zeros(n, n);
    const BLOCK: usize = 256;
    for chunk in usable.chunks(BLOCK) {
        let mut z = DMatrix::<f64>::zeros(n, chunk.len());
        for (col, &j) in chunk.iter().enumerate() {
            let m = snps.carriers(j).len() as f64 / nf;
            let sd = (m * (1.0 - m)).sqrt();
            let (c0, c1) = (-m / sd, (1.0 - m) / sd);
            z.column_mut(col).fill(c0);
            for &i in snps.carriers(j) {
                z[(i as usize, col)] = c1;
            }
        }
        grm.gemm(1.0, &z, &z.transpose(), 1.0);
    }
    grm /= p as f64;
    for i in 0..n {
        grm[(i, i)] += 1e-6;
    }
    Ok(grm)
}

/// Reads genotypes in long form (`strain_id,variant_id,position,allele`,
/// absent pairs are 0) or wide form (`strain_id,<variant ids...>` header, a
/// `position,...` row, then one row per strain).
pub fn parse_snp_csv<R: Read>(reader: R, name: &str) -> Result<SnpMatrix> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("strain_id") {
        return Err(Error::parse(name, 1, "first column must be strain_id"));
    }
    let long = headers.len() == 4
        && headers.get(1) == Some("variant_id")
        && headers.get(2) == Some("position")
        && headers.get(3) == Some("allele");
    let records: Vec<csv::StringRecord> = rdr
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::parse(name, e.position().map_or(0, |p| p.line()), e.to_string()))?;
    if long {
        let mut strains: Vec<String> = Vec::new();
        let mut strain_index: HashMap<String, usize> = HashMap::new();
        let mut variants: BTreeMap<String, (u64, Vec<u32>)> = BTreeMap::new();
        let mut variant_order: Vec<String> = Vec::new();
        for (k, rec) in records.iter().enumerate() {
            let line = k as u64 + 2;
            if rec.len() != 4 {
                return Err(Error::parse(name, line, "expected 4 columns"));
            }
            let pos: u64 =
                rec[2].parse().map_err(|_| Error::parse(name, line, format!("bad position {:?}", &rec[2])))?;
            let allele: u8 = match &rec[3] {
                "0" => 0,
                "1" => 1,
                other => return Err(Error::parse(name, line, format!("allele {other:?} is not 0/1"))),
            };
            let si = *strain_index.entry(rec[0].to_string()).or_insert_with(|| {
                strains.push(rec[0].to_string());
                strains.len() - 1
            });
            let entry = variants.entry(rec[1].to_string()).or_insert_with(|| {
                variant_order.push(rec[1].to_string());
                (pos, Vec::new())
            });
            if entry.0 != pos {
                return Err(Error::parse(name, line, format!("variant {} listed at two positions", &rec[1])));
            }
            if allele == 1 {
                entry.1.push(si as u32);
            }
        }
        let mut ids = Vec::new();
        let mut positions = Vec::new();
        let mut carriers = Vec::new();
        for v in variant_order {
            let (pos, c) = variants.remove(&v).unwrap();
            ids.push(v);
            positions.push(pos);
            carriers.push(c);
        }
        return SnpMatrix::new(strains, ids, positions, carriers);
    }
    let variant_ids: Vec<String> = headers.iter().skip(1).map(String::from).collect();
    let p = variant_ids.len();
    let Some(pos_row) = records.first().filter(|r| r.get(0) == Some("position")) else {
        return Err(Error::parse(name, 2, "wide genotype files need a position row after the header"));
    };
    if pos_row.len() != p + 1 {
        return Err(Error::parse(name, 2, format!("expected {} columns", p + 1)));
    }
    let positions = pos_row
        .iter()
        .skip(1)
        .map(|s| s.parse::<u64>().map_err(|_| Error::parse(name, 2, format!("bad position {s:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let mut strains = Vec::new();
    let mut rows = Vec::new();
    for (k, rec) in records.iter().enumerate().skip(1) {
        let line = k as u64 + 2;
        if rec.len() != p + 1 {
            return Err(Error::parse(name, line, format!("expected {} columns, found {}", p + 1, rec.len())));
        }
        strains.push(rec[0].to_string());
        rows.push(
            rec.iter()
                .skip(1)
                .map(|s| match s {
                    "0" => Ok(0u8),
                    "1" => Ok(1u8),
                    other => Err(Error::parse(name, line, format!("genotype {other:?} is not 0/1"))),
                })
                .collect::<Result<Vec<u8>>>()?,
        );
    }
    SnpMatrix::from_dense(strains, variant_ids, positions, &rows)
}

pub fn load_snp_csv(path: impl AsRef<Path>) -> Result<SnpMatrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_snp_csv(file, &path.display().to_string())
}

/// Writes the wide form read by [`parse_snp_csv`].
pub fn write_snp_csv(path: impl AsRef<Path>, snps: &SnpMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(snps.n_strains() * (2 * snps.n_variants() + 10));
    out.push_str("strain_id");
    for v in snps.variant_ids() {
        out.push(',');
        out.push_str(v);
    }
    out.push_str("\nposition");
    for p in snps.positions() {
        out.push(',');
        out.push_str(&p.to_string());
    }
    out.push('\n');
    let mut dense = vec![vec![b'0'; snps.n_variants()]; snps.n_strains()];
    for j in 0..snps.n_variants() {
        for &i in snps.carriers(j) {
            dense[i as usize][j] = b'1';
        }
    }
    for (i, s) in snps.strain_ids().iter().enumerate() {
        out.push_str(s);
        for g in &dense[i] {
            out.push(',');
            out.push(*g as char);
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
