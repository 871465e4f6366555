//! File formats: CSV tables for designs, campaigns, field data, chains and
//! diagnostics; JSON records for surrogate ensembles and bases.
//!
//! Floats are written in shortest round-trip form, so a read after a write
//! reproduces values exactly and identical runs produce identical files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::basis::PcBasis;
use crate::calibrate::{Chain, MapStart};
use crate::design::Design;
use crate::error::{Error, Result};
use crate::gp::GpFit;
use crate::kernel::KernelHyper;
use crate::oss::{FitKey, OssEnsemble, SiteError, SiteMeta, Standardizer};
use crate::simulator::{FieldDataset, SiteDataset};

fn schema(path: &Path, message: impl Into<String>) -> Error {
    Error::Schema {
        file: path.display().to_string(),
        message: message.into(),
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| schema(path, format!("cannot open: {e}")))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

/// Output column name for property j, frequency k (both 1-based in files).
pub fn output_name(j: usize, k: usize) -> String {
    format!("y_{}_{}", j + 1, k + 1)
}

/// Writes a header and rows of floats.
pub fn write_matrix(path: &Path, header: &[String], m: &DMatrix<f64>) -> Result<()> {
    if header.len() != m.ncols() {
        return Err(Error::dim(format!("{} column names for {} columns", header.len(), m.ncols())));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in 0..m.nrows() {
        w.write_record(m.row(r).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a table of floats, returning its header and values.
pub fn read_matrix(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut rdr = open_reader(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut data = Vec::new();
    let mut rows = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(schema(path, format!("row {} has {} fields, header has {}", line + 1, rec.len(), header.len())));
        }
        for (field, name) in rec.iter().zip(&header) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| schema(path, format!("row {}, column {name}: not a number: {field:?}", line + 1)))?;
            data.push(v);
        }
        rows += 1;
    }
    Ok((header.clone(), DMatrix::from_row_slice(rows, header.len(), &data)))
}

fn expect_prefix(path: &Path, header: &[String], prefix: &str, count: usize, offset: usize) -> Result<()> {
    for l in 0..count {
        let want = format!("{prefix}{}", l + 1);
        match header.get(offset + l) {
            Some(h) if *h == want => {}
            other => return Err(schema(path, format!("expected column {want}, found {other:?}"))),
        }
    }
    Ok(())
}

fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|l| format!("{prefix}{l}")).collect()
}

fn output_names(j_count: usize, k_count: usize) -> Vec<String> {
    let mut v = Vec::new();
    for j in 0..j_count {
        for k in 0..k_count {
            v.push(output_name(j, k));
        }
    }
    v
}

pub fn write_design(path: &Path, design: &Design) -> Result<()> {
    write_matrix(path, &numbered("u", design.dim()), &design.points)
}

pub fn read_design(path: &Path) -> Result<DMatrix<f64>> {
    let (header, m) = read_matrix(path)?;
    expect_prefix(path, &header, "u", header.len(), 0)?;
    Ok(m)
}

/// Site file: u1..u_p, y_1_1..y_J_K, missing (0 or 1). Missing rows hold NaN.
pub fn write_site(path: &Path, site: &SiteDataset, j_count: usize, k_count: usize) -> Result<()> {
    let mut header = numbered("u", site.u.ncols());
    header.extend(output_names(j_count, k_count));
    header.push("missing".into());
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&header)?;
    for r in 0..site.u.nrows() {
        let mut rec: Vec<String> = site.u.row(r).iter().map(|v| v.to_string()).collect();
        rec.extend(site.y.row(r).iter().map(|v| v.to_string()));
        rec.push(if site.missing[r] { "1" } else { "0" }.into());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_site(path: &Path, site_index: usize, x: Vec<f64>, p_u: usize, j_count: usize, k_count: usize) -> Result<SiteDataset> {
    let (header, m) = read_matrix(path)?;
    let outputs = j_count * k_count;
    if header.len() != p_u + outputs + 1 || header.last().map(String::as_str) != Some("missing") {
        return Err(schema(path, format!("expected {p_u} u columns, {outputs} outputs and a missing flag")));
    }
    expect_prefix(path, &header, "u", p_u, 0)?;
    for (c, name) in output_names(j_count, k_count).iter().enumerate() {
        if header[p_u + c] != *name {
            return Err(schema(path, format!("expected column {name}, found {}", header[p_u + c])));
        }
    }
    let n = m.nrows();
    let mut missing = Vec::with_capacity(n);
    for r in 0..n {
        let flag = m[(r, p_u + outputs)];
        if flag != 0.0 && flag != 1.0 {
            return Err(schema(path, format!("row {}: missing flag must be 0 or 1", r + 1)));
        }
        let finite = (0..outputs).all(|c| m[(r, p_u + c)].is_finite());
        if flag == 0.0 && !finite {
            return Err(schema(path, format!("row {}: converged row has non-finite outputs", r + 1)));
        }
        missing.push(flag == 1.0);
    }
    Ok(SiteDataset {
        site_index,
        x,
        u: m.columns(0, p_u).into_owned(),
        y: m.columns(p_u, outputs).into_owned(),
        missing,
    })
}

/// Field file: x1..x_p, then y_1_1..y_J_K.
pub fn write_field(path: &Path, field: &FieldDataset, j_count: usize, k_count: usize) -> Result<()> {
    let mut header = numbered("x", field.x.ncols());
    header.extend(output_names(j_count, k_count));
    let mut m = DMatrix::zeros(field.len(), header.len());
    m.columns_mut(0, field.x.ncols()).copy_from(&field.x);
    m.columns_mut(field.x.ncols(), field.y.ncols()).copy_from(&field.y);
    write_matrix(path, &header, &m)
}

pub fn read_field(path: &Path, j_count: usize, k_count: usize) -> Result<FieldDataset> {
    let (header, m) = read_matrix(path)?;
    let p_x = header.iter().take_while(|h| h.starts_with('x')).count();
    let outputs = j_count * k_count;
    if p_x == 0 || header.len() != p_x + outputs {
        return Err(schema(path, format!("expected x columns followed by {outputs} outputs")));
    }
    expect_prefix(path, &header, "x", p_x, 0)?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(schema(path, "field data must be finite"));
    }
    Ok(FieldDataset {
        x: m.columns(0, p_x).into_owned(),
        y: m.columns(p_x, outputs).into_owned(),
        replicate_counts: None,
    })
}

/// Writes serializable rows with a header derived from the field names.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = open_reader(path)?;
    let mut out = Vec::new();
    for (line, rec) in rdr.deserialize().enumerate() {
        out.push(rec.map_err(|e| schema(path, format!("row {}: {e}", line + 1)))?);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| schema(path, format!("cannot open: {e}")))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| schema(path, e.to_string()))
}

/// Serialized basis; W is stored row by row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisRecord {
    pub property: usize,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    pub w: Vec<Vec<f64>>,
    pub var_fractions: Vec<f64>,
}

impl From<&PcBasis> for BasisRecord {
    fn from(b: &PcBasis) -> Self {
        BasisRecord {
            property: b.property,
            center: b.center.iter().copied().collect(),
            scale: b.scale.iter().copied().collect(),
            w: (0..b.w.nrows()).map(|r| b.w.row(r).iter().copied().collect()).collect(),
            var_fractions: b.var_fractions.iter().copied().collect(),
        }
    }
}

impl BasisRecord {
    pub fn to_basis(&self) -> Result<PcBasis> {
        let k = self.center.len();
        if self.scale.len() != k || self.var_fractions.len() != k || self.w.len() != k || self.w.iter().any(|r| r.len() != k) {
            return Err(Error::dim(format!("basis record for property {} has inconsistent sizes", self.property)));
        }
        let flat: Vec<f64> = self.w.iter().flatten().copied().collect();
        Ok(PcBasis {
            property: self.property,
            center: DVector::from_vec(self.center.clone()),
            scale: DVector::from_vec(self.scale.clone()),
            w: DMatrix::from_row_slice(k, k, &flat),
            var_fractions: DVector::from_vec(self.var_fractions.clone()),
        })
    }
}

/// Hyperparameters of one surrogate; its data are re-read from the site
/// files and the factorization recomputed on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub site: usize,
    pub j: usize,
    /// Frequency for raw fits, component for PC fits.
    pub k: usize,
    pub hyper: KernelHyper,
    pub data: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRecord {
    pub j_count: usize,
    pub k_count: usize,
    pub standardizer: Standardizer,
    pub sites: Vec<SiteMeta>,
    pub errors: Vec<SiteError>,
    pub fits: Vec<FitRecord>,
    pub pc_fits: Vec<FitRecord>,
}

fn site_file(i: usize) -> String {
    format!("site_{i}.csv")
}

impl EnsembleRecord {
    pub fn from_ensemble(ens: &OssEnsemble) -> Self {
        let rec = |fits: &BTreeMap<FitKey, GpFit>| {
            fits.iter()
                .map(|(&(i, j, k), f)| FitRecord {
                    site: i,
                    j,
                    k,
                    hyper: f.hyper().clone(),
                    data: site_file(i),
                })
                .collect()
        };
        EnsembleRecord {
            j_count: ens.j_count,
            k_count: ens.k_count,
            standardizer: ens.standardizer.clone(),
            sites: ens.sites.clone(),
            errors: ens.errors.clone(),
            fits: rec(&ens.fits),
            pc_fits: rec(&ens.pc_fits),
        }
    }

    /// Rebuilds the ensemble from the hyperparameters and the campaign data.
    /// PC fits need the bases they were trained on.
    pub fn to_ensemble(&self, sites: &[SiteDataset], bases: &[PcBasis]) -> Result<OssEnsemble> {
        let mut ens = OssEnsemble {
            j_count: self.j_count,
            k_count: self.k_count,
            standardizer: self.standardizer.clone(),
            sites: self.sites.clone(),
            fits: BTreeMap::new(),
            pc_fits: BTreeMap::new(),
            errors: self.errors.clone(),
        };
        let find = |i: usize| {
            sites
                .iter()
                .find(|s| s.site_index == i)
                .ok_or_else(|| Error::arg(format!("no simulation data for site {i}")))
        };
        for r in &self.fits {
            let site = find(r.site)?;
            let y = ens.standardizer.forward(&site.converged_y());
            let col = crate::simulator::output_column(r.j, r.k, self.k_count);
            let fit = GpFit::new(site.converged_u(), y.column(col).into_owned(), r.hyper.clone())?;
            ens.fits.insert((r.site, r.j, r.k), fit);
        }
        if !self.pc_fits.is_empty() {
            let components = self.pc_fits.iter().map(|r| r.k + 1).max().unwrap_or(0);
            let tasks = ens.pc_tasks(sites, bases, components)?;
            let lookup: BTreeMap<FitKey, &FitRecord> = self.pc_fits.iter().map(|r| ((r.site, r.j, r.k), r)).collect();
            for (key, u, z) in tasks {
                if let Some(r) = lookup.get(&key) {
                    ens.pc_fits.insert(key, GpFit::new(u, z, r.hyper.clone())?);
                }
            }
            if ens.pc_fits.len() != self.pc_fits.len() {
                return Err(Error::arg("PC surrogate records do not match the supplied bases"));
            }
        }
        Ok(ens)
    }
}

/// Chain CSV: u1..u_p, log_post.
pub fn write_chain(path: &Path, chain: &Chain) -> Result<()> {
    let p = chain.dim();
    let mut header = numbered("u", p);
    header.push("log_post".into());
    let mut m = DMatrix::zeros(chain.len(), p + 1);
    m.columns_mut(0, p).copy_from(&chain.samples);
    m.set_column(p, &chain.log_post);
    write_matrix(path, &header, &m)
}

/// Reads the samples and log posterior of a chain file. Adaptation details
/// are not stored, so the returned chain carries neutral placeholders.
pub fn read_chain(path: &Path) -> Result<Chain> {
    let (header, m) = read_matrix(path)?;
    let p = header.len().saturating_sub(1);
    if p == 0 || header.last().map(String::as_str) != Some("log_post") {
        return Err(schema(path, "expected u columns followed by log_post"));
    }
    expect_prefix(path, &header, "u", p, 0)?;
    if m.nrows() == 0 {
        return Err(schema(path, "chain has no samples"));
    }
    Ok(Chain {
        samples: m.columns(0, p).into_owned(),
        log_post: m.column(p).into_owned(),
        acceptance: vec![f64::NAN; p],
        proposal_sd: vec![f64::NAN; p],
        burn_in: 0,
        seed: 0,
    })
}

/// MAP trace CSV: start, u1..u_p, value, iterations.
pub fn write_map_trace(path: &Path, trace: &[MapStart]) -> Result<()> {
    let p = trace.first().map_or(0, |t| t.u.len());
    let mut header = vec!["start".to_string()];
    header.extend(numbered("u", p));
    header.push("value".into());
    header.push("iterations".into());
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&header)?;
    for t in trace {
        let mut rec = vec![t.start.to_string()];
        rec.extend(t.u.iter().map(|v| v.to_string()));
        rec.push(t.value.to_string());
        rec.push(t.iterations.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_map_trace(path: &Path) -> Result<Vec<MapStart>> {
    let (header, m) = read_matrix(path)?;
    if header.len() < 4 || header[0] != "start" {
        return Err(schema(path, "expected start, u columns, value, iterations"));
    }
    let p = header.len() - 3;
    expect_prefix(path, &header, "u", p, 1)?;
    Ok((0..m.nrows())
        .map(|r| MapStart {
            start: m[(r, 0)] as usize,
            u: (0..p).map(|l| m[(r, 1 + l)]).collect(),
            value: m[(r, p + 1)],
            iterations: m[(r, p + 2)] as usize,
        })
        .collect())
}
