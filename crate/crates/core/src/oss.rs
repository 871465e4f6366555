//! On-site surrogates: one GP per (site, output) over the calibration inputs,
//! plus per-(site, property, component) GPs on principal-component
//! projections.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{self, PcBasis};
use crate::error::{Error, Result};
use crate::gp::{self, GpConfig, GpFit};
use crate::linalg::mix_seed;
use crate::simulator::{output_column, FieldDataset, SiteDataset};

/// Sites with fewer converged rows than this get no surrogate.
pub const MIN_CONVERGED_ROWS: usize = 10;

/// Per-output centering and scaling over every converged simulation row of
/// the campaign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn from_sites(sites: &[SiteDataset]) -> Result<Self> {
        let outputs = sites.first().map(|s| s.y.ncols()).ok_or_else(|| Error::arg("no sites"))?;
        let mut sum = vec![0.0; outputs];
        let mut sumsq = vec![0.0; outputs];
        let mut n = 0usize;
        for site in sites {
            if site.y.ncols() != outputs {
                return Err(Error::dim(format!("site {} has {} outputs, expected {outputs}", site.site_index, site.y.ncols())));
            }
            for (r, &missing) in site.missing.iter().enumerate() {
                if missing {
                    continue;
                }
                n += 1;
                for c in 0..outputs {
                    sum[c] += site.y[(r, c)];
                }
            }
        }
        if n < 2 {
            return Err(Error::arg("standardization needs at least two converged rows"));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        for site in sites {
            for (r, &missing) in site.missing.iter().enumerate() {
                if !missing {
                    for c in 0..outputs {
                        sumsq[c] += (site.y[(r, c)] - mean[c]).powi(2);
                    }
                }
            }
        }
        let sd: Vec<f64> = sumsq.iter().map(|s| (s / (n - 1) as f64).sqrt()).collect();
        if let Some(c) = sd.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::arg(format!("output column {c} is constant over the campaign")));
        }
        Ok(Standardizer { mean, sd })
    }

    pub fn forward(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(y.nrows(), y.ncols(), |r, c| (y[(r, c)] - self.mean[c]) / self.sd[c])
    }

    pub fn inverse(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(z.nrows(), z.ncols(), |r, c| z[(r, c)] * self.sd[c] + self.mean[c])
    }

    pub fn site(&self, site: &SiteDataset) -> SiteDataset {
        SiteDataset {
            y: self.forward(&site.y),
            ..site.clone()
        }
    }

    pub fn field(&self, field: &FieldDataset) -> FieldDataset {
        FieldDataset {
            y: self.forward(&field.y),
            ..field.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteMeta {
    pub site_index: usize,
    pub x: Vec<f64>,
    pub n_converged: usize,
}

/// A site whose surrogates could not be built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteError {
    pub site_index: usize,
    pub message: String,
}

/// (site, property, frequency) for raw fits; (site, property, component)
/// for PC fits.
pub type FitKey = (usize, usize, usize);

/// A surrogate to fit: key, training inputs and targets.
pub type FitTask = (FitKey, DMatrix<f64>, DVector<f64>);

/// Which surrogate of a (site, property) pair to query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OssTarget {
    Raw(usize),
    Pc(usize),
}

#[derive(Clone, Debug)]
pub struct OssEnsemble {
    pub j_count: usize,
    pub k_count: usize,
    pub standardizer: Standardizer,
    pub sites: Vec<SiteMeta>,
    /// Fits on standardized outputs.
    pub fits: BTreeMap<FitKey, GpFit>,
    /// Fits on PC projections of standardized outputs.
    pub pc_fits: BTreeMap<FitKey, GpFit>,
    pub errors: Vec<SiteError>,
}

fn fit_seed(seed: u64, key: FitKey, pc: bool) -> u64 {
    let salt = ((key.0 as u64) << 32) ^ ((key.1 as u64) << 16) ^ key.2 as u64 ^ if pc { 1 << 63 } else { 0 };
    mix_seed(seed, salt)
}

impl OssEnsemble {
    pub fn site_meta(&self, site_index: usize) -> Option<&SiteMeta> {
        self.sites.iter().find(|m| m.site_index == site_index)
    }

    pub fn fit(&self, i: usize, j: usize, target: OssTarget) -> Result<&GpFit> {
        let found = match target {
            OssTarget::Raw(k) => self.fits.get(&(i, j, k)),
            OssTarget::Pc(c) => self.pc_fits.get(&(i, j, c)),
        };
        found.ok_or_else(|| Error::UnknownKey(format!("surrogate {target:?} at site {i}, property {j}")))
    }

    /// Fits PC-level surrogates for the first `components` directions of every
    /// basis at every site with raw surrogates.
    pub fn fit_pc(&mut self, sites: &[SiteDataset], bases: &[PcBasis], components: usize, cfg: &GpConfig) -> Result<()> {
        let tasks = self.pc_tasks(sites, bases, components)?;
        let fitted: Vec<(FitKey, Result<GpFit>)> = tasks
            .into_par_iter()
            .map(|(key, u, z)| {
                let fit = gp::fit_hypers(&u, &z, &cfg.with_seed(fit_seed(cfg.seed, key, true)));
                (key, fit)
            })
            .collect();
        for (key, fit) in fitted {
            self.pc_fits.insert(key, fit?);
        }
        Ok(())
    }

    /// Training inputs and projected targets of every PC surrogate.
    pub fn pc_tasks(
        &self,
        sites: &[SiteDataset],
        bases: &[PcBasis],
        components: usize,
    ) -> Result<Vec<FitTask>> {
        let mut tasks = Vec::new();
        for meta in &self.sites {
            let site = sites
                .iter()
                .find(|s| s.site_index == meta.site_index)
                .ok_or_else(|| Error::arg(format!("no simulation data for site {}", meta.site_index)))?;
            tasks.extend(self.site_pc_targets(site, bases, components)?);
        }
        Ok(tasks)
    }

    fn site_pc_targets(
        &self,
        site: &SiteDataset,
        bases: &[PcBasis],
        components: usize,
    ) -> Result<Vec<FitTask>> {
        let u = site.converged_u();
        let y = self.standardizer.forward(&site.converged_y());
        let mut tasks = Vec::new();
        for b in bases {
            let block = property_block(&y, b.property, self.k_count);
            let z = basis::project(&block, b, components)?;
            for c in 0..components {
                tasks.push(((site.site_index, b.property, c), u.clone(), z.column(c).into_owned()));
            }
        }
        Ok(tasks)
    }

    /// PC surrogates for a site outside the ensemble, keyed by (property,
    /// component), using the ensemble's standardization.
    pub fn fit_new_site(
        &self,
        site: &SiteDataset,
        bases: &[PcBasis],
        components: usize,
        cfg: &GpConfig,
    ) -> Result<BTreeMap<(usize, usize), GpFit>> {
        if site.n_converged() < MIN_CONVERGED_ROWS {
            return Err(Error::arg(format!(
                "new site has {} converged rows, need {MIN_CONVERGED_ROWS}",
                site.n_converged()
            )));
        }
        let tasks = self.site_pc_targets(site, bases, components)?;
        tasks
            .into_par_iter()
            .map(|(key, u, z)| {
                let fit = gp::fit_hypers(&u, &z, &cfg.with_seed(fit_seed(cfg.seed, key, true)))?;
                Ok(((key.1, key.2), fit))
            })
            .collect()
    }

    /// Mean and latent variance of a surrogate at each row of `u`, in
    /// standardized (or projected) units.
    pub fn predict(&self, i: usize, j: usize, target: OssTarget, u: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let fit = self.fit(i, j, target)?;
        if u.ncols() != fit.inputs().ncols() {
            return Err(Error::dim(format!("u has {} columns, surrogate has {}", u.ncols(), fit.inputs().ncols())));
        }
        let (mut kb, mut vb) = (Vec::new(), Vec::new());
        let mut mean = DVector::zeros(u.nrows());
        let mut var = DVector::zeros(u.nrows());
        for r in 0..u.nrows() {
            let point: Vec<f64> = u.row(r).iter().copied().collect();
            let (m, v) = fit.predict_point_with(&point, &mut kb, &mut vb);
            mean[r] = m;
            var[r] = v;
        }
        Ok((mean, var))
    }
}

/// The K columns of property `j`.
pub fn property_block(y: &DMatrix<f64>, j: usize, k_count: usize) -> DMatrix<f64> {
    y.columns(output_column(j, 0, k_count), k_count).into_owned()
}

/// Standardizes the campaign and registers every site with enough converged
/// rows, without fitting anything yet. PC surrogates can be added with
/// [`OssEnsemble::fit_pc`].
pub fn prepare_oss(sites: &[SiteDataset], j_count: usize, k_count: usize) -> Result<OssEnsemble> {
    if sites.iter().any(|s| s.y.ncols() != j_count * k_count) {
        return Err(Error::dim(format!("every site needs {} output columns", j_count * k_count)));
    }
    let usable: Vec<SiteDataset> = sites.iter().filter(|s| s.n_converged() >= MIN_CONVERGED_ROWS).cloned().collect();
    let standardizer = Standardizer::from_sites(&usable)?;
    let errors: Vec<SiteError> = sites
        .iter()
        .filter(|s| s.n_converged() < MIN_CONVERGED_ROWS)
        .map(|s| SiteError {
            site_index: s.site_index,
            message: format!("{} converged rows, need {MIN_CONVERGED_ROWS}", s.n_converged()),
        })
        .collect();
    let metas = usable
        .iter()
        .map(|s| SiteMeta {
            site_index: s.site_index,
            x: s.x.clone(),
            n_converged: s.n_converged(),
        })
        .collect();
    Ok(OssEnsemble {
        j_count,
        k_count,
        standardizer,
        sites: metas,
        fits: BTreeMap::new(),
        pc_fits: BTreeMap::new(),
        errors,
    })
}

/// Fits one surrogate per (site, property, frequency) on standardized
/// outputs. Sites with too few converged rows, or whose fits fail, are
/// recorded in `errors` and left out.
pub fn build_oss(sites: &[SiteDataset], j_count: usize, k_count: usize, cfg: &GpConfig) -> Result<OssEnsemble> {
    let mut ens = prepare_oss(sites, j_count, k_count)?;
    let mut tasks = Vec::new();
    for site in sites.iter().filter(|s| ens.site_meta(s.site_index).is_some()) {
        let u = site.converged_u();
        let y = ens.standardizer.forward(&site.converged_y());
        for j in 0..j_count {
            for k in 0..k_count {
                let key = (site.site_index, j, k);
                tasks.push((key, u.clone(), y.column(output_column(j, k, k_count)).into_owned()));
            }
        }
    }
    let fitted: Vec<(FitKey, Result<GpFit>)> = tasks
        .into_par_iter()
        .map(|(key, u, y)| (key, gp::fit_hypers(&u, &y, &cfg.with_seed(fit_seed(cfg.seed, key, false)))))
        .collect();

    let mut failed = std::collections::BTreeSet::new();
    for (key, fit) in fitted {
        match fit {
            Ok(f) => {
                ens.fits.insert(key, f);
            }
            Err(e) => {
                if failed.insert(key.0) {
                    ens.errors.push(SiteError {
                        site_index: key.0,
                        message: format!("property {} frequency {}: {e}", key.1, key.2),
                    });
                }
            }
        }
    }
    ens.fits.retain(|key, _| !failed.contains(&key.0));
    ens.sites.retain(|m| !failed.contains(&m.site_index));
    ens.errors.sort_by_key(|e| e.site_index);
    Ok(ens)
}

/// One row of a per-surrogate diagnostic table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostic {
    pub site: usize,
    pub j: usize,
    pub k: usize,
    pub value: f64,
}

/// Estimated noise variance τ̂²η̂ of every raw surrogate, in original output
/// units.
pub fn noise_levels(ens: &OssEnsemble) -> Vec<FitDiagnostic> {
    ens.fits
        .iter()
        .map(|(&(i, j, k), fit)| FitDiagnostic {
            site: i,
            j,
            k,
            value: fit.hyper().noise_variance() * ens.standardizer.sd[output_column(j, k, ens.k_count)].powi(2),
        })
        .collect()
}

/// Root mean squared error of surrogate means against held-out runs at the
/// same sites, in original output units.
pub fn oos_rmse(ens: &OssEnsemble, holdout: &[SiteDataset]) -> Result<Vec<FitDiagnostic>> {
    let mut out = Vec::new();
    for meta in &ens.sites {
        let site = holdout
            .iter()
            .find(|s| s.site_index == meta.site_index)
            .ok_or_else(|| Error::arg(format!("no holdout data for site {}", meta.site_index)))?;
        let u = site.converged_u();
        let y = site.converged_y();
        if u.nrows() == 0 {
            return Err(Error::arg(format!("holdout site {} has no converged rows", meta.site_index)));
        }
        for j in 0..ens.j_count {
            for k in 0..ens.k_count {
                let col = output_column(j, k, ens.k_count);
                let (mean, _) = ens.predict(meta.site_index, j, OssTarget::Raw(k), &u)?;
                let (mu, sd) = (ens.standardizer.mean[col], ens.standardizer.sd[col]);
                let mse = (0..u.nrows()).map(|r| (mean[r] * sd + mu - y[(r, col)]).powi(2)).sum::<f64>() / u.nrows() as f64;
                out.push(FitDiagnostic {
                    site: meta.site_index,
                    j,
                    k,
                    value: mse.sqrt(),
                });
            }
        }
    }
    Ok(out)
}
