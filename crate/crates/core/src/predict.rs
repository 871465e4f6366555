//! Posterior prediction of field values at new sites and leave-one-out
//! cross-validation over the training sites.
//!
//! In a single basis coordinate, given the simulations at every site and the
//! training field values, the field value at a new site with its own
//! surrogate is normal with
//!
//! mean = m_new(u) + s C(u)⁻¹ (y^F − m(u)),
//! var  = v_new(u) + b(x_new, x_new) − s C(u)⁻¹ sᵀ,
//!
//! where s holds the bias covariances between the new and training field
//! inputs. Original-unit predictions treat the K basis coordinates of a
//! property as independent, back-rotate, and mix over posterior samples of u
//! by the laws of total expectation and variance.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::PcBasis;
use crate::error::{Error, Result};
use crate::gp::{GpConfig, GpFit};
use crate::kernel::{self, KernelHyper};
use crate::koh::{self, KohAssembly};
use crate::linalg::{self, mix_seed};
use crate::oss::{OssEnsemble, OssTarget};
use crate::simulator::{output_column, FieldDataset};

const Z95: f64 = 1.959_963_984_540_054;

/// Predictive mean and variance of the field value at `new_x` in the
/// assembly's coordinate, given the new site's surrogate.
pub fn predict_basis(asm: &KohAssembly, new_x: &[f64], new_fit: &GpFit, u: &[f64]) -> Result<(f64, f64)> {
    if new_fit.inputs().ncols() != asm.calibration_dim() {
        return Err(Error::dim("new-site surrogate has the wrong calibration dimension"));
    }
    if new_x.len() != asm.field_x().ncols() {
        return Err(Error::dim(format!("new x has {} entries, field inputs have {}", new_x.len(), asm.field_x().ncols())));
    }
    let (m_new, latent) = new_fit.predict_point(u);
    let v_new = latent + new_fit.hyper().noise_variance();
    let Some(bias) = asm.bias() else {
        asm.site_predictions(u)?;
        return Ok((m_new, v_new));
    };
    let (_, chol, r) = asm.conditioned(u)?;
    let s = kernel::cross_cov_point(new_x, asm.field_x(), bias)?;
    let w = chol.solve(&s);
    let mean = m_new + w.dot(&r);
    let var = v_new + bias.point_variance() - w.dot(&s);
    Ok((mean, var.max(0.0)))
}

/// Gaussian conditional of coordinate `i` given the others, from the joint
/// field moments. Returns (mean, variance).
fn leave_one_out(moments: &koh::FieldMoments, field_y: &DVector<f64>, i: usize, with_bias: bool) -> Result<(f64, f64)> {
    let n = field_y.len();
    let c = &moments.cov;
    if !with_bias || n == 1 {
        return Ok((moments.mean[i], c[(i, i)]));
    }
    let others: Vec<usize> = (0..n).filter(|&a| a != i).collect();
    let c_oo = c.select_rows(others.iter()).select_columns(others.iter());
    let c_io = DVector::from_iterator(n - 1, others.iter().map(|&a| c[(i, a)]));
    let r_o = DVector::from_iterator(n - 1, others.iter().map(|&a| field_y[a] - moments.mean[a]));
    let chol = linalg::cholesky(c_oo, "leave-one-out field covariance")?;
    let w = chol.solve(&c_io);
    Ok((moments.mean[i] + w.dot(&r_o), (c[(i, i)] - w.dot(&c_io)).max(0.0)))
}

/// Moments of one original output after mixing over u.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputMoments {
    pub j: usize,
    pub k: usize,
    pub mean: f64,
    pub var: f64,
    /// E over u of the conditional variance.
    pub expected_var: f64,
    /// Variance over u of the conditional mean.
    pub var_of_mean: f64,
}

impl OutputMoments {
    pub fn interval95(&self) -> (f64, f64) {
        let h = Z95 * self.var.sqrt();
        (self.mean - h, self.mean + h)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionResult {
    pub x: Vec<f64>,
    pub with_bias: bool,
    /// Original units, ordered by (j, k).
    pub outputs: Vec<OutputMoments>,
    /// First-PC (mean, variance) per property, mixed over u.
    pub pc1: Vec<(f64, f64)>,
}

/// Per-sample basis moments of one property: (means, variances) over the K
/// coordinates.
type BasisMoments = (Vec<f64>, Vec<f64>);

/// Everything needed to predict in original units: one assembly per
/// (property, basis coordinate), with bias GPs fitted at a reference u.
#[derive(Clone, Debug)]
pub struct PredictionModel {
    pub with_bias: bool,
    pub k_count: usize,
    bases: Vec<PcBasis>,
    mean: Vec<f64>,
    sd: Vec<f64>,
    /// assemblies[j][c].
    assemblies: Vec<Vec<KohAssembly>>,
    field_raw: DMatrix<f64>,
}

impl PredictionModel {
    /// Fits a bias GP per (property, coordinate) on the observed
    /// discrepancies at `u_ref` (skipped when `with_bias` is false). Needs PC
    /// surrogates for all K coordinates.
    pub fn build(
        ens: &OssEnsemble,
        bases: &[PcBasis],
        field_raw: &FieldDataset,
        u_ref: &[f64],
        gp: &GpConfig,
        with_bias: bool,
    ) -> Result<Self> {
        let field_std = ens.standardizer.field(field_raw);
        let mut assemblies = Vec::with_capacity(bases.len());
        for b in bases {
            let j = b.property;
            let per_c: Vec<Result<KohAssembly>> = (0..ens.k_count)
                .into_par_iter()
                .map(|c| {
                    let asm = koh::assemble(ens, &field_std, j, OssTarget::Pc(c), Some(b), None)?;
                    if !with_bias {
                        return Ok(asm);
                    }
                    let cfg = gp.with_seed(mix_seed(gp.seed, (j * ens.k_count + c) as u64));
                    let fit = koh::fit_bias_hypers(&asm, u_ref, &cfg)?;
                    asm.with_bias(Some(fit.hyper().clone()))
                })
                .collect();
            assemblies.push(per_c.into_iter().collect::<Result<Vec<_>>>()?);
        }
        let rows: Vec<usize> = ens.sites.iter().map(|m| m.site_index).collect();
        Ok(PredictionModel {
            with_bias,
            k_count: ens.k_count,
            bases: bases.to_vec(),
            mean: ens.standardizer.mean.clone(),
            sd: ens.standardizer.sd.clone(),
            assemblies,
            field_raw: field_raw.y.select_rows(rows.iter()),
        })
    }

    pub fn assembly(&self, j: usize, c: usize) -> &KohAssembly {
        &self.assemblies[j][c]
    }

    /// Bias hyperparameters per (property, coordinate).
    pub fn bias_hypers(&self) -> Vec<((usize, usize), Option<KernelHyper>)> {
        let mut out = Vec::new();
        for (jj, per_c) in self.assemblies.iter().enumerate() {
            for (c, asm) in per_c.iter().enumerate() {
                out.push(((self.bases[jj].property, c), asm.bias().cloned()));
            }
        }
        out
    }

    /// Original-unit mean and variance of property block `jj` from its basis
    /// moments.
    fn to_original(&self, jj: usize, moments: &BasisMoments) -> (Vec<f64>, Vec<f64>) {
        let b = &self.bases[jj];
        let k_count = self.k_count;
        let z = DMatrix::from_row_slice(1, k_count, &moments.0);
        let ystd = crate::basis::back_project(&z, b).expect("basis sizes checked at build");
        let mut mean = vec![0.0; k_count];
        let mut var = vec![0.0; k_count];
        for k in 0..k_count {
            let col = output_column(b.property, k, k_count);
            let v_std: f64 = (0..k_count).map(|c| (b.w[(k, c)] * b.scale[k]).powi(2) * moments.1[c]).sum();
            mean[k] = ystd[(0, k)] * self.sd[col] + self.mean[col];
            var[k] = v_std * self.sd[col].powi(2);
        }
        (mean, var)
    }

    /// Prediction at a new site from its PC surrogates, keyed by (property,
    /// component), mixed over the given u samples.
    pub fn predict_new(
        &self,
        new_x: &[f64],
        new_fits: &BTreeMap<(usize, usize), GpFit>,
        samples: &[Vec<f64>],
    ) -> Result<PredictionResult> {
        if samples.is_empty() {
            return Err(Error::arg("no u samples to predict with"));
        }
        let per_sample: Vec<Vec<BasisMoments>> = samples
            .par_iter()
            .map(|u| {
                self.assemblies
                    .iter()
                    .enumerate()
                    .map(|(jj, per_c)| {
                        let j = self.bases[jj].property;
                        let mut means = Vec::with_capacity(self.k_count);
                        let mut vars = Vec::with_capacity(self.k_count);
                        for (c, asm) in per_c.iter().enumerate() {
                            let fit = new_fits
                                .get(&(j, c))
                                .ok_or_else(|| Error::UnknownKey(format!("new-site surrogate for property {j}, component {c}")))?;
                            let (m, v) = predict_basis(asm, new_x, fit, u)?;
                            means.push(m);
                            vars.push(v);
                        }
                        Ok((means, vars))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.mix(new_x.to_vec(), &per_sample))
    }

    fn mix(&self, x: Vec<f64>, per_sample: &[Vec<BasisMoments>]) -> PredictionResult {
        let mut outputs = Vec::new();
        let mut pc1 = Vec::new();
        for (jj, b) in self.bases.iter().enumerate() {
            let originals: Vec<(Vec<f64>, Vec<f64>)> = per_sample.iter().map(|s| self.to_original(jj, &s[jj])).collect();
            for k in 0..self.k_count {
                let m = mixture(originals.iter().map(|(mu, v)| (mu[k], v[k])));
                outputs.push(OutputMoments {
                    j: b.property,
                    k,
                    mean: m.0,
                    var: m.1 + m.2,
                    expected_var: m.1,
                    var_of_mean: m.2,
                });
            }
            let m = mixture(per_sample.iter().map(|s| (s[jj].0[0], s[jj].1[0])));
            pc1.push((m.0, m.1 + m.2));
        }
        PredictionResult {
            x,
            with_bias: self.with_bias,
            outputs,
            pc1,
        }
    }

    /// Leave-one-site-out predictions of every training field value, mixed
    /// over the u samples. Bias hyperparameters stay at their full-data fit.
    pub fn loocv(&self, samples: &[Vec<f64>]) -> Result<LooResult> {
        if samples.is_empty() {
            return Err(Error::arg("no u samples to predict with"));
        }
        let nf = self.field_raw.nrows();
        if nf < 3 {
            return Err(Error::arg(format!("leave-one-out needs at least 3 field sites, got {nf}")));
        }
        // moments[s][i][jj]
        let moments: Vec<Vec<Vec<BasisMoments>>> = samples
            .par_iter()
            .map(|u| {
                let mut by_site = vec![Vec::with_capacity(self.assemblies.len()); nf];
                for per_c in &self.assemblies {
                    let mut means = vec![Vec::with_capacity(self.k_count); nf];
                    let mut vars = vec![Vec::with_capacity(self.k_count); nf];
                    for asm in per_c {
                        let fm = asm.field_moments(u)?;
                        for i in 0..nf {
                            let (m, v) = leave_one_out(&fm, asm.field_y(), i, self.with_bias)?;
                            means[i].push(m);
                            vars[i].push(v);
                        }
                    }
                    for (i, (m, v)) in means.into_iter().zip(vars).enumerate() {
                        by_site[i].push((m, v));
                    }
                }
                Ok(by_site)
            })
            .collect::<Result<Vec<_>>>()?;

        let site_ids = self.assemblies[0][0].site_ids().to_vec();
        let mut sites = Vec::new();
        for (i, &site) in site_ids.iter().enumerate() {
            let per_sample: Vec<Vec<BasisMoments>> = moments.iter().map(|m| m[i].clone()).collect();
            let pred = self.mix(Vec::new(), &per_sample);
            for o in pred.outputs {
                let (lo95, hi95) = o.interval95();
                sites.push(LooSite {
                    site,
                    j: o.j,
                    k: o.k,
                    observed: self.field_raw[(i, output_column(o.j, o.k, self.k_count))],
                    mean: o.mean,
                    lo95,
                    hi95,
                });
            }
        }
        Ok(LooResult::from_sites(sites))
    }
}

/// (mean, E[var], Var[mean]) of an equally weighted normal mixture.
fn mixture(parts: impl Iterator<Item = (f64, f64)>) -> (f64, f64, f64) {
    let parts: Vec<(f64, f64)> = parts.collect();
    let n = parts.len() as f64;
    let mean = parts.iter().map(|p| p.0).sum::<f64>() / n;
    let ev = parts.iter().map(|p| p.1).sum::<f64>() / n;
    let ve = parts.iter().map(|p| (p.0 - mean).powi(2)).sum::<f64>() / n;
    (mean, ev, ve)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LooSite {
    pub site: usize,
    pub j: usize,
    pub k: usize,
    pub observed: f64,
    pub mean: f64,
    pub lo95: f64,
    pub hi95: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LooRmse {
    pub j: usize,
    pub k: usize,
    pub rmse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LooResult {
    pub rmse: Vec<LooRmse>,
    pub sites: Vec<LooSite>,
}

impl LooResult {
    fn from_sites(sites: Vec<LooSite>) -> Self {
        let mut acc: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
        for s in &sites {
            let e = acc.entry((s.j, s.k)).or_insert((0.0, 0));
            e.0 += (s.mean - s.observed).powi(2);
            e.1 += 1;
        }
        let rmse = acc
            .into_iter()
            .map(|((j, k), (sse, n))| LooRmse {
                j,
                k,
                rmse: (sse / n as f64).sqrt(),
            })
            .collect();
        LooResult { rmse, sites }
    }

    /// Fraction of held-out values inside their 95% intervals.
    pub fn coverage(&self) -> f64 {
        let inside = self.sites.iter().filter(|s| s.lo95 <= s.observed && s.observed <= s.hi95).count();
        inside as f64 / self.sites.len() as f64
    }

    pub fn mean_interval_width(&self) -> f64 {
        self.sites.iter().map(|s| s.hi95 - s.lo95).sum::<f64>() / self.sites.len() as f64
    }
}
