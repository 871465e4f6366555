//! Kennedy–O'Hagan likelihood in a single principal-component coordinate.
//!
//! The simulation covariance is block diagonal with one block per field site,
//! because each on-site surrogate only relates runs at its own site. After
//! conditioning the field values on the simulations, the joint density splits
//! into the per-site surrogate likelihoods times an N_F-dimensional normal
//! with mean m(u) and covariance
//!
//! C(u) = Σ_b + diag(Σ_i(u, u) − Σ_i(u, U_i) Σ_i(U_i, U_i)⁻¹ Σ_i(U_i, u)),
//!
//! the Schur complement of the simulation block. The per-site blocks are
//! factorized once, so a likelihood evaluation costs O(Σ n_i² + N_F³).
//!
//! The field diagonal Σ_i(u, u) includes the surrogate nugget, as the kernel
//! does for coincident inputs; field noise lives in the bias nugget.

use nalgebra::{DMatrix, DVector};

use crate::basis::{self, PcBasis};
use crate::error::{Error, Result};
use crate::gp::{self, GpConfig, GpFit};
use crate::kernel::{self, KernelHyper};
use crate::linalg::{self, Chol, PackedLower};
use crate::oss::{property_block, OssEnsemble, OssTarget};
use crate::simulator::{output_column, FieldDataset};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Precomputed pieces of the first-PC (or any single-coordinate) joint
/// likelihood of one property.
#[derive(Clone, Debug)]
pub struct KohAssembly {
    pub property: usize,
    /// Field-row site indices, in block order.
    site_ids: Vec<usize>,
    /// Surrogate of each site, in the same order.
    fits: Vec<GpFit>,
    /// Packed Cholesky factor of each site block.
    factors: Vec<PackedLower>,
    field_x: DMatrix<f64>,
    field_y: DVector<f64>,
    bias: Option<KernelHyper>,
    /// Σ_b over the field inputs, nugget included.
    bias_cov: DMatrix<f64>,
    sim_loglik: f64,
    max_block: usize,
}

/// Conditional moments of the field values given the simulations.
#[derive(Clone, Debug)]
pub struct FieldMoments {
    /// Surrogate means m_i(u).
    pub mean: DVector<f64>,
    /// Surrogate conditional variances, nugget included.
    pub sim_var: DVector<f64>,
    /// C(u).
    pub cov: DMatrix<f64>,
}

impl KohAssembly {
    /// `fits[i]` is the surrogate at field row `i` of `field_x`/`field_y`.
    /// `site_ids` labels the rows for reporting.
    pub fn new(
        property: usize,
        site_ids: Vec<usize>,
        fits: Vec<GpFit>,
        field_x: DMatrix<f64>,
        field_y: DVector<f64>,
        bias: Option<KernelHyper>,
    ) -> Result<Self> {
        let nf = fits.len();
        if nf == 0 {
            return Err(Error::arg("assembly needs at least one site"));
        }
        if site_ids.len() != nf || field_x.nrows() != nf || field_y.len() != nf {
            return Err(Error::dim(format!(
                "{nf} surrogates, {} site ids, {} field inputs, {} field values",
                site_ids.len(),
                field_x.nrows(),
                field_y.len()
            )));
        }
        let p_u = fits[0].inputs().ncols();
        if fits.iter().any(|f| f.inputs().ncols() != p_u) {
            return Err(Error::dim("surrogates disagree on the calibration dimension"));
        }
        if field_y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field values".into()));
        }
        let bias_cov = match &bias {
            Some(h) => kernel::cov_matrix(&field_x, h)?,
            None => DMatrix::zeros(nf, nf),
        };
        let sim_loglik = fits.iter().map(GpFit::log_likelihood).sum();
        let max_block = fits.iter().map(GpFit::len).max().unwrap_or(0);
        let factors = fits.iter().map(|f| PackedLower::from_chol(f.chol())).collect();
        Ok(KohAssembly {
            property,
            site_ids,
            fits,
            factors,
            field_x,
            field_y,
            bias,
            bias_cov,
            sim_loglik,
            max_block,
        })
    }

    /// Same data with different (or no) bias hyperparameters.
    pub fn with_bias(&self, bias: Option<KernelHyper>) -> Result<Self> {
        let bias_cov = match &bias {
            Some(h) => kernel::cov_matrix(&self.field_x, h)?,
            None => DMatrix::zeros(self.len(), self.len()),
        };
        Ok(KohAssembly {
            bias,
            bias_cov,
            ..self.clone()
        })
    }

    /// Same surrogates and bias with different field values.
    pub fn with_field_y(&self, field_y: DVector<f64>) -> Result<Self> {
        if field_y.len() != self.len() {
            return Err(Error::dim("field values do not match the sites"));
        }
        Ok(KohAssembly {
            field_y,
            ..self.clone()
        })
    }

    pub fn len(&self) -> usize {
        self.fits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fits.is_empty()
    }

    pub fn site_ids(&self) -> &[usize] {
        &self.site_ids
    }

    pub fn fits(&self) -> &[GpFit] {
        &self.fits
    }

    pub fn field_x(&self) -> &DMatrix<f64> {
        &self.field_x
    }

    pub fn field_y(&self) -> &DVector<f64> {
        &self.field_y
    }

    pub fn bias(&self) -> Option<&KernelHyper> {
        self.bias.as_ref()
    }

    pub fn bias_cov(&self) -> &DMatrix<f64> {
        &self.bias_cov
    }

    pub fn calibration_dim(&self) -> usize {
        self.fits[0].inputs().ncols()
    }

    /// Σ_i log N(y^M_i; 0, Σ_i(U_i, U_i)).
    pub fn sim_log_likelihood(&self) -> f64 {
        self.sim_loglik
    }

    /// log|Σ_{N_M}| as the sum of the site block log-determinants.
    pub fn sim_log_det(&self) -> f64 {
        self.fits.iter().map(GpFit::log_det).sum()
    }

    fn check_u(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.calibration_dim() {
            return Err(Error::dim(format!("u has {} entries, expected {}", u.len(), self.calibration_dim())));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("calibration parameter".into()));
        }
        Ok(())
    }

    /// Surrogate means and conditional variances at u, one per site.
    pub fn site_predictions(&self, u: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        self.check_u(u)?;
        let nf = self.len();
        let mut kbuf = Vec::with_capacity(self.max_block);
        let mut mean = DVector::zeros(nf);
        let mut var = DVector::zeros(nf);
        for (i, (fit, factor)) in self.fits.iter().zip(&self.factors).enumerate() {
            let h = fit.hyper();
            kernel::cross_cov_point_into(u, fit.inputs(), h, &mut kbuf);
            mean[i] = kbuf.iter().zip(fit.alpha().iter()).map(|(k, a)| k * a).sum();
            let reduction = factor.inv_quad_form_in_place(&mut kbuf);
            var[i] = (h.scale - reduction).max(0.0) + h.noise_variance();
        }
        Ok((mean, var))
    }

    /// y^F − m(u), the observed discrepancy in this coordinate.
    pub fn observed_discrepancy(&self, u: &[f64]) -> Result<DVector<f64>> {
        let (mean, _) = self.site_predictions(u)?;
        Ok(&self.field_y - mean)
    }

    pub fn field_moments(&self, u: &[f64]) -> Result<FieldMoments> {
        let (mean, sim_var) = self.site_predictions(u)?;
        let mut cov = self.bias_cov.clone();
        for i in 0..self.len() {
            cov[(i, i)] += sim_var[i];
        }
        Ok(FieldMoments { mean, sim_var, cov })
    }

    /// Joint log density of all simulation and field values at u.
    pub fn loglik(&self, u: &[f64]) -> Result<f64> {
        let FieldMoments { mean, cov, .. } = self.field_moments(u)?;
        let r = &self.field_y - mean;
        let field = if self.bias.is_some() {
            let chol = linalg::cholesky(cov, "field Schur complement C(u)")?;
            linalg::mvn_log_density(&chol, &r)
        } else {
            diagonal_log_density(&cov, &r)
        };
        Ok(self.sim_loglik + field)
    }

    /// Factor of C(u) along with the residual y^F − m(u).
    pub fn conditioned(&self, u: &[f64]) -> Result<(FieldMoments, Chol, DVector<f64>)> {
        let moments = self.field_moments(u)?;
        let chol = linalg::cholesky(moments.cov.clone(), "field Schur complement C(u)")?;
        let r = &self.field_y - &moments.mean;
        Ok((moments, chol, r))
    }
}

/// Field values of property `j` at the ensemble's sites in one coordinate:
/// a standardized output column, or a principal component of the
/// standardized property block.
pub fn field_coordinate(
    ens: &OssEnsemble,
    field_std: &FieldDataset,
    j: usize,
    target: OssTarget,
    basis: Option<&PcBasis>,
) -> Result<DVector<f64>> {
    let rows: Vec<usize> = ens.sites.iter().map(|m| m.site_index).collect();
    if let Some(&bad) = rows.iter().find(|&&r| r >= field_std.len()) {
        return Err(Error::dim(format!("site {bad} has no field row")));
    }
    match target {
        OssTarget::Raw(k) => {
            let col = output_column(j, k, ens.k_count);
            Ok(DVector::from_iterator(rows.len(), rows.iter().map(|&r| field_std.y[(r, col)])))
        }
        OssTarget::Pc(c) => {
            let b = basis.ok_or_else(|| Error::arg("a PC coordinate needs its basis"))?;
            let block = property_block(&field_std.y.select_rows(rows.iter()), j, ens.k_count);
            Ok(basis::project(&block, b, b.k())?.column(c).into_owned())
        }
    }
}

/// Assembly of property `j` in one coordinate from an ensemble and
/// standardized field data.
pub fn assemble(
    ens: &OssEnsemble,
    field_std: &FieldDataset,
    j: usize,
    target: OssTarget,
    basis: Option<&PcBasis>,
    bias: Option<KernelHyper>,
) -> Result<KohAssembly> {
    let field_y = field_coordinate(ens, field_std, j, target, basis)?;
    let mut fits = Vec::with_capacity(ens.sites.len());
    for m in &ens.sites {
        fits.push(ens.fit(m.site_index, j, target)?.clone());
    }
    let ids: Vec<usize> = ens.sites.iter().map(|m| m.site_index).collect();
    let x = field_std.x.select_rows(ids.iter());
    KohAssembly::new(j, ids, fits, x, field_y, bias)
}

fn diagonal_log_density(cov: &DMatrix<f64>, r: &DVector<f64>) -> f64 {
    let mut total = 0.0;
    for i in 0..r.len() {
        let v = cov[(i, i)];
        total += -0.5 * r[i] * r[i] / v - 0.5 * v.ln() - 0.5 * LN_2PI;
    }
    total
}

/// Maximum-likelihood bias GP on the observed discrepancies at u. The
/// fitted nugget absorbs the field noise.
pub fn fit_bias_hypers(asm: &KohAssembly, u: &[f64], cfg: &GpConfig) -> Result<GpFit> {
    let d = asm.observed_discrepancy(u)?;
    gp::fit_hypers(&asm.field_x, &d, cfg)
}

/// The full joint covariance of (y^M, y^F) at u, sites stacked in block
/// order followed by the field values. Meant for small instances and tests.
pub fn dense_joint_cov(asm: &KohAssembly, u: &[f64]) -> Result<DMatrix<f64>> {
    asm.check_u(u)?;
    let nm: usize = asm.fits.iter().map(GpFit::len).sum();
    let nf = asm.len();
    let mut s = DMatrix::zeros(nm + nf, nm + nf);
    let mut offset = 0;
    let up = DMatrix::from_row_slice(1, u.len(), u);
    for (i, fit) in asm.fits.iter().enumerate() {
        let n = fit.len();
        let block = kernel::cov_matrix(fit.inputs(), fit.hyper())?;
        s.view_mut((offset, offset), (n, n)).copy_from(&block);
        let cross = kernel::cross_cov(&up, fit.inputs(), fit.hyper())?;
        for a in 0..n {
            s[(nm + i, offset + a)] = cross[(0, a)];
            s[(offset + a, nm + i)] = cross[(0, a)];
        }
        s[(nm + i, nm + i)] = fit.hyper().point_variance();
        offset += n;
    }
    for a in 0..nf {
        for b in 0..nf {
            s[(nm + a, nm + b)] += asm.bias_cov[(a, b)];
        }
    }
    Ok(s)
}

/// Stacked (y^M, y^F) in the order used by [`dense_joint_cov`].
pub fn dense_joint_data(asm: &KohAssembly) -> DVector<f64> {
    let mut v: Vec<f64> = asm.fits.iter().flat_map(|f| f.targets().iter().copied()).collect();
    v.extend(asm.field_y.iter());
    DVector::from_vec(v)
}
