//! Separable squared-exponential covariance with a multiplicative scale and
//! a nugget.
//!
//! For inputs `a`, `b` the kernel is
//!
//! ```text
//! k(a, b) = scale * [ exp(-Σ_l (a_l - b_l)² / θ_l) + δ_ab * nugget ]
//! ```
//!
//! where `δ_ab` is one only on the diagonal of a matrix built from a single
//! point set. Cross-covariances between two point sets never carry the
//! nugget, even when rows coincide numerically.
//!
//! The nugget is added outside the exponential. Written literally with the
//! nugget inside the braces of the exponent the term would scale the
//! diagonal multiplicatively by `exp(nugget)` instead; the additive form is
//! the conventional one and is what every other module assumes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::symmetrize_from_lower;

/// Lower bound on the nugget used by every optimizer in the crate.
pub const NUGGET_FLOOR: f64 = 1e-8;

/// Kernel hyperparameters: scale τ², per-dimension lengthscales θ and nugget η
/// (a fraction of the scale).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelHyper {
    pub scale: f64,
    pub lengthscales: Vec<f64>,
    pub nugget: f64,
}

impl KernelHyper {
    pub fn new(scale: f64, lengthscales: Vec<f64>, nugget: f64) -> Result<Self> {
        let h = KernelHyper {
            scale,
            lengthscales,
            nugget,
        };
        h.validate()?;
        Ok(h)
    }

    /// Same lengthscale in every dimension.
    pub fn isotropic(scale: f64, lengthscale: f64, nugget: f64, dim: usize) -> Result<Self> {
        Self::new(scale, vec![lengthscale; dim], nugget)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.scale) {
            return Err(Error::InvalidHyper(format!("scale {} must be positive", self.scale)));
        }
        if !ok(self.nugget) {
            return Err(Error::InvalidHyper(format!("nugget {} must be positive", self.nugget)));
        }
        if self.lengthscales.is_empty() {
            return Err(Error::InvalidHyper("no lengthscales".into()));
        }
        if let Some(bad) = self.lengthscales.iter().find(|&&t| !ok(t)) {
            return Err(Error::InvalidHyper(format!("lengthscale {bad} must be positive")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// scale · nugget, the noise variance implied by the fit.
    pub fn noise_variance(&self) -> f64 {
        self.scale * self.nugget
    }

    /// Prior variance at a single point, nugget included.
    pub fn point_variance(&self) -> f64 {
        self.scale * (1.0 + self.nugget)
    }

    fn check_inputs(&self, x: &DMatrix<f64>, name: &str) -> Result<()> {
        if x.ncols() != self.dim() {
            return Err(Error::dim(format!(
                "{name} has {} columns but the kernel has {} lengthscales",
                x.ncols(),
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(name.to_string()));
        }
        Ok(())
    }
}

/// Unit-scale correlation exp(-Σ d²/θ) between row `a` of `x` and row `b` of `x2`.
#[inline]
fn corr_entry(x: &DMatrix<f64>, a: usize, x2: &DMatrix<f64>, b: usize, lengthscales: &[f64]) -> f64 {
    let mut d = 0.0;
    for (l, theta) in lengthscales.iter().enumerate() {
        let diff = x[(a, l)] - x2[(b, l)];
        d += diff * diff / theta;
    }
    (-d).exp()
}

/// Correlation matrix exp(-Σ d²/θ) + nugget·I without the scale factor.
pub(crate) fn unit_cov(x: &DMatrix<f64>, lengthscales: &[f64], nugget: f64) -> DMatrix<f64> {
    let n = x.nrows();
    let mut k = DMatrix::zeros(n, n);
    for b in 0..n {
        k[(b, b)] = 1.0 + nugget;
        for a in (b + 1)..n {
            k[(a, b)] = corr_entry(x, a, x, b, lengthscales);
        }
    }
    symmetrize_from_lower(&mut k);
    k
}

/// Covariance matrix of one point set, nugget on the diagonal.
pub fn cov_matrix(x: &DMatrix<f64>, hyper: &KernelHyper) -> Result<DMatrix<f64>> {
    hyper.validate()?;
    hyper.check_inputs(x, "X")?;
    if x.nrows() == 0 {
        return Err(Error::arg("cov_matrix needs at least one point"));
    }
    let mut k = unit_cov(x, &hyper.lengthscales, hyper.nugget);
    k *= hyper.scale;
    Ok(k)
}

/// Cross-covariance between two point sets; never includes the nugget.
pub fn cross_cov(x: &DMatrix<f64>, x2: &DMatrix<f64>, hyper: &KernelHyper) -> Result<DMatrix<f64>> {
    hyper.validate()?;
    hyper.check_inputs(x, "X")?;
    hyper.check_inputs(x2, "X2")?;
    let mut k = DMatrix::zeros(x.nrows(), x2.nrows());
    for b in 0..x2.nrows() {
        for a in 0..x.nrows() {
            k[(a, b)] = hyper.scale * corr_entry(x, a, x2, b, &hyper.lengthscales);
        }
    }
    Ok(k)
}

/// Covariance between a single point and every row of `x`, written into
/// `out`. Hot path for the calibration likelihood; inputs are assumed valid.
pub fn cross_cov_point_into(point: &[f64], x: &DMatrix<f64>, hyper: &KernelHyper, out: &mut Vec<f64>) {
    let n = x.nrows();
    out.clear();
    out.resize(n, 0.0);
    let data = x.as_slice();
    for (l, theta) in hyper.lengthscales.iter().enumerate() {
        let col = &data[l * n..(l + 1) * n];
        let ul = point[l];
        let inv = 1.0 / theta;
        for (acc, xv) in out.iter_mut().zip(col) {
            let diff = ul - xv;
            *acc += diff * diff * inv;
        }
    }
    for v in out.iter_mut() {
        *v = hyper.scale * (-*v).exp();
    }
}

/// Vector form of [`cross_cov_point_into`].
pub fn cross_cov_point(point: &[f64], x: &DMatrix<f64>, hyper: &KernelHyper) -> Result<DVector<f64>> {
    hyper.validate()?;
    hyper.check_inputs(x, "X")?;
    if point.len() != hyper.dim() {
        return Err(Error::dim(format!(
            "point has {} coordinates, kernel has {}",
            point.len(),
            hyper.dim()
        )));
    }
    if point.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("point".into()));
    }
    let mut out = Vec::new();
    cross_cov_point_into(point, x, hyper, &mut out);
    Ok(DVector::from_vec(out))
}

/// Squared-distance matrices per input dimension, used by the likelihood
/// gradient: entry (a, b) of element l is (x_al - x_bl)².
pub(crate) fn sq_dist_by_dim(x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let n = x.nrows();
    (0..x.ncols())
        .map(|l| {
            DMatrix::from_fn(n, n, |a, b| {
                let d = x[(a, l)] - x[(b, l)];
                d * d
            })
        })
        .collect()
}
