//! Principal-component basis of the field-minus-simulation discrepancies of
//! one output property across its frequencies.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::simulator::{output_column, FieldDataset, SiteDataset};

/// Standardization constants and eigenvectors of one property's discrepancy
/// correlation matrix. Column `c` of `w` is the `c`-th principal direction.
#[derive(Clone, Debug, PartialEq)]
pub struct PcBasis {
    pub property: usize,
    pub center: DVector<f64>,
    pub scale: DVector<f64>,
    pub w: DMatrix<f64>,
    pub var_fractions: DVector<f64>,
}

impl PcBasis {
    pub fn k(&self) -> usize {
        self.center.len()
    }

    /// First principal direction.
    pub fn first(&self) -> DVector<f64> {
        self.w.column(0).into_owned()
    }
}

/// Stacks y^F_i − y^M_i(u) over every converged simulation row, with the
/// field row of site i repeated once per converged row.
pub fn assemble_discrepancy(field: &FieldDataset, sites: &[SiteDataset], j: usize, k_count: usize) -> Result<DMatrix<f64>> {
    let outputs = field.y.ncols();
    if k_count == 0 || !outputs.is_multiple_of(k_count) || j >= outputs / k_count {
        return Err(Error::arg(format!("property {j} out of range for {outputs} outputs with K={k_count}")));
    }
    let rows: usize = sites.iter().map(|s| s.n_converged()).sum();
    let mut d = DMatrix::zeros(rows, k_count);
    let mut r = 0;
    for site in sites {
        if site.site_index >= field.len() {
            return Err(Error::dim(format!("site {} has no field row", site.site_index)));
        }
        if site.y.ncols() != outputs {
            return Err(Error::dim(format!("site {} has {} outputs, field has {outputs}", site.site_index, site.y.ncols())));
        }
        for (row, &missing) in site.missing.iter().enumerate() {
            if missing {
                continue;
            }
            for k in 0..k_count {
                let col = output_column(j, k, k_count);
                d[(r, k)] = field.y[(site.site_index, col)] - site.y[(row, col)];
            }
            r += 1;
        }
    }
    Ok(d)
}

/// PCA of the column-standardized matrix, i.e. eigendecomposition of its
/// correlation matrix. Eigenpairs are sorted by decreasing eigenvalue and
/// each eigenvector is signed so its largest-magnitude entry is positive.
pub fn fit_pc_basis(d: &DMatrix<f64>, property: usize) -> Result<PcBasis> {
    let (n, k) = d.shape();
    if n <= k {
        return Err(Error::arg(format!("PCA needs more rows than columns, got {n}×{k}")));
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("discrepancy matrix".into()));
    }
    let center = DVector::from_fn(k, |c, _| d.column(c).mean());
    let scale = DVector::from_fn(k, |c, _| {
        let m = center[c];
        (d.column(c).iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    });
    if let Some(c) = (0..k).find(|&c| !(scale[c] > 1e-12 * (1.0 + center[c].abs()))) {
        return Err(Error::arg(format!("discrepancy column {c} is constant")));
    }
    let z = standardize(d, &center, &scale);
    let mut corr = z.tr_mul(&z) / (n - 1) as f64;
    corr = (&corr + corr.transpose()) * 0.5;

    let eig = SymmetricEigen::new(corr);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut w = DMatrix::zeros(k, k);
    let mut values = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).into_owned();
        let lead = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if lead < 0.0 {
            v = -v;
        }
        w.set_column(dst, &v);
        values[dst] = eig.eigenvalues[src].max(0.0);
    }
    let total = values.sum();
    Ok(PcBasis {
        property,
        center,
        scale,
        w,
        var_fractions: values / total,
    })
}

fn standardize(y: &DMatrix<f64>, center: &DVector<f64>, scale: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(y.nrows(), y.ncols(), |r, c| (y[(r, c)] - center[c]) / scale[c])
}

/// ((Y − center) / scale) · W[:, ..components].
pub fn project(y: &DMatrix<f64>, basis: &PcBasis, components: usize) -> Result<DMatrix<f64>> {
    let k = basis.k();
    if y.ncols() != k {
        return Err(Error::dim(format!("projecting {} columns onto a basis of size {k}", y.ncols())));
    }
    if components == 0 || components > k {
        return Err(Error::arg(format!("components must be in 1..={k}, got {components}")));
    }
    Ok(standardize(y, &basis.center, &basis.scale) * basis.w.columns(0, components))
}

/// Z · Wᵀ · diag(scale) + center, the inverse of a full projection.
pub fn back_project(z: &DMatrix<f64>, basis: &PcBasis) -> Result<DMatrix<f64>> {
    let k = basis.k();
    if z.ncols() != k {
        return Err(Error::dim(format!("back-projection needs all {k} components, got {}", z.ncols())));
    }
    let s = z * basis.w.transpose();
    Ok(DMatrix::from_fn(s.nrows(), k, |r, c| s[(r, c)] * basis.scale[c] + basis.center[c]))
}
