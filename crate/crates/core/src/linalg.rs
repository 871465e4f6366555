//! Small dense linear-algebra helpers shared by the GP and KOH code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub type Chol = Cholesky<f64, Dyn>;

/// Cholesky factorization with a descriptive error on failure.
pub fn cholesky(m: DMatrix<f64>, what: &str) -> Result<Chol> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what.to_string()));
    }
    Cholesky::new(m).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// log|A| from the Cholesky factor of A.
pub fn chol_log_det(chol: &Chol) -> f64 {
    let l = chol.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Solves L v = b in place, where `l` holds the Cholesky factor in its lower
/// triangle (column-major, upper triangle ignored).
pub fn forward_solve_in_place(l: &DMatrix<f64>, v: &mut [f64]) {
    let n = l.nrows();
    debug_assert_eq!(v.len(), n);
    let data = l.as_slice();
    for j in 0..n {
        let col = &data[j * n..(j + 1) * n];
        let vj = v[j] / col[j];
        v[j] = vj;
        if vj != 0.0 {
            for (vi, lij) in v[j + 1..].iter_mut().zip(&col[j + 1..]) {
                *vi -= lij * vj;
            }
        }
    }
}

/// Squared norm of L⁻¹ b, i.e. bᵀ A⁻¹ b for A = L Lᵀ.
pub fn inv_quad_form(chol: &Chol, b: &[f64], scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend_from_slice(b);
    forward_solve_in_place(chol.l_dirty(), scratch);
    scratch.iter().map(|v| v * v).sum()
}

/// Lower-triangular factor stored column by column without the zero upper
/// part. Halves the memory traffic of repeated triangular solves.
#[derive(Clone, Debug, PartialEq)]
pub struct PackedLower {
    n: usize,
    data: Vec<f64>,
}

impl PackedLower {
    pub fn from_chol(chol: &Chol) -> Self {
        let l = chol.l_dirty();
        let n = l.nrows();
        let src = l.as_slice();
        let mut data = Vec::with_capacity(n * (n + 1) / 2);
        for j in 0..n {
            data.extend_from_slice(&src[j * n + j..(j + 1) * n]);
        }
        PackedLower { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// ‖L⁻¹ b‖², overwriting `v` (which must hold b on entry) with L⁻¹ b.
    pub fn inv_quad_form_in_place(&self, v: &mut [f64]) -> f64 {
        debug_assert_eq!(v.len(), self.n);
        let n = self.n;
        let mut off = 0;
        let mut total = 0.0;
        for j in 0..n {
            let col = &self.data[off..off + n - j];
            let vj = v[j] / col[0];
            v[j] = vj;
            total += vj * vj;
            if vj != 0.0 {
                for (vi, lij) in v[j + 1..].iter_mut().zip(&col[1..]) {
                    *vi -= lij * vj;
                }
            }
            off += n - j;
        }
        total
    }
}

/// A⁻¹ from the Cholesky factor of A, via L⁻¹ and a matrix product.
pub fn chol_inverse(chol: &Chol) -> DMatrix<f64> {
    let l = chol.l_dirty();
    let n = l.nrows();
    let data = l.as_slice();
    let mut linv = DMatrix::<f64>::zeros(n, n);
    let out = linv.as_mut_slice();
    for j in 0..n {
        let col = &mut out[j * n..(j + 1) * n];
        col[j] = 1.0;
        for c in j..n {
            let lc = &data[c * n..(c + 1) * n];
            let xc = col[c] / lc[c];
            col[c] = xc;
            if xc != 0.0 {
                for (xi, lic) in col[c + 1..].iter_mut().zip(&lc[c + 1..]) {
                    *xi -= lic * xc;
                }
            }
        }
    }
    linv.transpose() * &linv
}

/// Mirrors the lower triangle into the upper one so the result is exactly
/// symmetric.
pub fn symmetrize_from_lower(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            m[(j, i)] = m[(i, j)];
        }
    }
}

/// Zero-mean multivariate normal log density from a Cholesky factor.
pub fn mvn_log_density(chol: &Chol, y: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let mut scratch = Vec::with_capacity(y.len());
    let quad = inv_quad_form(chol, y.as_slice(), &mut scratch);
    -0.5 * quad - 0.5 * chol_log_det(chol) - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// Stateless 64-bit mixer used to derive sub-seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed derived from a real-valued point; identical points give identical seeds.
pub fn seed_from_point(seed: u64, point: &[f64]) -> u64 {
    point
        .iter()
        .fold(mix_seed(seed, point.len() as u64), |acc, v| mix_seed(acc, v.to_bits()))
}
