//! Zero-mean Gaussian-process regression: likelihood, gradient,
//! hyperparameter estimation and kriging prediction.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{self, KernelHyper, NUGGET_FLOOR};
use crate::linalg::{self, Chol};
use crate::optim::{self, Bounds, MinimizeOptions};

/// Smallest scale the profiled estimate may take. Keeps the likelihood finite
/// for targets that are identically zero.
pub const SCALE_FLOOR: f64 = 1e-10;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A GP conditioned on training data, with its covariance factorized.
#[derive(Clone, Debug)]
pub struct GpFit {
    inputs: DMatrix<f64>,
    targets: DVector<f64>,
    hyper: KernelHyper,
    chol: Chol,
    alpha: DVector<f64>,
    log_det: f64,
}

impl GpFit {
    /// Factorizes cov_matrix(inputs, hyper) and solves for the weights.
    pub fn new(inputs: DMatrix<f64>, targets: DVector<f64>, hyper: KernelHyper) -> Result<Self> {
        if inputs.nrows() != targets.len() {
            return Err(Error::dim(format!(
                "{} input rows but {} targets",
                inputs.nrows(),
                targets.len()
            )));
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("GP targets".into()));
        }
        let k = kernel::cov_matrix(&inputs, &hyper)?;
        let chol = linalg::cholesky(k, "GP covariance (try a larger nugget)")?;
        let alpha = chol.solve(&targets);
        let log_det = linalg::chol_log_det(&chol);
        Ok(GpFit {
            inputs,
            targets,
            hyper,
            chol,
            alpha,
            log_det,
        })
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn hyper(&self) -> &KernelHyper {
        &self.hyper
    }

    pub fn chol(&self) -> &Chol {
        &self.chol
    }

    /// K⁻¹ y.
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn log_likelihood(&self) -> f64 {
        let n = self.len() as f64;
        -0.5 * self.targets.dot(&self.alpha) - 0.5 * self.log_det - 0.5 * n * LN_2PI
    }

    /// Predictive mean and latent variance (no nugget) at one point. The
    /// caller supplies scratch buffers so the hot loops do not allocate.
    pub fn predict_point_with(&self, point: &[f64], kbuf: &mut Vec<f64>, vbuf: &mut Vec<f64>) -> (f64, f64) {
        kernel::cross_cov_point_into(point, &self.inputs, &self.hyper, kbuf);
        let mean = kbuf.iter().zip(self.alpha.iter()).map(|(k, a)| k * a).sum();
        let reduction = linalg::inv_quad_form(&self.chol, kbuf, vbuf);
        (mean, (self.hyper.scale - reduction).max(0.0))
    }

    pub fn predict_point(&self, point: &[f64]) -> (f64, f64) {
        self.predict_point_with(point, &mut Vec::new(), &mut Vec::new())
    }
}

/// −½ yᵀK⁻¹y − ½ log|K| − (n/2) log 2π.
pub fn log_marginal_likelihood(inputs: &DMatrix<f64>, targets: &DVector<f64>, hyper: &KernelHyper) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::arg("likelihood needs at least one observation"));
    }
    Ok(GpFit::new(inputs.clone(), targets.clone(), hyper.clone())?.log_likelihood())
}

/// Gradient of the negative log marginal likelihood with respect to
/// (log scale, log lengthscales…, log nugget).
pub fn nll_gradient(inputs: &DMatrix<f64>, targets: &DVector<f64>, hyper: &KernelHyper) -> Result<DVector<f64>> {
    let fit = GpFit::new(inputs.clone(), targets.clone(), hyper.clone())?;
    let n = fit.len();
    let p = hyper.dim();
    let kinv = linalg::chol_inverse(&fit.chol);
    let alpha = &fit.alpha;
    let sq = kernel::sq_dist_by_dim(inputs);

    let mut grad = DVector::zeros(p + 2);
    // d/d log τ²: dK = K.
    grad[0] = -0.5 * targets.dot(alpha) + 0.5 * n as f64;
    for (l, theta) in hyper.lengthscales.iter().enumerate() {
        let mut acc = 0.0;
        for b in 0..n {
            for a in 0..n {
                if a == b {
                    continue;
                }
                let kab = hyper.scale * unit_corr(&sq, hyper, a, b);
                let dk = kab * sq[l][(a, b)] / theta;
                acc += (kinv[(a, b)] - alpha[a] * alpha[b]) * dk;
            }
        }
        grad[1 + l] = 0.5 * acc;
    }
    let dn = hyper.scale * hyper.nugget;
    grad[p + 1] = 0.5 * dn * (kinv.trace() - alpha.dot(alpha));
    Ok(grad)
}

fn unit_corr(sq: &[DMatrix<f64>], hyper: &KernelHyper, a: usize, b: usize) -> f64 {
    let d: f64 = sq
        .iter()
        .zip(&hyper.lengthscales)
        .map(|(m, t)| m[(a, b)] / t)
        .sum();
    (-d).exp()
}

/// Settings for [`fit_hypers`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    pub multistarts: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Bounds on log θ.
    pub log_lengthscale_bounds: (f64, f64),
    /// Bounds on log η.
    pub log_nugget_bounds: (f64, f64),
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            multistarts: 3,
            max_iters: 200,
            grad_tol: 1e-6,
            log_lengthscale_bounds: (1e-3f64.ln(), 1e3f64.ln()),
            log_nugget_bounds: (NUGGET_FLOOR.ln(), 1e1f64.ln()),
            seed: 0,
        }
    }
}

impl GpConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        GpConfig { seed, ..self.clone() }
    }

    fn bounds(&self, p: usize) -> Bounds {
        let mut lower = vec![self.log_lengthscale_bounds.0; p];
        let mut upper = vec![self.log_lengthscale_bounds.1; p];
        lower.push(self.log_nugget_bounds.0.max(NUGGET_FLOOR.ln()));
        upper.push(self.log_nugget_bounds.1);
        Bounds { lower, upper }
    }
}

/// Profiled negative log likelihood over ψ = (log θ, log η), with the scale
/// replaced by its closed-form maximizer τ̂² = yᵀR⁻¹y / n.
struct ProfileObjective<'a> {
    sq: Vec<DMatrix<f64>>,
    targets: &'a DVector<f64>,
}

impl ProfileObjective<'_> {
    /// Returns (nll, gradient, τ̂²).
    fn eval(&self, psi: &DVector<f64>) -> Option<(f64, DVector<f64>, f64)> {
        let p = self.sq.len();
        let n = self.targets.len();
        let inv_theta: Vec<f64> = (0..p).map(|l| (-psi[l]).exp()).collect();
        let nugget = psi[p].exp();

        // Lower triangle column by column; the loops run over contiguous
        // column slices.
        let mut r = DMatrix::zeros(n, n);
        let mut d = vec![0.0; n];
        for b in 0..n {
            d[b + 1..].fill(0.0);
            for (m, it) in self.sq.iter().zip(&inv_theta) {
                let col = &m.as_slice()[b * n..(b + 1) * n];
                for (da, sa) in d[b + 1..].iter_mut().zip(&col[b + 1..]) {
                    *da += sa * it;
                }
            }
            let rcol = &mut r.as_mut_slice()[b * n..(b + 1) * n];
            rcol[b] = 1.0 + nugget;
            for (ra, da) in rcol[b + 1..].iter_mut().zip(&d[b + 1..]) {
                *ra = (-da).exp();
            }
        }
        linalg::symmetrize_from_lower(&mut r);
        let chol = r.clone().cholesky()?;
        let beta = chol.solve(self.targets);
        let q = self.targets.dot(&beta);
        let scale = (q / n as f64).max(SCALE_FLOOR);
        let log_det = linalg::chol_log_det(&chol);
        let nll = 0.5 * q / scale + 0.5 * n as f64 * scale.ln() + 0.5 * log_det + 0.5 * n as f64 * LN_2PI;

        // ∂nll/∂log θ_l = ½ Σ_{a≠b} (R⁻¹ − ββᵀ/τ̂²)_ab R_ab S_l,ab / θ_l, summed
        // here over the strict lower triangle and doubled.
        let rinv = linalg::chol_inverse(&chol);
        let mut grad = DVector::zeros(p + 1);
        let mut w = vec![0.0; n];
        for b in 0..n {
            let rinv_col = &rinv.as_slice()[b * n..(b + 1) * n];
            let r_col = &r.as_slice()[b * n..(b + 1) * n];
            let bb = beta[b] / scale;
            for a in (b + 1)..n {
                w[a] = (rinv_col[a] - beta[a] * bb) * r_col[a];
            }
            for (l, m) in self.sq.iter().enumerate() {
                let col = &m.as_slice()[b * n..(b + 1) * n];
                let s: f64 = w[b + 1..].iter().zip(&col[b + 1..]).map(|(x, y)| x * y).sum();
                grad[l] += s * inv_theta[l];
            }
        }
        grad[p] = 0.5 * nugget * (rinv.trace() - beta.dot(&beta) / scale);
        Some((nll, grad, scale))
    }
}

/// Maximum-likelihood hyperparameters by multistart projected BFGS in log
/// space, with the scale profiled out. Returns the best fit over all starts;
/// ties go to the lowest start index.
pub fn fit_hypers(inputs: &DMatrix<f64>, targets: &DVector<f64>, cfg: &GpConfig) -> Result<GpFit> {
    let n = targets.len();
    let p = inputs.ncols();
    if n < 3 {
        return Err(Error::arg(format!("fit_hypers needs at least 3 observations, got {n}")));
    }
    if inputs.nrows() != n {
        return Err(Error::dim(format!("{} input rows but {n} targets", inputs.nrows())));
    }
    if p == 0 {
        return Err(Error::dim("inputs have no columns"));
    }
    if inputs.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("fit_hypers data".into()));
    }
    if cfg.multistarts == 0 {
        return Err(Error::arg("multistarts must be at least 1"));
    }

    let objective = ProfileObjective {
        sq: kernel::sq_dist_by_dim(inputs),
        targets,
    };
    let bounds = cfg.bounds(p);
    let starts = start_points(cfg, p, &bounds);
    let opts = MinimizeOptions {
        max_iters: cfg.max_iters,
        grad_tol: cfg.grad_tol,
    };

    let results: Vec<Option<(f64, DVector<f64>)>> = starts
        .par_iter()
        .map(|x0| {
            let mut evals = 0usize;
            let m = optim::minimize(
                |psi| {
                    evals += 1;
                    objective.eval(psi).map(|(f, g, _)| (f, g))
                },
                x0,
                &bounds,
                &opts,
            )?;
            log::debug!(
                "gp fit n={n}: {} iterations, {evals} evaluations, converged={}",
                m.iterations,
                m.converged
            );
            Some((m.value, m.x))
        })
        .collect();

    let mut best: Option<(f64, DVector<f64>)> = None;
    for (value, x) in results.into_iter().flatten() {
        if best.as_ref().is_none_or(|(bv, _)| value < *bv) {
            best = Some((value, x));
        }
    }
    let (_, psi) = best.ok_or_else(|| {
        Error::NotPositiveDefinite("every multistart failed to factorize; raise the nugget floor".into())
    })?;
    let (_, _, scale) = objective.eval(&psi).expect("optimum was evaluable");
    let hyper = KernelHyper::new(scale, (0..p).map(|l| psi[l].exp()).collect(), psi[p].exp())?;
    GpFit::new(inputs.clone(), targets.clone(), hyper)
}

fn start_points(cfg: &GpConfig, p: usize, bounds: &Bounds) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts = Vec::with_capacity(cfg.multistarts);
    let mut first = vec![0.0; p];
    first.push(1e-3f64.ln());
    starts.push(first);
    for _ in 1..cfg.multistarts {
        let mut s: Vec<f64> = (0..p).map(|_| rng.random_range(0.05f64.ln()..5.0f64.ln())).collect();
        s.push(rng.random_range(1e-6f64.ln()..0.3f64.ln()));
        starts.push(s);
    }
    starts
        .into_iter()
        .map(|s| {
            let mut v = DVector::from_vec(s);
            bounds.project(&mut v);
            v
        })
        .collect()
}

/// Kriging mean and covariance at new inputs. The new-point diagonal carries
/// the nugget only when `include_nugget` is set.
pub fn predict(fit: &GpFit, xnew: &DMatrix<f64>, include_nugget: bool) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let h = &fit.hyper;
    let kx = kernel::cross_cov(xnew, &fit.inputs, h)?;
    let mean = &kx * &fit.alpha;
    let v = fit
        .chol
        .l()
        .solve_lower_triangular(&kx.transpose())
        .ok_or_else(|| Error::NotPositiveDefinite("GP factor".into()))?;
    let mut cov = kernel::cross_cov(xnew, xnew, h)? - v.transpose() * v;
    if include_nugget {
        for i in 0..cov.nrows() {
            cov[(i, i)] += h.scale * h.nugget;
        }
    }
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok((mean, cov))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_instance(seed: u64, n: usize, p: usize) -> (DMatrix<f64>, DVector<f64>, KernelHyper) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>());
        let y = DVector::from_fn(n, |_, _| rng.random_range(-1.5..1.5));
        let h = KernelHyper::new(
            rng.random_range(0.5..2.0),
            (0..p).map(|_| rng.random_range(0.1..1.0)).collect(),
            rng.random_range(0.01..0.2),
        )
        .unwrap();
        (x, y, h)
    }

    /// Dense MVN log density via explicit inverse and LU determinant.
    fn dense_oracle(x: &DMatrix<f64>, y: &DVector<f64>, h: &KernelHyper) -> f64 {
        let n = y.len();
        let k = DMatrix::from_fn(n, n, |a, b| {
            let d: f64 = (0..x.ncols()).map(|l| (x[(a, l)] - x[(b, l)]).powi(2) / h.lengthscales[l]).sum();
            h.scale * ((-d).exp() + if a == b { h.nugget } else { 0.0 })
        });
        let inv = k.clone().try_inverse().unwrap();
        let det = k.determinant();
        -0.5 * y.dot(&(inv * y)) - 0.5 * det.ln() - 0.5 * n as f64 * LN_2PI
    }

    #[test]
    fn single_observation_at_zero() {
        let x = DMatrix::from_row_slice(1, 1, &[0.3]);
        let y = DVector::from_vec(vec![0.0]);
        let h = KernelHyper::new(1.0 / (1.0 + 1e-9), vec![1.0], 1e-9).unwrap();
        let ll = log_marginal_likelihood(&x, &y, &h).unwrap();
        assert!((ll + 0.918_938_533_204_672_7).abs() < 1e-8);
    }

    #[test]
    fn two_point_closed_form() {
        // Huge lengthscale: K = [[s(1+η), s], [s, s(1+η)]].
        let (s, eta) = (1.3, 0.05);
        let x = DMatrix::from_row_slice(2, 1, &[0.1, 0.9]);
        let y = DVector::from_vec(vec![0.7, 0.7]);
        let h = KernelHyper::new(s, vec![1e12], eta).unwrap();
        let (a, b) = (s * (1.0 + eta), s);
        let det = a * a - b * b;
        // [y y] [[a,-b],[-b,a]] [y y]ᵀ / det
        let quad = (2.0 * a * 0.49 - 2.0 * b * 0.49) / det;
        let expected = -0.5 * quad - 0.5 * det.ln() - LN_2PI;
        let ll = log_marginal_likelihood(&x, &y, &h).unwrap();
        assert!((ll - expected).abs() < 1e-10, "{ll} vs {expected}");
    }

    #[test]
    fn likelihood_matches_dense_oracle() {
        for seed in 0..10 {
            let (x, y, h) = random_instance(seed, 15, 3);
            let ll = log_marginal_likelihood(&x, &y, &h).unwrap();
            let o = dense_oracle(&x, &y, &h);
            assert!(((ll - o) / o).abs() < 1e-9, "seed {seed}: {ll} vs {o}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let (x, y, h) = random_instance(100 + seed, 12, 2);
            let g = nll_gradient(&x, &y, &h).unwrap();
            let nll = |v: &[f64]| {
                let hh = KernelHyper::new(v[0].exp(), vec![v[1].exp(), v[2].exp()], v[3].exp()).unwrap();
                -log_marginal_likelihood(&x, &y, &hh).unwrap()
            };
            let base = [h.scale.ln(), h.lengthscales[0].ln(), h.lengthscales[1].ln(), h.nugget.ln()];
            for c in 0..4 {
                let mut up = base;
                let mut dn = base;
                up[c] += 1e-5;
                dn[c] -= 1e-5;
                let fd = (nll(&up) - nll(&dn)) / 2e-5;
                assert!((g[c] - fd).abs() <= 1e-4 * fd.abs().max(1e-3), "seed {seed} coord {c}: {} vs {fd}", g[c]);
            }
        }
    }

    #[test]
    fn profiled_scale_is_stationary() {
        let (x, y, _) = random_instance(7, 25, 2);
        let fit = fit_hypers(&x, &y, &GpConfig::default()).unwrap();
        let g = nll_gradient(&x, &y, fit.hyper()).unwrap();
        assert!(g[0].abs() < 1e-8, "{}", g[0]);
    }

    #[test]
    fn lengthscale_gradient_vanishes_at_infinity() {
        let (x, mut y, mut h) = random_instance(8, 10, 1);
        let mean = y.mean();
        y.add_scalar_mut(-mean);
        h.lengthscales = vec![1e6];
        let g = nll_gradient(&x, &y, &h).unwrap();
        assert!(g[1].abs() < 1e-4, "{}", g[1]);
    }

    #[test]
    fn scaling_targets_scales_only_the_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(30, 2, |_, _| rng.random::<f64>());
        let y = DVector::from_fn(30, |i, _| (3.0 * x[(i, 0)]).sin() + x[(i, 1)].powi(2));
        let cfg = GpConfig::default();
        let a = fit_hypers(&x, &y, &cfg).unwrap();
        let b = fit_hypers(&x, &(&y * 4.0), &cfg).unwrap();
        let (ha, hb) = (a.hyper(), b.hyper());
        assert!((hb.scale / ha.scale - 16.0).abs() < 1e-5 * 16.0);
        for (ta, tb) in ha.lengthscales.iter().zip(&hb.lengthscales) {
            assert!((ta.ln() - tb.ln()).abs() < 1e-5);
        }
        assert!((ha.nugget.ln() - hb.nugget.ln()).abs() < 1e-4);
    }

    #[test]
    fn fit_is_deterministic() {
        let (x, y, _) = random_instance(9, 20, 2);
        let cfg = GpConfig {
            multistarts: 1,
            seed: 42,
            ..GpConfig::default()
        };
        let a = fit_hypers(&x, &y, &cfg).unwrap();
        let b = fit_hypers(&x, &y, &cfg).unwrap();
        assert_eq!(a.hyper(), b.hyper());
    }

    #[test]
    fn fit_never_worse_than_start() {
        let (x, y, _) = random_instance(10, 20, 2);
        let cfg = GpConfig {
            multistarts: 1,
            ..GpConfig::default()
        };
        let fit = fit_hypers(&x, &y, &cfg).unwrap();
        // Start 0 is θ = 1, η = 1e-3 with the profiled scale.
        let sq = kernel::sq_dist_by_dim(&x);
        let obj = ProfileObjective { sq, targets: &y };
        let (start_nll, _, _) = obj.eval(&DVector::from_vec(vec![0.0, 0.0, 1e-3f64.ln()])).unwrap();
        assert!(-fit.log_likelihood() <= start_nll + 1e-9);
    }

    #[test]
    fn zero_targets_hit_scale_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(8, 2, |_, _| rng.random::<f64>());
        let y = DVector::zeros(8);
        let fit = fit_hypers(&x, &y, &GpConfig::default()).unwrap();
        assert!(fit.hyper().scale <= 1e-6);
        assert!(fit.log_likelihood().is_finite());
    }

    #[test]
    fn too_few_points_rejected() {
        let x = DMatrix::from_row_slice(2, 1, &[0.1, 0.2]);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        assert!(matches!(fit_hypers(&x, &y, &GpConfig::default()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn kriging_interpolates_with_small_nugget() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(12, 2, |_, _| rng.random::<f64>());
        let y = DVector::from_fn(12, |i, _| (4.0 * x[(i, 0)]).cos() * x[(i, 1)]);
        let h = KernelHyper::new(1.0, vec![0.3, 0.3], 1e-8).unwrap();
        let fit = GpFit::new(x.clone(), y.clone(), h).unwrap();
        let (mean, cov) = predict(&fit, &x, false).unwrap();
        for i in 0..12 {
            assert!((mean[i] - y[i]).abs() < 1e-5);
        }
        assert!(cov == cov.transpose());
    }

    #[test]
    fn far_points_revert_to_prior() {
        let (x, y, h) = random_instance(6, 10, 2);
        let fit = GpFit::new(x, y, h.clone()).unwrap();
        let far = DMatrix::from_row_slice(1, 2, &[40.0, -40.0]);
        let (mean, cov) = predict(&fit, &far, true).unwrap();
        assert!(mean[0].abs() < 1e-12);
        assert!((cov[(0, 0)] - h.point_variance()).abs() < 1e-12);
    }

    #[test]
    fn prediction_matches_dense_conditional() {
        let (x, y, h) = random_instance(12, 9, 2);
        let fit = GpFit::new(x.clone(), y.clone(), h.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let xn = DMatrix::from_fn(4, 2, |_, _| rng.random::<f64>());
        let (mean, cov) = predict(&fit, &xn, true).unwrap();

        // Joint covariance of [train; new] with nuggets on both diagonals.
        let all = DMatrix::from_fn(13, 2, |r, c| if r < 9 { x[(r, c)] } else { xn[(r - 9, c)] });
        let joint = kernel::cov_matrix(&all, &h).unwrap();
        let s11 = joint.view((0, 0), (9, 9)).clone_owned();
        let s21 = joint.view((9, 0), (4, 9)).clone_owned();
        let s22 = joint.view((9, 9), (4, 4)).clone_owned();
        let inv = s11.try_inverse().unwrap();
        let m_o = &s21 * &inv * &y;
        let c_o = s22 - &s21 * inv * s21.transpose();
        for i in 0..4 {
            assert!((mean[i] - m_o[i]).abs() < 1e-9);
            for j in 0..4 {
                assert!((cov[(i, j)] - c_o[(i, j)]).abs() < 1e-9);
            }
        }
        let eig = cov.symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&v| v >= -1e-10 * h.scale));
    }

    #[test]
    fn point_prediction_matches_matrix_form() {
        let (x, y, h) = random_instance(13, 11, 3);
        let fit = GpFit::new(x, y, h.clone()).unwrap();
        let u = [0.2, 0.6, 0.4];
        let (m, v) = fit.predict_point(&u);
        let (mm, cc) = predict(&fit, &DMatrix::from_row_slice(1, 3, &u), false).unwrap();
        assert!((m - mm[0]).abs() < 1e-12);
        assert!((v - cc[(0, 0)]).abs() < 1e-12);
    }
}
