//! Synthetic multi-output simulator with a known true calibration parameter.
//!
//! Each output property `j` has a smooth base response `g_j(x, u)`; the `K`
//! frequencies of a property are scaled copies of it plus small
//! frequency-specific perturbations, which makes outputs strongly correlated
//! within a property and weakly correlated across properties. Each property
//! is driven mainly by two calibration coordinates (property 1 by u1 and u2,
//! property 2 by u2 and u3, and so on), so no single property pins down all
//! of `u` while the four together do.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{Error, Result};

/// Settings of the synthetic field/simulator pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub p_x: usize,
    pub p_u: usize,
    pub j_count: usize,
    pub k_count: usize,
    /// True calibration parameter, strictly inside the unit cube.
    pub u_star: Vec<f64>,
    /// Target within-property correlation across frequencies.
    pub freq_corr: f64,
    /// Field noise standard deviation per frequency, nonincreasing.
    pub noise_base: Vec<f64>,
    /// Simulation-run noise standard deviation per frequency.
    pub sim_noise: Vec<f64>,
    pub bias_amp: f64,
    pub missing_rate: f64,
    /// Spread of the per-frequency loadings; 0 makes all loadings 1.
    pub loading_spread: f64,
    /// Multiplier on the frequency-specific perturbations; 0 removes them.
    pub perturb_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            p_x: 2,
            p_u: 4,
            j_count: 4,
            k_count: 4,
            u_star: vec![0.35, 0.6, 0.45, 0.7],
            freq_corr: 0.95,
            noise_base: vec![0.05, 0.04, 0.035, 0.03],
            sim_noise: vec![0.0; 4],
            bias_amp: 0.3,
            missing_rate: 0.02,
            loading_spread: 1.0,
            perturb_scale: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.p_x == 0 || self.p_u == 0 {
            return bad("p_x and p_u must be positive".into());
        }
        if !(1..=4).contains(&self.j_count) {
            return bad(format!("j_count must be in 1..=4, got {}", self.j_count));
        }
        if self.k_count == 0 {
            return bad("k_count must be positive".into());
        }
        if self.u_star.len() != self.p_u {
            return bad(format!("u_star has {} entries, p_u is {}", self.u_star.len(), self.p_u));
        }
        if self.u_star.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return bad("u_star must lie strictly inside the unit cube".into());
        }
        if !(self.freq_corr > 0.0 && self.freq_corr < 1.0) {
            return bad(format!("freq_corr must be in (0, 1), got {}", self.freq_corr));
        }
        for (name, v) in [("noise_base", &self.noise_base), ("sim_noise", &self.sim_noise)] {
            if v.len() != self.k_count {
                return bad(format!("{name} has {} entries, k_count is {}", v.len(), self.k_count));
            }
            if v.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
                return bad(format!("{name} entries must be finite and nonnegative"));
            }
        }
        if self.noise_base.windows(2).any(|w| w[1] > w[0]) {
            return bad("noise_base must be nonincreasing in frequency".into());
        }
        if !(self.missing_rate >= 0.0 && self.missing_rate < 1.0) {
            return bad(format!("missing_rate must be in [0, 1), got {}", self.missing_rate));
        }
        if !(self.bias_amp >= 0.0 && self.loading_spread >= 0.0 && self.perturb_scale >= 0.0) {
            return bad("bias_amp, loading_spread and perturb_scale must be nonnegative".into());
        }
        Ok(())
    }

    pub fn outputs(&self) -> usize {
        self.j_count * self.k_count
    }
}

/// Column of output (j, k) in a site or field output matrix.
pub fn output_column(j: usize, k: usize, k_count: usize) -> usize {
    j * k_count + k
}

/// Simulation runs at one field site.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteDataset {
    pub site_index: usize,
    pub x: Vec<f64>,
    /// n_i × p_u design, including rows whose run failed.
    pub u: DMatrix<f64>,
    /// n_i × (J·K); rows flagged missing are NaN.
    pub y: DMatrix<f64>,
    pub missing: Vec<bool>,
}

impl SiteDataset {
    pub fn n_converged(&self) -> usize {
        self.missing.iter().filter(|m| !**m).count()
    }

    fn converged_index(&self) -> Vec<usize> {
        (0..self.missing.len()).filter(|&r| !self.missing[r]).collect()
    }

    /// Design rows of converged runs.
    pub fn converged_u(&self) -> DMatrix<f64> {
        self.u.select_rows(self.converged_index().iter())
    }

    /// Output rows of converged runs.
    pub fn converged_y(&self) -> DMatrix<f64> {
        self.y.select_rows(self.converged_index().iter())
    }

    /// Converged values of one output column.
    pub fn converged_column(&self, col: usize) -> DVector<f64> {
        let idx = self.converged_index();
        DVector::from_iterator(idx.len(), idx.iter().map(|&r| self.y[(r, col)]))
    }
}

/// Field observations: one row per site.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldDataset {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub replicate_counts: Option<Vec<usize>>,
}

impl FieldDataset {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn site_x(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }
}

const PROPERTY_LOADING: [f64; 4] = [0.4, -0.3, 0.5, -0.2];
const TARGET_CORR_MARGIN: f64 = 0.4;

/// The synthetic response surface with its derived constants.
#[derive(Clone, Debug)]
pub struct SynthModel {
    cfg: SynthConfig,
    /// Perturbation amplitude per (j, k).
    perturb_amp: Vec<f64>,
}

impl SynthModel {
    pub fn new(cfg: &SynthConfig) -> Result<Self> {
        cfg.validate()?;
        let mut model = SynthModel {
            cfg: cfg.clone(),
            perturb_amp: vec![0.0; cfg.outputs()],
        };
        model.perturb_amp = model.calibrate_perturbations();
        Ok(model)
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    /// Sizes the perturbations so that each frequency correlates with the
    /// others at roughly `freq_corr + margin·(1 - freq_corr)`, using the
    /// empirical variances over a fixed pseudo-random reference sample.
    fn calibrate_perturbations(&self) -> Vec<f64> {
        let c = &self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(0x05EE_D5EE);
        let sample: Vec<(Vec<f64>, Vec<f64>)> = (0..4096)
            .map(|_| {
                let x = (0..c.p_x).map(|_| rng.random::<f64>()).collect();
                let u = (0..c.p_u).map(|_| rng.random::<f64>()).collect();
                (x, u)
            })
            .collect();
        let rho = c.freq_corr + TARGET_CORR_MARGIN * (1.0 - c.freq_corr);
        let variance = |vals: &[f64]| {
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64
        };
        let mut amp = vec![0.0; c.outputs()];
        for j in 0..c.j_count {
            let g: Vec<f64> = sample.iter().map(|(x, u)| base_response(j, x, u)).collect();
            let vg = variance(&g);
            for k in 0..c.k_count {
                let h: Vec<f64> = sample.iter().map(|(x, u)| perturbation(j, k, x, u)).collect();
                let s = self.loading(j, k);
                amp[output_column(j, k, c.k_count)] =
                    c.perturb_scale * (vg * s * s * (1.0 - rho) / rho / variance(&h)).sqrt();
            }
        }
        amp
    }

    fn loading(&self, j: usize, k: usize) -> f64 {
        let kc = self.cfg.k_count;
        let pos = if kc > 1 { k as f64 / (kc - 1) as f64 - 0.5 } else { 0.0 };
        1.0 + self.cfg.loading_spread * PROPERTY_LOADING[j] * pos
    }

    fn check_point(&self, x: &[f64], u: &[f64]) -> Result<()> {
        if x.len() != self.cfg.p_x || u.len() != self.cfg.p_u {
            return Err(Error::dim(format!(
                "expected x of length {} and u of length {}",
                self.cfg.p_x, self.cfg.p_u
            )));
        }
        if x.iter().chain(u).any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::arg("simulator inputs must lie in the unit cube"));
        }
        Ok(())
    }

    /// J × K outputs at (x, u).
    pub fn eval(&self, x: &[f64], u: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(x, u)?;
        Ok(self.eval_unchecked(x, u))
    }

    fn eval_unchecked(&self, x: &[f64], u: &[f64]) -> DMatrix<f64> {
        let c = &self.cfg;
        DMatrix::from_fn(c.j_count, c.k_count, |j, k| {
            let g = base_response(j, x, u);
            let amp = self.perturb_amp[output_column(j, k, c.k_count)];
            let h = if amp > 0.0 { amp * perturbation(j, k, x, u) } else { 0.0 };
            g * self.loading(j, k) + h
        })
    }

    /// Field discrepancy b_jk(x); zero when `bias_amp` is zero.
    pub fn bias(&self, x: &[f64]) -> DMatrix<f64> {
        let c = &self.cfg;
        DMatrix::from_fn(c.j_count, c.k_count, |j, k| {
            if c.bias_amp == 0.0 {
                return 0.0;
            }
            let pos = if c.k_count > 1 { k as f64 / (c.k_count - 1) as f64 - 0.5 } else { 0.0 };
            c.bias_amp * (1.0 + 0.3 * pos * PROPERTY_LOADING[j].signum()) * bias_shape(j, x)
        })
    }

    /// Runs every design row at its site. Each row independently fails with
    /// probability `missing_rate`; failed rows are NaN in every output.
    pub fn run_campaign(&self, field_x: &DMatrix<f64>, designs: &[Design]) -> Result<Vec<SiteDataset>> {
        let c = &self.cfg;
        if designs.len() != field_x.nrows() {
            return Err(Error::dim(format!(
                "{} designs for {} field sites",
                designs.len(),
                field_x.nrows()
            )));
        }
        if field_x.ncols() != c.p_x {
            return Err(Error::dim(format!("field inputs have {} columns, p_x is {}", field_x.ncols(), c.p_x)));
        }
        designs
            .par_iter()
            .enumerate()
            .map(|(i, design)| {
                if design.dim() != c.p_u {
                    return Err(Error::dim(format!("design {i} has {} columns, p_u is {}", design.dim(), c.p_u)));
                }
                let x: Vec<f64> = field_x.row(i).iter().copied().collect();
                let mut rng = stream_rng(c.seed, SITE_STREAM + i as u64);
                let n = design.len();
                let mut y = DMatrix::from_element(n, c.outputs(), f64::NAN);
                let mut missing = vec![false; n];
                for (r, flag) in missing.iter_mut().enumerate() {
                    let u: Vec<f64> = design.points.row(r).iter().copied().collect();
                    let out = self.eval(&x, &u)?;
                    let failed = rng.random::<f64>() < c.missing_rate;
                    let noise: Vec<f64> = (0..c.outputs())
                        .map(|col| {
                            let sd = c.sim_noise[col % c.k_count];
                            if sd > 0.0 {
                                sd * rng.sample::<f64, _>(rand_distr::StandardNormal)
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    *flag = failed;
                    if !failed {
                        for j in 0..c.j_count {
                            for k in 0..c.k_count {
                                let col = output_column(j, k, c.k_count);
                                y[(r, col)] = out[(j, k)] + noise[col];
                            }
                        }
                    }
                }
                Ok(SiteDataset {
                    site_index: i,
                    x,
                    u: design.points.clone(),
                    y,
                    missing,
                })
            })
            .collect()
    }

    /// Field data y = simulator(x, u*) + bias(x) + ε with ε_jk ~ N(0, noise_base[k]²).
    pub fn gen_field(&self, field_x: &DMatrix<f64>) -> Result<FieldDataset> {
        let c = &self.cfg;
        if field_x.ncols() != c.p_x {
            return Err(Error::dim(format!("field inputs have {} columns, p_x is {}", field_x.ncols(), c.p_x)));
        }
        let mut rng = stream_rng(c.seed, FIELD_STREAM);
        let normals: Vec<Normal<f64>> = c
            .noise_base
            .iter()
            .map(|&sd| Normal::new(0.0, sd).expect("validated noise"))
            .collect();
        let mut y = DMatrix::zeros(field_x.nrows(), c.outputs());
        for i in 0..field_x.nrows() {
            let x: Vec<f64> = field_x.row(i).iter().copied().collect();
            let truth = self.eval(&x, &c.u_star)?;
            let bias = self.bias(&x);
            for j in 0..c.j_count {
                for k in 0..c.k_count {
                    let eps = if c.noise_base[k] > 0.0 { normals[k].sample(&mut rng) } else { 0.0 };
                    y[(i, output_column(j, k, c.k_count))] = truth[(j, k)] + bias[(j, k)] + eps;
                }
            }
        }
        Ok(FieldDataset {
            x: field_x.clone(),
            y,
            replicate_counts: None,
        })
    }
}

const FIELD_STREAM: u64 = 1;
const SITE_STREAM: u64 = 1000;

/// Independent stream of the run's single seeded generator.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One-off evaluation. Builds the model each call; use [`SynthModel`] in loops.
pub fn synth_model(x: &[f64], u: &[f64], cfg: &SynthConfig) -> Result<DMatrix<f64>> {
    SynthModel::new(cfg)?.eval(x, u)
}

fn coord(v: &[f64], l: usize, default: f64) -> f64 {
    v.get(l).copied().unwrap_or(default)
}

fn base_response(j: usize, x: &[f64], u: &[f64]) -> f64 {
    let xa = x[0];
    let xb = coord(x, 1, x[0]);
    let (u1, u2, u3, u4) = (coord(u, 0, 0.5), coord(u, 1, 0.5), coord(u, 2, 0.5), coord(u, 3, 0.5));
    let core = match j {
        0 => 1.2 * (2.6 * u1 + 1.5 * xa).sin() + (u2 - 0.5) * (0.6 + 1.2 * xb) + 0.15 * (u3 + u4) * xa,
        1 => 1.1 * (2.3 * u2 - 1.4 * xb + 0.4).cos() + (u3 - 0.5) * (1.6 - 1.2 * xa) + 0.15 * (u4 + u1) * xb,
        2 => {
            (2.8 * u3 + 1.1 * xa * xb + 0.9).sin()
                + 0.9 * (2.5 * (u4 - 0.45) + xa - 0.5).tanh()
                + 0.15 * (u1 + u2) * (1.0 - xb)
        }
        _ => 1.1 * (3.4 * u4 - 1.6 * xb + 1.0).sin() + (u1 - 0.5) * (0.5 + 0.8 * xa + 0.4 * xb) + 0.15 * (u2 + u3) * (1.0 - xa),
    };
    // Extra design inputs and calibration inputs beyond the fourth enter weakly.
    let extra_x: f64 = x.iter().skip(2).enumerate().map(|(l, v)| 0.2 * (2.0 * v + (j + l) as f64).sin()).sum();
    let extra_u: f64 = u
        .iter()
        .enumerate()
        .skip(4)
        .filter(|(l, _)| l % 4 == j)
        .map(|(_, v)| 0.3 * (v - 0.5))
        .sum();
    core + extra_x + extra_u
}

fn perturbation(j: usize, k: usize, x: &[f64], u: &[f64]) -> f64 {
    let (jf, kf) = (j as f64 + 1.0, k as f64);
    let proj_u: f64 = u
        .iter()
        .enumerate()
        .map(|(l, v)| v * (1.7 * jf * (l as f64 + 1.0) + 0.9 * kf).cos())
        .sum();
    let proj_x: f64 = x
        .iter()
        .enumerate()
        .map(|(l, v)| v * (1.3 * jf * (l as f64 + 2.0) + 0.6 * kf).sin())
        .sum();
    ((2.0 + 0.5 * kf) * (proj_u + proj_x) + 1.3 * (jf - 1.0) + 0.7 * kf).sin()
}

fn bias_shape(j: usize, x: &[f64]) -> f64 {
    let xa = x[0];
    let xb = coord(x, 1, x[0]);
    match j {
        0 => (2.2 * xa + 0.7).sin() + 0.5 * xb,
        1 => (2.5 * xb).cos() - 0.6 * xa,
        2 => 0.8 * (3.0 * xa * xb + 0.3).sin() + 0.4,
        _ => (1.8 * xa + 1.2 * xb).cos() - 0.3,
    }
}
