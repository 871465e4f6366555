use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Settings for [`mcmc`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcOptions {
    /// Samples kept after burn-in.
    pub samples: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub initial_sd: f64,
    /// Proposal scales are adapted every this many burn-in sweeps.
    pub adapt_every: usize,
    pub target_acceptance: f64,
}

impl Default for McmcOptions {
    fn default() -> Self {
        McmcOptions {
            samples: 20_000,
            burn_in: 2_000,
            seed: 0,
            initial_sd: 0.05,
            adapt_every: 50,
            target_acceptance: 0.35,
        }
    }
}

/// Post-burn-in draws of u.
#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    pub samples: DMatrix<f64>,
    pub log_post: DVector<f64>,
    /// Per-coordinate acceptance over the kept sweeps.
    pub acceptance: Vec<f64>,
    pub proposal_sd: Vec<f64>,
    pub burn_in: usize,
    pub seed: u64,
}

/// Marginal summary of one coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordSummary {
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

impl CoordSummary {
    pub fn width90(&self) -> f64 {
        self.q95 - self.q05
    }

    pub fn covers(&self, v: f64) -> bool {
        self.q05 <= v && v <= self.q95
    }
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Chain {
    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    pub fn sample(&self, t: usize) -> Vec<f64> {
        self.samples.row(t).iter().copied().collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        (0..self.dim()).map(|l| self.samples.column(l).mean()).collect()
    }

    pub fn summary(&self) -> Vec<CoordSummary> {
        (0..self.dim())
            .map(|l| {
                let mut v: Vec<f64> = self.samples.column(l).iter().copied().collect();
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
                v.sort_by(f64::total_cmp);
                CoordSummary {
                    mean,
                    sd: var.sqrt(),
                    q05: quantile(&v, 0.05),
                    q50: quantile(&v, 0.5),
                    q95: quantile(&v, 0.95),
                }
            })
            .collect()
    }

    /// Every `step`-th sample, at most `max` of them, as a new chain.
    pub fn thinned(&self, max: usize) -> Chain {
        let n = self.len();
        let step = n.div_ceil(max.max(1)).max(1);
        let idx: Vec<usize> = (0..n).step_by(step).collect();
        Chain {
            samples: self.samples.select_rows(idx.iter()),
            log_post: DVector::from_iterator(idx.len(), idx.iter().map(|&t| self.log_post[t])),
            ..self.clone()
        }
    }
}

/// Metropolis-within-Gibbs with a Gaussian random walk per coordinate. One
/// sample is recorded per full sweep. Proposals leaving the open unit cube
/// are rejected outright. During burn-in the log proposal scales follow a
/// Robbins–Monro update toward the target acceptance; they are frozen
/// afterwards.
pub fn mcmc<F>(mut log_post: F, init: &[f64], opts: &McmcOptions) -> Result<Chain>
where
    F: FnMut(&[f64]) -> f64,
{
    let p = init.len();
    if p == 0 {
        return Err(Error::arg("empty initial point"));
    }
    if init.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::arg("initial point must lie strictly inside the unit cube"));
    }
    if opts.samples == 0 || opts.adapt_every == 0 {
        return Err(Error::arg("samples and adapt_every must be positive"));
    }
    let mut x = init.to_vec();
    let mut lp = log_post(&x);
    if !lp.is_finite() {
        return Err(Error::NonFinite(format!("log posterior at the initial point {init:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut log_sd = vec![opts.initial_sd.ln(); p];
    let mut window_accepts = vec![0usize; p];
    let mut kept_accepts = vec![0usize; p];
    let mut samples = DMatrix::zeros(opts.samples, p);
    let mut trace = DVector::zeros(opts.samples);
    let total = opts.burn_in + opts.samples;

    for it in 0..total {
        for l in 0..p {
            let z: f64 = rng.sample(StandardNormal);
            let proposal = x[l] + log_sd[l].exp() * z;
            let accept_draw: f64 = rng.random();
            if !(proposal > 0.0 && proposal < 1.0) {
                continue;
            }
            let old = x[l];
            x[l] = proposal;
            let lp_new = log_post(&x);
            if lp_new.is_finite() && accept_draw.ln() < lp_new - lp {
                lp = lp_new;
                if it < opts.burn_in {
                    window_accepts[l] += 1;
                } else {
                    kept_accepts[l] += 1;
                }
            } else {
                x[l] = old;
            }
        }
        if it < opts.burn_in && (it + 1) % opts.adapt_every == 0 {
            let round = ((it + 1) / opts.adapt_every) as f64;
            let gain = 1.0 / round.sqrt();
            for l in 0..p {
                let rate = window_accepts[l] as f64 / opts.adapt_every as f64;
                log_sd[l] = (log_sd[l] + gain * (rate - opts.target_acceptance) * 2.0).clamp(1e-5f64.ln(), 0.0);
                window_accepts[l] = 0;
            }
        }
        if it >= opts.burn_in {
            let t = it - opts.burn_in;
            for l in 0..p {
                samples[(t, l)] = x[l];
            }
            trace[t] = lp;
        }
    }
    Ok(Chain {
        samples,
        log_post: trace,
        acceptance: kept_accepts.iter().map(|&a| a as f64 / opts.samples as f64).collect(),
        proposal_sd: log_sd.iter().map(|v| v.exp()).collect(),
        burn_in: opts.burn_in,
        seed: opts.seed,
    })
}
