//! Calibration of the shared parameter u: modular MAP objectives with a
//! nested bias-GP maximization, pattern-search MAP estimation, and
//! Metropolis-within-Gibbs posterior sampling.

mod map;
mod mcmc;

pub use map::{optimize_map, MapOptions, MapResult, MapStart};
pub use mcmc::{mcmc, Chain, CoordSummary, McmcOptions};

use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};
use crate::gp::GpConfig;
use crate::koh::{self, KohAssembly};
use crate::linalg::{mix_seed, seed_from_point};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriorKind {
    Beta,
    Uniform,
}

/// Independent per-coordinate prior on the open unit cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub kind: PriorKind,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl Prior {
    pub fn beta(dim: usize, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(Error::arg(format!("Beta prior needs positive shapes, got ({alpha}, {beta})")));
        }
        Ok(Prior {
            kind: PriorKind::Beta,
            alpha: vec![alpha; dim],
            beta: vec![beta; dim],
        })
    }

    pub fn uniform(dim: usize) -> Self {
        Prior {
            kind: PriorKind::Uniform,
            alpha: vec![1.0; dim],
            beta: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// Log density; −∞ off the open unit cube.
    pub fn log_density(&self, u: &[f64]) -> f64 {
        if u.len() != self.dim() || u.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return f64::NEG_INFINITY;
        }
        match self.kind {
            PriorKind::Uniform => 0.0,
            PriorKind::Beta => u
                .iter()
                .zip(self.alpha.iter().zip(&self.beta))
                .map(|(&x, (&a, &b))| (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta(a, b))
                .sum(),
        }
    }
}

/// Inner-fit seed for property `asm.property` at u, so the profiled
/// objective is a fixed function of u.
fn inner_seed(seed: u64, u: &[f64], property: usize) -> u64 {
    mix_seed(seed_from_point(seed, u), property as u64)
}

/// max over bias hyperparameters of the bias-GP log likelihood of the
/// observed discrepancies at u; −∞ when the inner fit fails.
pub fn profiled_bias_loglik(asm: &KohAssembly, u: &[f64], gp: &GpConfig) -> f64 {
    let cfg = gp.with_seed(inner_seed(gp.seed, u, asm.property));
    match koh::fit_bias_hypers(asm, u, &cfg) {
        Ok(fit) => fit.log_likelihood(),
        Err(e) => {
            log::warn!("bias fit failed for property {} at {u:?}: {e}", asm.property);
            f64::NEG_INFINITY
        }
    }
}

/// log p(u) + max_φ log p_b(φ | discrepancies of one property at u).
pub fn modular_objective(u: &[f64], asm: &KohAssembly, prior: &Prior, gp: &GpConfig) -> f64 {
    let lp = prior.log_density(u);
    if !lp.is_finite() {
        return f64::NEG_INFINITY;
    }
    lp + profiled_bias_loglik(asm, u, gp)
}

/// log p(u) + Σ_j max_φ log p_b(φ | discrepancies of property j at u).
pub fn joint_modular_objective(u: &[f64], assemblies: &[KohAssembly], prior: &Prior, gp: &GpConfig) -> f64 {
    let lp = prior.log_density(u);
    if !lp.is_finite() {
        return f64::NEG_INFINITY;
    }
    lp + assemblies.iter().map(|a| profiled_bias_loglik(a, u, gp)).sum::<f64>()
}

/// log p(u) + Σ_j log-likelihood of property j with fixed bias
/// hyperparameters.
pub fn joint_log_posterior(u: &[f64], assemblies: &[KohAssembly], prior: &Prior) -> f64 {
    let lp = prior.log_density(u);
    if !lp.is_finite() {
        return f64::NEG_INFINITY;
    }
    let mut total = lp;
    for asm in assemblies {
        match asm.loglik(u) {
            Ok(v) => total += v,
            Err(e) => {
                log::warn!("likelihood failed for property {} at {u:?}: {e}", asm.property);
                return f64::NEG_INFINITY;
            }
        }
    }
    total
}
