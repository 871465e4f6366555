use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design;
use crate::error::{Error, Result};

/// Settings for [`optimize_map`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapOptions {
    pub multistarts: usize,
    pub seed: u64,
    pub initial_step: f64,
    /// Search stops once every coordinate step is below this.
    pub min_step: f64,
    pub max_evals: usize,
}

impl Default for MapOptions {
    fn default() -> Self {
        MapOptions {
            multistarts: 10,
            seed: 0,
            initial_step: 0.1,
            min_step: 1e-4,
            max_evals: 5000,
        }
    }
}

/// Where one start ended up.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapStart {
    pub start: usize,
    pub u: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapResult {
    pub u: Vec<f64>,
    pub value: f64,
    pub trace: Vec<MapStart>,
}

impl MapResult {
    pub fn median_iterations(&self) -> f64 {
        let mut its: Vec<usize> = self.trace.iter().map(|s| s.iterations).collect();
        its.sort_unstable();
        let n = its.len();
        if n % 2 == 1 {
            its[n / 2] as f64
        } else {
            (its[n / 2 - 1] + its[n / 2]) as f64 / 2.0
        }
    }
}

const EDGE: f64 = 1e-6;

/// Coordinate pattern search for a maximum inside the open unit cube. Each
/// coordinate keeps its own step, doubled after a successful move and halved
/// after a failed one.
fn pattern_search<F: Fn(&[f64]) -> f64>(f: &F, start: Vec<f64>, opts: &MapOptions) -> (Vec<f64>, f64, usize) {
    let p = start.len();
    let mut x = start;
    let mut fx = f(&x);
    let mut evals = 1;
    let mut steps = vec![opts.initial_step; p];
    let mut sweeps = 0;
    while steps.iter().any(|&s| s >= opts.min_step) && evals < opts.max_evals {
        sweeps += 1;
        for l in 0..p {
            if steps[l] < opts.min_step {
                continue;
            }
            let mut moved = false;
            for dir in [1.0, -1.0] {
                let mut cand = x.clone();
                cand[l] = (x[l] + dir * steps[l]).clamp(EDGE, 1.0 - EDGE);
                if cand[l] == x[l] {
                    continue;
                }
                let fc = f(&cand);
                evals += 1;
                if fc > fx {
                    x = cand;
                    fx = fc;
                    moved = true;
                    break;
                }
            }
            steps[l] = if moved { (steps[l] * 2.0).min(0.5) } else { steps[l] * 0.5 };
        }
    }
    (x, fx, sweeps)
}

/// Multistart maximization from a Latin hypercube of starting points. The
/// best start wins; ties go to the lowest start index.
pub fn optimize_map<F>(objective: F, dim: usize, opts: &MapOptions) -> Result<MapResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if opts.multistarts == 0 {
        return Err(Error::arg("multistarts must be at least 1"));
    }
    if dim == 0 {
        return Err(Error::arg("calibration dimension must be positive"));
    }
    let starts = design::lhs(opts.multistarts, dim, opts.seed)?;
    let trace: Vec<MapStart> = (0..opts.multistarts)
        .into_par_iter()
        .map(|s| {
            let x0: Vec<f64> = starts.points.row(s).iter().map(|v| v.clamp(EDGE, 1.0 - EDGE)).collect();
            let (u, value, iterations) = pattern_search(&objective, x0, opts);
            MapStart {
                start: s,
                u,
                value,
                iterations,
            }
        })
        .collect();
    let mut best = 0;
    for (s, t) in trace.iter().enumerate() {
        if t.value > trace[best].value || (trace[best].value.is_nan() && !t.value.is_nan()) {
            best = s;
        }
    }
    Ok(MapResult {
        u: trace[best].u.clone(),
        value: trace[best].value,
        trace,
    })
}
