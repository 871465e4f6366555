//! Space-filling designs over the unit cube.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    Lhs,
    MaximinLhs,
    UniformRandom,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    /// n × p, every coordinate in [0, 1).
    pub points: DMatrix<f64>,
    pub kind: DesignKind,
    pub seed: u64,
}

impl Design {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn min_distance(&self) -> f64 {
        min_distance(&self.points)
    }
}

fn check_counts(n: usize, p: usize, min_n: usize) -> Result<()> {
    if n < min_n {
        return Err(Error::arg(format!("design needs at least {min_n} points, got {n}")));
    }
    if p < 1 {
        return Err(Error::arg("design dimension must be at least 1"));
    }
    Ok(())
}

fn random_lhs(n: usize, p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut points = DMatrix::zeros(n, p);
    let mut perm: Vec<usize> = (0..n).collect();
    for l in 0..p {
        perm.shuffle(rng);
        for (a, &cell) in perm.iter().enumerate() {
            // Uniform jitter within the stratum; clamp guards the rounding
            // case (n-1 + 1-ε)/n == 1.
            let v = (cell as f64 + rng.random::<f64>()) / n as f64;
            points[(a, l)] = v.min(1.0 - f64::EPSILON);
        }
    }
    points
}

/// Plain random Latin hypercube.
pub fn lhs(n: usize, p: usize, seed: u64) -> Result<Design> {
    check_counts(n, p, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Design {
        points: random_lhs(n, p, &mut rng),
        kind: DesignKind::Lhs,
        seed,
    })
}

/// Independent uniform points, for comparison with the stratified designs.
pub fn uniform_random(n: usize, p: usize, seed: u64) -> Result<Design> {
    check_counts(n, p, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Design {
        points: DMatrix::from_fn(n, p, |_, _| rng.random::<f64>()),
        kind: DesignKind::UniformRandom,
        seed,
    })
}

/// Smallest Euclidean distance between any two rows.
pub fn min_distance(points: &DMatrix<f64>) -> f64 {
    let n = points.nrows();
    let mut best = f64::INFINITY;
    for a in 0..n {
        for b in (a + 1)..n {
            best = best.min(sq_dist(points, a, b));
        }
    }
    best.sqrt()
}

fn sq_dist(points: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    (0..points.ncols()).map(|l| (points[(a, l)] - points[(b, l)]).powi(2)).sum()
}

/// Maximin search state: squared distances plus each row's nearest neighbour.
struct Maximin {
    points: DMatrix<f64>,
    dist: DMatrix<f64>,
    nn: Vec<(f64, usize)>,
}

impl Maximin {
    fn new(points: DMatrix<f64>) -> Self {
        let n = points.nrows();
        let mut dist = DMatrix::from_element(n, n, f64::INFINITY);
        for a in 0..n {
            for b in (a + 1)..n {
                let d = sq_dist(&points, a, b);
                dist[(a, b)] = d;
                dist[(b, a)] = d;
            }
        }
        let mut s = Maximin {
            points,
            dist,
            nn: vec![(f64::INFINITY, 0); n],
        };
        for r in 0..n {
            s.refresh_nn(r);
        }
        s
    }

    fn refresh_nn(&mut self, r: usize) {
        let col = self.dist.column(r);
        let mut best = (f64::INFINITY, r);
        for (s, &d) in col.iter().enumerate() {
            if d < best.0 {
                best = (d, s);
            }
        }
        self.nn[r] = best;
    }

    /// Current critical pair and its squared distance.
    fn critical(&self) -> (f64, usize, usize) {
        let (r, &(d, s)) = self
            .nn
            .iter()
            .enumerate()
            .min_by(|x, y| x.1 .0.total_cmp(&y.1 .0))
            .expect("non-empty design");
        (d, r, s)
    }

    /// Squared distances from row `r` to all rows if column `l` of rows
    /// `a` and `b` were exchanged.
    fn swapped_row_dists(&self, r: usize, a: usize, b: usize, l: usize, out: &mut Vec<f64>) {
        let n = self.points.nrows();
        let other = if r == a { b } else { a };
        let new_rl = self.points[(other, l)];
        out.clear();
        for s in 0..n {
            if s == r {
                out.push(f64::INFINITY);
                continue;
            }
            let s_l = if s == a || s == b {
                // s is the other swapped row: its column-l value moves too.
                self.points[(r, l)]
            } else {
                self.points[(s, l)]
            };
            let old = self.dist[(r, s)];
            let prev_s_l = self.points[(s, l)];
            let d = old - (self.points[(r, l)] - prev_s_l).powi(2) + (new_rl - s_l).powi(2);
            out.push(d.max(0.0));
        }
    }

    /// Tries exchanging column `l` between rows `a` and `b`; keeps the swap
    /// iff the minimum distance strictly increases.
    fn try_swap(&mut self, a: usize, b: usize, l: usize, buf_a: &mut Vec<f64>, buf_b: &mut Vec<f64>) -> bool {
        let (current, _, _) = self.critical();
        self.swapped_row_dists(a, a, b, l, buf_a);
        self.swapped_row_dists(b, a, b, l, buf_b);
        let new_ab = buf_a.iter().chain(buf_b.iter()).copied().fold(f64::INFINITY, f64::min);
        if new_ab <= current {
            return false;
        }
        // Minimum over pairs that avoid both a and b.
        let n = self.points.nrows();
        let mut rest = f64::INFINITY;
        for r in 0..n {
            if r == a || r == b {
                continue;
            }
            let (d, s) = self.nn[r];
            let d = if s == a || s == b {
                self.dist
                    .column(r)
                    .iter()
                    .enumerate()
                    .filter(|(t, _)| *t != a && *t != b)
                    .map(|(_, &v)| v)
                    .fold(f64::INFINITY, f64::min)
            } else {
                d
            };
            rest = rest.min(d);
            if rest <= current {
                return false;
            }
        }
        // Accept.
        let tmp = self.points[(a, l)];
        self.points[(a, l)] = self.points[(b, l)];
        self.points[(b, l)] = tmp;
        for s in 0..n {
            self.dist[(a, s)] = buf_a[s];
            self.dist[(s, a)] = buf_a[s];
            self.dist[(b, s)] = buf_b[s];
            self.dist[(s, b)] = buf_b[s];
        }
        for r in 0..n {
            if r == a || r == b || self.nn[r].1 == a || self.nn[r].1 == b {
                self.refresh_nn(r);
            } else {
                let d = self.dist[(r, a)].min(self.dist[(r, b)]);
                if d < self.nn[r].0 {
                    self.refresh_nn(r);
                }
            }
        }
        true
    }
}

/// Latin hypercube improved by critical-pair column swaps. Each sweep makes
/// `n` attempts; an attempt exchanges one column value between a row of the
/// closest pair and a random other row, and is kept only if the minimum
/// pairwise distance strictly increases. Column stratification is preserved.
pub fn maximin_lhs(n: usize, p: usize, sweeps: usize, seed: u64) -> Result<Design> {
    check_counts(n, p, 2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = random_lhs(n, p, &mut rng);
    let mut state = Maximin::new(start);
    let (mut buf_a, mut buf_b) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..sweeps {
        for attempt in 0..n {
            let (_, r, s) = state.critical();
            let a = if attempt % 2 == 0 { r } else { s };
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            let l = rng.random_range(0..p);
            state.try_swap(a, b, l, &mut buf_a, &mut buf_b);
        }
    }
    Ok(Design {
        points: state.points,
        kind: DesignKind::MaximinLhs,
        seed,
    })
}
