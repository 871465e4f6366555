//! Box-constrained quasi-Newton minimizer (projected BFGS with Armijo
//! backtracking). Used for every GP hyperparameter fit.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn project(&self, x: &mut DVector<f64>) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }
}

#[derive(Clone, Debug)]
pub struct MinimizeOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            max_iters: 200,
            grad_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Gradient with components zeroed where the bound is active and the
/// gradient points out of the box.
fn projected_gradient(x: &DVector<f64>, g: &DVector<f64>, bounds: &Bounds) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let at_lower = x[i] <= bounds.lower[i] && g[i] > 0.0;
        let at_upper = x[i] >= bounds.upper[i] && g[i] < 0.0;
        if at_lower || at_upper {
            0.0
        } else {
            g[i]
        }
    })
}

/// Minimizes `f` over the box. `f` returns `None` where it cannot be
/// evaluated (e.g. a failed factorization); such points are treated as
/// infinitely bad by the line search. Returns `None` if the start point
/// itself cannot be evaluated.
pub fn minimize<F>(mut f: F, x0: &DVector<f64>, bounds: &Bounds, opts: &MinimizeOptions) -> Option<Minimum>
where
    F: FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
{
    let n = x0.len();
    let mut x = x0.clone();
    bounds.project(&mut x);
    let (mut fx, mut g) = f(&x).filter(|(v, g)| v.is_finite() && g.iter().all(|c| c.is_finite()))?;

    let initial_scale = |g: &DVector<f64>| 1.0 / g.amax().max(1.0);
    let mut h = DMatrix::identity(n, n) * initial_scale(&g);
    let mut fresh = true;
    let mut stalls = 0;

    for iter in 0..opts.max_iters {
        let pg = projected_gradient(&x, &g, bounds);
        if pg.amax() < opts.grad_tol {
            return Some(Minimum {
                x,
                value: fx,
                iterations: iter,
                converged: true,
            });
        }

        let mut d = -(&h * &g);
        for i in 0..n {
            if pg[i] == 0.0 {
                d[i] = 0.0;
            }
        }
        if g.dot(&d) >= 0.0 {
            d = -&pg * initial_scale(&pg);
            h = DMatrix::identity(n, n) * initial_scale(&pg);
            fresh = true;
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..20 {
            let mut trial = &x + &d * step;
            bounds.project(&mut trial);
            let moved = &trial - &x;
            if moved.amax() == 0.0 {
                break;
            }
            if let Some((ft, gt)) = f(&trial) {
                if ft.is_finite() && gt.iter().all(|c| c.is_finite()) && ft <= fx + 1e-4 * g.dot(&moved) {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }

        let Some((xn, fnew, gn)) = accepted else {
            if fresh {
                return Some(Minimum {
                    x,
                    value: fx,
                    iterations: iter,
                    converged: false,
                });
            }
            h = DMatrix::identity(n, n) * initial_scale(&pg);
            fresh = true;
            continue;
        };

        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 {
            if fresh {
                // Shanno scaling of the initial inverse Hessian.
                h = DMatrix::identity(n, n) * (sy / y.dot(&y));
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
            fresh = false;
        }

        if (fx - fnew).abs() <= 1e-10 * (1.0 + fx.abs()) {
            stalls += 1;
        } else {
            stalls = 0;
        }
        x = xn;
        fx = fnew;
        g = gn;
        if stalls >= 2 {
            return Some(Minimum {
                x,
                value: fx,
                iterations: iter + 1,
                converged: true,
            });
        }
    }
    Some(Minimum {
        x,
        value: fx,
        iterations: opts.max_iters,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = DVector::from_vec(vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)]);
        Some((f, g))
    }

    #[test]
    fn finds_unconstrained_minimum() {
        let bounds = Bounds {
            lower: vec![-5.0, -5.0],
            upper: vec![5.0, 5.0],
        };
        let opts = MinimizeOptions {
            max_iters: 500,
            grad_tol: 1e-8,
        };
        let m = minimize(rosenbrock, &DVector::from_vec(vec![-1.2, 1.0]), &bounds, &opts).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-5, "{:?}", m);
        assert!((m.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn respects_active_bound() {
        let bounds = Bounds {
            lower: vec![-5.0, -5.0],
            upper: vec![0.5, 5.0],
        };
        let quad = |x: &DVector<f64>| {
            let f = (x[0] - 2.0).powi(2) + (x[1] + 1.0).powi(2);
            Some((f, DVector::from_vec(vec![2.0 * (x[0] - 2.0), 2.0 * (x[1] + 1.0)])))
        };
        let m = minimize(quad, &DVector::from_vec(vec![0.0, 0.0]), &bounds, &MinimizeOptions::default()).unwrap();
        assert_eq!(m.x[0], 0.5);
        assert!((m.x[1] + 1.0).abs() < 1e-6);
        assert!(m.converged);
    }

    #[test]
    fn unevaluable_start_is_none() {
        let bounds = Bounds {
            lower: vec![0.0],
            upper: vec![1.0],
        };
        let f = |_: &DVector<f64>| None;
        assert!(minimize(f, &DVector::from_vec(vec![0.5]), &bounds, &MinimizeOptions::default()).is_none());
    }
}
