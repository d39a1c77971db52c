//! BFGS with central finite-difference gradients and Armijo backtracking.
//!
//! The objective may return a non-finite value (for instance when a trial
//! point makes a covariance indefinite); the line search treats that as
//! "too far" and shrinks the step.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Hard cap on objective evaluations, gradients included.
    pub max_evals: usize,
    /// Stop when the sup-norm of the gradient falls below this.
    pub grad_tol: f64,
    /// Stop after a run of accepted steps that each improve `f` by less
    /// than this, relative.
    pub f_tol: f64,
    /// Relative finite-difference step: `h_i = fd_step · max(|x_i|, 1)`.
    pub fd_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions { max_iter: 500, max_evals: 200_000, grad_tol: 1e-7, f_tol: 1e-13, fd_step: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsReport {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub grad_norm: f64,
    /// False when a cap was hit before a stopping rule fired; `x` is still
    /// the best point seen.
    pub converged: bool,
}

struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }

    fn gradient(&mut self, x: &[f64], step: f64) -> DVector<f64> {
        let mut probe = x.to_vec();
        let mut g = DVector::zeros(x.len());
        for i in 0..x.len() {
            let h = step * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let up = self.eval(&probe);
            probe[i] = x[i] - h;
            let down = self.eval(&probe);
            probe[i] = x[i];
            g[i] = if up.is_finite() && down.is_finite() {
                (up - down) / (2.0 * h)
            } else {
                0.0
            };
        }
        g
    }
}

/// Consecutive negligible improvements before giving up.
const STALL_LIMIT: usize = 5;

/// Minimizes `f` from `x0`.
pub fn minimize<F: FnMut(&[f64]) -> f64>(f: F, x0: &[f64], opts: &BfgsOptions) -> BfgsReport {
    let n = x0.len();
    let mut obj = Counted { f, evals: 0 };
    let mut x = DVector::from_column_slice(x0);
    let mut fx = obj.eval(x.as_slice());
    let mut g = obj.gradient(x.as_slice(), opts.fd_step);
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut first_step = true;
    let mut iterations = 0;
    let mut converged = false;
    let mut stalled = 0;

    while iterations < opts.max_iter && obj.evals < opts.max_evals {
        if g.amax() <= opts.grad_tol {
            converged = true;
            break;
        }
        let mut dir = -(&hinv * &g);
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            hinv = DMatrix::identity(n, n);
            dir = -g.clone();
            slope = -g.norm_squared();
        }
        if first_step {
            // Unit-free first step: at most a unit move in the sup norm.
            let scale = 1.0 / dir.amax().max(1.0);
            dir *= scale;
            slope *= scale;
        }

        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-20 && obj.evals < opts.max_evals {
            let trial = &x + &dir * t;
            let ft = obj.eval(trial.as_slice());
            if ft <= fx + 1e-4 * t * slope {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        let Some((x_new, f_new)) = accepted else {
            // No descent along a quasi-Newton direction: fall back to the
            // gradient once, then give up.
            if hinv != DMatrix::identity(n, n) {
                hinv = DMatrix::identity(n, n);
                continue;
            }
            converged = g.amax() <= libm::sqrt(opts.grad_tol);
            break;
        };

        let g_new = obj.gradient(x_new.as_slice(), opts.fd_step);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let improvement = fx - f_new;
        x = x_new;
        g = g_new;
        fx = f_new;

        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if first_step {
                hinv *= sy / y.norm_squared();
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ, expanded.
            hinv += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
            first_step = false;
        }
        if improvement <= opts.f_tol * fx.abs().max(1.0) {
            stalled += 1;
            if stalled == STALL_LIMIT {
                converged = g.amax() <= libm::sqrt(opts.grad_tol);
                break;
            }
        } else {
            stalled = 0;
        }
    }
    if !converged && g.amax() <= opts.grad_tol {
        converged = true;
    }

    BfgsReport {
        x: x.as_slice().to_vec(),
        f: fx,
        iterations,
        evaluations: obj.evals,
        grad_norm: g.amax(),
        converged,
    }
}

/// Central-difference gradient, exposed for callers that report it.
pub fn numerical_gradient<F: FnMut(&[f64]) -> f64>(f: F, x: &[f64], fd_step: f64) -> Vec<f64> {
    let mut obj = Counted { f, evals: 0 };
    let g = obj.gradient(x, fd_step);
    let mut out = vec![0.0; x.len()];
    out.copy_from_slice(g.as_slice());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_minimum() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 10.0 * (x[1] + 1.0).powi(2) + x[0] * x[1];
        let r = minimize(f, &[0.0, 0.0], &BfgsOptions::default());
        // ∇ = 0: 2(x−3) + y = 0, 20(y+1) + x = 0.
        let y = -23.0 / 19.5;
        let x = 3.0 - y / 2.0;
        assert!(r.converged);
        assert!((r.x[0] - x).abs() < 1e-6 && (r.x[1] - y).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let r = minimize(f, &[-1.2, 1.0], &BfgsOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{r:?}");
    }

    #[test]
    fn non_finite_region_is_avoided() {
        let f = |x: &[f64]| if x[0] <= 0.0 { f64::NAN } else { x[0] - libm::log(x[0]) };
        let r = minimize(f, &[5.0], &BfgsOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-5, "{r:?}");
    }

    #[test]
    fn evaluation_cap_returns_best_point_unconverged() {
        let f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let opts = BfgsOptions { max_evals: 30, ..Default::default() };
        let start = f(&[-1.2, 1.0]);
        let r = minimize(f, &[-1.2, 1.0], &opts);
        assert!(!r.converged);
        assert!(r.f <= start);
    }

    #[test]
    fn gradient_matches_analytic() {
        let g = numerical_gradient(|x: &[f64]| x[0] * x[0] * x[1] + libm::exp(x[1]), &[1.5, 0.3], 1e-5);
        assert!((g[0] - 2.0 * 1.5 * 0.3).abs() < 1e-8);
        assert!((g[1] - (1.5 * 1.5 + libm::exp(0.3))).abs() < 1e-8);
    }
}
