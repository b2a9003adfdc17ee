//! Unconstrained quasi-Newton minimization with finite-difference gradients.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimOptions {
    pub max_iters: usize,
    /// Stop when the gradient's infinity norm falls below this.
    pub grad_tol: f64,
    /// Stop when an accepted step improves the objective by less than this
    /// (relative).
    pub f_tol: f64,
    /// Relative finite-difference step.
    pub fd_step: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions { max_iters: 200, grad_tol: 1e-6, f_tol: 1e-12, fd_step: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Objective after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

/// Central-difference gradient with step `h·max(1, |x_i|)`.
pub fn fd_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], h: f64, evals: &mut usize) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let step = h * x[i].abs().max(1.0);
            xp[i] = x[i] + step;
            let up = f(&xp);
            xp[i] = x[i] - step;
            let down = f(&xp);
            xp[i] = x[i];
            *evals += 2;
            (up - down) / (2.0 * step)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// BFGS with Armijo backtracking. Non-finite objective values are treated as
/// infeasible and shrink the step.
pub fn minimize<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &OptimOptions) -> OptimResult {
    let n = x0.len();
    let mut evals = 1;
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut trace = vec![fx];
    if n == 0 || !fx.is_finite() {
        return OptimResult { x, f: fx, iterations: 0, evaluations: evals, converged: n == 0, trace };
    }
    let mut g = fd_gradient(&mut f, &x, opts.fd_step, &mut evals);
    // inverse Hessian approximation, row-major
    let mut hinv = vec![0.0; n * n];
    for i in 0..n {
        hinv[i * n + i] = 1.0;
    }
    let mut converged = false;
    let mut iters = 0;
    while iters < opts.max_iters {
        if g.iter().all(|v| v.abs() < opts.grad_tol) {
            converged = true;
            break;
        }
        iters += 1;
        let mut d: Vec<f64> = (0..n).map(|i| -dot(&hinv[i * n..(i + 1) * n], &g)).collect();
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            // lost descent: restart from steepest descent
            for i in 0..n {
                for j in 0..n {
                    hinv[i * n + j] = if i == j { 1.0 } else { 0.0 };
                }
            }
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let fnew = f(&xn);
            evals += 1;
            if fnew.is_finite() && fnew <= fx + 1e-4 * t * slope {
                accepted = Some((xn, fnew));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            // no decrease along the search direction: a local optimum up to FD noise
            converged = g.iter().all(|v| v.abs() < opts.grad_tol.sqrt());
            break;
        };
        let gn = fd_gradient(&mut f, &xn, opts.fd_step, &mut evals);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            let hy: Vec<f64> = (0..n).map(|i| dot(&hinv[i * n..(i + 1) * n], &y)).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    hinv[i * n + j] += (1.0 + yhy / sy) * s[i] * s[j] / sy - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
        let improvement = fx - fnew;
        x = xn;
        g = gn;
        fx = fnew;
        trace.push(fx);
        if improvement <= opts.f_tol * fx.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    OptimResult { x, f: fx, iterations: iters, evaluations: evals, converged, trace }
}
