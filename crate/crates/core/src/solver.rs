//! Centralized accelerated minimizer shared by the optimum oracle and the
//! D-constant estimator.
//!
//! This is the constant-momentum Nesterov scheme
//! `y = x + m (x − x_prev)`, `x⁺ = y − ∇f(y)/L` with
//! `m = (1 − √(μ/L)) / (1 + √(μ/L))`. A function-value restart zeroes the
//! momentum whenever the objective goes up, and a run that produces
//! non-finite values is retried once as plain gradient descent.

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy)]
pub struct MinimizeOptions {
    /// Gradient Lipschitz constant; the step is `1/lipschitz`.
    pub lipschitz: f64,
    /// Strong convexity modulus (or a floor standing in for it).
    pub mu: f64,
    /// Stop when `‖∇f(x)‖ ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// True when the accelerated run blew up and plain gradient descent was used.
    pub fell_back: bool,
}

pub fn nesterov_minimize<F, G>(f: F, grad: G, x0: &[f64], opts: MinimizeOptions) -> Result<MinimizeOutcome>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
{
    nesterov_minimize_accepting(f, grad, |_, _| true, x0, opts)
}

/// As [`nesterov_minimize`], but a point meeting the gradient tolerance is
/// only returned when `accept(x, ‖∇f(x)‖)` also holds.
pub fn nesterov_minimize_accepting<F, G, A>(f: F, grad: G, accept: A, x0: &[f64], opts: MinimizeOptions) -> Result<MinimizeOutcome>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
    A: Fn(&[f64], f64) -> bool,
{
    if !(opts.lipschitz > 0.0 && opts.lipschitz.is_finite()) {
        return Err(Error::argument(format!("lipschitz constant must be positive, got {}", opts.lipschitz)));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::argument(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let q = (opts.mu.max(0.0) / opts.lipschitz).min(1.0).sqrt();
    let momentum = (1.0 - q) / (1.0 + q);
    match run(&f, &grad, &accept, x0, opts, momentum) {
        Ok(out) => Ok(out),
        Err(RunFailure::Diverged) => run(&f, &grad, &accept, x0, opts, 0.0)
            .map(|mut out| {
                out.fell_back = true;
                out
            })
            .map_err(|e| match e {
                RunFailure::Diverged => Error::Diverged {
                    norm: f64::INFINITY,
                    limit: f64::MAX,
                    context: "centralized minimizer (gradient-descent fallback)".into(),
                },
                RunFailure::Budget(e) => e,
            }),
        Err(RunFailure::Budget(e)) => Err(e),
    }
}

enum RunFailure {
    Diverged,
    Budget(Error),
}

fn run<F, G, A>(
    f: &F,
    grad: &G,
    accept: &A,
    x0: &[f64],
    opts: MinimizeOptions,
    momentum: f64,
) -> std::result::Result<MinimizeOutcome, RunFailure>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
    A: Fn(&[f64], f64) -> bool,
{
    let dim = x0.len();
    let step = 1.0 / opts.lipschitz;
    let mut x = x0.to_vec();
    let mut x_prev = x.clone();
    let mut y = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    let mut fx = f(&x);
    if !fx.is_finite() {
        return Err(RunFailure::Diverged);
    }
    let mut best = (fx, x.clone(), f64::INFINITY);

    for iter in 0..=opts.max_iter {
        grad(&x, &mut g);
        let gn = linalg::norm(&g);
        if !gn.is_finite() {
            return Err(RunFailure::Diverged);
        }
        if fx <= best.0 {
            best = (fx, x.clone(), gn);
        }
        if gn <= opts.tol && accept(&x, gn) {
            return Ok(MinimizeOutcome {
                x,
                value: fx,
                grad_norm: gn,
                iterations: iter,
                fell_back: false,
            });
        }
        if iter == opts.max_iter {
            break;
        }
        for i in 0..dim {
            y[i] = x[i] + momentum * (x[i] - x_prev[i]);
        }
        grad(&y, &mut g);
        let mut next = y.clone();
        linalg::axpy(-step, &g, &mut next);
        let f_next = f(&next);
        if !f_next.is_finite() || !linalg::all_finite(&next) {
            return Err(RunFailure::Diverged);
        }
        if f_next > fx {
            // restart: drop the momentum and take a plain gradient step from x
            grad(&x, &mut g);
            next.copy_from_slice(&x);
            linalg::axpy(-step, &g, &mut next);
            let f_plain = f(&next);
            if !f_plain.is_finite() {
                return Err(RunFailure::Diverged);
            }
            x_prev.copy_from_slice(&next);
            x.copy_from_slice(&next);
            fx = f_plain;
        } else {
            x_prev = std::mem::replace(&mut x, next);
            fx = f_next;
        }
    }
    Err(RunFailure::Budget(Error::BudgetExhausted {
        iterations: opts.max_iter,
        grad_norm: best.2,
        best_value: best.0,
        best_point: best.1,
    }))
}
