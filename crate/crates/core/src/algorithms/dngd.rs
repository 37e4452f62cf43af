use serde::Serialize;

use super::{check_dims, check_iterate, extrapolate, round_scalars, IterState};
use crate::error::{Error, Result};
use crate::flow::{theta_beta, theta_beta_grad};
use crate::linalg;
use crate::netgraph::{Graph, LaplacianSpectrum};
use crate::objectives::{Problem, LOGISTIC_MU_FLOOR, ORACLE_MAX_ITER};
use crate::solver::{nesterov_minimize, MinimizeOptions};

/// β values over which the D constant's supremum is approximated.
pub const DEFAULT_BETA_GRID: [f64; 5] = [1e-3, 1e-2, 1e-1, 1.0, 10.0];

/// Gradient tolerance for the `Θ_β` minimizers and per-agent minimizers.
pub const THETA_TOLERANCE: f64 = 1e-10;

/// `m = (2α√η − α²η) / (2α√η + α²η)`.
pub fn dngd_sc_momentum(eta: f64, alpha: f64) -> f64 {
    let a = alpha * eta.sqrt();
    (2.0 * a - a * a) / (2.0 * a + a * a)
}

/// `ỹ = x̃ + m(x̃ − x̃_prev)`, `x̃⁺ = ỹ − ηℒỹ − ηβG(ỹ)`.
pub fn dngd_sc_step(s: &IterState, g: &Graph, p: &Problem, eta: f64, alpha: f64, beta: f64) -> Result<IterState> {
    let d = check_dims(s, g, p)?;
    let m = dngd_sc_momentum(eta, alpha);
    let y = extrapolate(&s.x, &s.x_prev, m);
    let mut grad = vec![0.0; y.len()];
    p.stacked_grad_into(&y, &mut grad)?;
    let mut next = y.clone();
    g.mix_into(&y, d, -eta, &mut next);
    linalg::axpy(-eta * beta, &grad, &mut next);
    check_iterate(&next, d, "dngd_sc")?;
    let y_next = extrapolate(&next, &s.x, m);
    Ok(IterState {
        k: s.k + 1,
        x: next,
        x_prev: s.x.clone(),
        y: y_next,
        tracker: None,
        comm_scalars: s.comm_scalars + round_scalars(g, d),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DngdScParams {
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
    /// True when the consistent-case `β = λ₂n/μ` was used.
    pub consistent: bool,
}

/// Prescribed step, friction and gradient gain.
///
/// Biased regime: `β = ελ₂/(2D)`. Consistent problems: `β = λ₂n/μ`.
/// Both use `η = 1/(λₙ + β√n L)` and `α = 2√min{λ₂, βμ/n}`.
pub fn dngd_sc_params(
    spectrum: &LaplacianSpectrum,
    p: &Problem,
    epsilon: f64,
    d_constant: Option<f64>,
) -> Result<DngdScParams> {
    let mu = p
        .strong_convexity()
        .ok_or_else(|| Error::contract("DNGD-SC parameters need a strongly convex objective"))?;
    let n = p.n() as f64;
    let (l2, ln) = spectrum.extremes();
    let beta = if p.is_consistent() {
        l2 * n / mu
    } else {
        if !(epsilon > 0.0) {
            return Err(Error::argument(format!("ε must be positive, got {epsilon}")));
        }
        match d_constant {
            Some(dc) if dc > 0.0 && dc.is_finite() => epsilon * l2 / (2.0 * dc),
            other => {
                return Err(Error::contract(format!(
                    "biased regime needs a positive D constant, got {other:?}"
                )))
            }
        }
    };
    let eta = 1.0 / (ln + beta * n.sqrt() * p.lipschitz());
    let alpha = 2.0 * l2.min(beta * mu / n).sqrt();
    Ok(DngdScParams { eta, alpha, beta, consistent: p.is_consistent() })
}

/// Per-step factor `1 − √(min{λ₂, βμ/n} / (β√n L + λₙ))`.
pub fn dngd_sc_contraction(spectrum: &LaplacianSpectrum, p: &Problem, beta: f64) -> Result<f64> {
    let mu = p
        .strong_convexity()
        .ok_or_else(|| Error::contract("contraction factor needs a strongly convex objective"))?;
    let n = p.n() as f64;
    let num = spectrum.lambda2.min(beta * mu / n);
    Ok(1.0 - (num / (beta * n.sqrt() * p.lipschitz() + spectrum.lambda_n)).sqrt())
}

/// Iteration count after which the biased DNGD-SC iterates are ε-accurate:
/// `⌈ln(ε/2B) / ln(1 − √(min{2D, εμ} / (ε√n L + 2Dλₙ/λ₂)))⌉`.
pub fn k0_bound(spectrum: &LaplacianSpectrum, p: &Problem, epsilon: f64, b_constant: f64, d_constant: f64) -> Result<u64> {
    let mu = p
        .strong_convexity()
        .ok_or_else(|| Error::contract("k₀ needs a strongly convex objective"))?;
    if !(epsilon > 0.0) {
        return Err(Error::argument(format!("ε must be positive, got {epsilon}")));
    }
    if epsilon >= 2.0 * b_constant {
        return Ok(0);
    }
    if !(d_constant > 0.0) {
        return Err(Error::contract(format!("k₀ needs D > 0, got {d_constant}")));
    }
    let (l2, ln) = spectrum.extremes();
    k0_formula(p.n() as f64, p.lipschitz(), mu, l2, ln, epsilon, b_constant, d_constant)
}

#[allow(clippy::too_many_arguments)]
fn k0_formula(n: f64, l: f64, mu: f64, l2: f64, ln: f64, epsilon: f64, b_constant: f64, d_constant: f64) -> Result<u64> {
    let q = (2.0 * d_constant).min(epsilon * mu) / (epsilon * n.sqrt() * l + 2.0 * d_constant * ln / l2);
    if q >= 1.0 {
        return Err(Error::contract(format!(
            "square-root argument {q} is at least 1; parameters are outside the theorem's regime"
        )));
    }
    let k = (epsilon / (2.0 * b_constant)).ln() / (1.0 - q.sqrt()).ln();
    Ok(k.ceil() as u64)
}

/// `D = 2nL² max_β ‖X̃*_nc − X̃*_β‖²` over `beta_grid`.
///
/// `X̃*_nc` stacks the per-agent minimizers; `X̃*_β` minimizes `Θ_β` to
/// gradient norm [`THETA_TOLERANCE`], warm-started at `X̃*_nc`.
pub fn estimate_d_constant(g: &Graph, p: &Problem, beta_grid: &[f64]) -> Result<f64> {
    if beta_grid.is_empty() {
        return Err(Error::argument("β grid is empty"));
    }
    if let Some(b) = beta_grid.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
        return Err(Error::argument(format!("β grid entries must be positive, got {b}")));
    }
    if g.n() != p.n() {
        return Err(Error::argument("graph and problem disagree on n"));
    }
    let x_nc: Vec<f64> = (0..p.n())
        .map(|i| p.local_minimizer(i, THETA_TOLERANCE))
        .collect::<Result<Vec<_>>>()?
        .concat();
    let spectrum = g.spectrum()?;
    let n = p.n() as f64;
    let mu = p.strong_convexity().unwrap_or(LOGISTIC_MU_FLOOR * p.sum_lipschitz());
    let mut worst: f64 = 0.0;
    for &beta in beta_grid {
        let opts = MinimizeOptions {
            lipschitz: spectrum.lambda_n + beta * p.lipschitz(),
            mu: spectrum.lambda2.min(beta * mu / n),
            tol: THETA_TOLERANCE,
            max_iter: ORACLE_MAX_ITER,
        };
        let out = nesterov_minimize(
            |x| theta_beta(g, p, x, beta).unwrap_or(f64::INFINITY),
            |x, out| match theta_beta_grad(g, p, x, beta) {
                Ok(v) => out.copy_from_slice(&v),
                Err(_) => out.fill(f64::NAN),
            },
            &x_nc,
            opts,
        )?;
        worst = worst.max(linalg::dist_sq(&x_nc, &out.x));
    }
    Ok(2.0 * n * p.lipschitz().powi(2) * worst)
}

/// `ỹ = x̃ + ((k−1)/(k+1))(x̃ − x̃_prev)`, `x̃⁺ = ỹ − ηℒỹ − (√η/(k+1))G(ỹ)`.
pub fn dngd_c_step(s: &IterState, g: &Graph, p: &Problem, eta: f64) -> Result<IterState> {
    let d = check_dims(s, g, p)?;
    let k = s.k as f64;
    let y = extrapolate(&s.x, &s.x_prev, (k - 1.0) / (k + 1.0));
    let mut grad = vec![0.0; y.len()];
    p.stacked_grad_into(&y, &mut grad)?;
    let mut next = y.clone();
    g.mix_into(&y, d, -eta, &mut next);
    linalg::axpy(-eta.sqrt() / (k + 1.0), &grad, &mut next);
    check_iterate(&next, d, "dngd_c")?;
    let y_next = extrapolate(&next, &s.x, k / (k + 2.0));
    Ok(IterState {
        k: s.k + 1,
        x: next,
        x_prev: s.x.clone(),
        y: y_next,
        tracker: None,
        comm_scalars: s.comm_scalars + round_scalars(g, d),
    })
}

/// `((√(L² + 4λₙ) − L)/(2λₙ))²`, evaluated as `(2/(√(L² + 4λₙ) + L))²`
/// to avoid cancellation for small `λₙ`.
pub fn dngd_c_stepsize_raw(lipschitz: f64, lambda_n: f64) -> f64 {
    let root = (lipschitz * lipschitz + 4.0 * lambda_n).sqrt();
    (2.0 / (root + lipschitz)).powi(2)
}

pub fn dngd_c_stepsize(spectrum: &LaplacianSpectrum, p: &Problem) -> f64 {
    dngd_c_stepsize_raw(p.lipschitz(), spectrum.lambda_n)
}

/// `(2B² + B√(4B² + 2λ₂S))/(k√η λ₂) + S/(k√η)` with `S = Σ_i‖x_{i,0} − x*‖²`.
pub fn dngd_c_bound(k: f64, eta: f64, lambda2: f64, b: f64, dist0_sq: f64) -> f64 {
    let lead = 2.0 * b * b + b * (4.0 * b * b + 2.0 * lambda2 * dist0_sq).sqrt();
    let scale = k * eta.sqrt();
    lead / (scale * lambda2) + dist0_sq / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{build_graph, Topology};
    use crate::objectives::{least_squares, least_squares_consistent};

    #[test]
    fn k0_printed_example() {
        assert_eq!(k0_formula(1.0, 1.0, 1.0, 1.0, 1.0, 0.01, 1.0, 1.0).unwrap(), 73);
        let g = build_graph(Topology::Path { n: 2 }, 1.0).unwrap();
        let sp = g.spectrum().unwrap();
        let p = least_squares(vec![vec![vec![1.0]], vec![vec![1.0]]], vec![vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(k0_bound(&sp, &p, 2.0, 1.0, 1.0).unwrap(), 0);
        assert!(matches!(k0_bound(&sp, &p, 0.01, 1.0, 0.0), Err(Error::Contract(_))));
    }

    #[test]
    fn k0_grows_like_sqrt_kappa() {
        let base = k0_formula(4.0, 1.0, 1.0, 1.0, 4.0, 1e-4, 1.0, 10.0).unwrap() as f64;
        let wide = k0_formula(4.0, 1.0, 1.0, 1.0, 16.0, 1e-4, 1.0, 10.0).unwrap() as f64;
        assert!((wide / base - 2.0).abs() < 0.05, "ratio {}", wide / base);
    }

    #[test]
    fn stepsize_identities() {
        let eta = dngd_c_stepsize_raw(3.0, 4.0);
        assert!((eta - 1.0 / 16.0).abs() < 1e-15);
        assert!((eta * 4.0 + eta.sqrt() * 3.0 - 1.0).abs() < 1e-15);
        assert!((dngd_c_stepsize_raw(0.0, 4.0) - 0.25).abs() < 1e-15);
        assert!((dngd_c_stepsize_raw(2.0, 1e-8) - 0.25).abs() < 1e-8);
    }

    #[test]
    fn consistent_params_ring4() {
        // ring(4): λ₂ = 2, λₙ = 4. Build a consistent problem and read off L, μ.
        let g = build_graph(Topology::Ring { n: 4 }, 1.0).unwrap();
        let sp = g.spectrum().unwrap();
        let h = vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]; 4];
        let p = least_squares_consistent(h, vec![1.0, -1.0]).unwrap();
        let mu = p.strong_convexity().unwrap();
        let params = dngd_sc_params(&sp, &p, 0.1, None).unwrap();
        assert!((params.beta - 2.0 * 4.0 / mu).abs() < 1e-12);
        assert!((params.alpha - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!((params.eta - 1.0 / (4.0 + params.beta * 2.0 * p.lipschitz())).abs() < 1e-15);
    }

    #[test]
    fn momentum_small_step_matches_centralized() {
        let mu: f64 = 2.0;
        let eta = 1e-6;
        let m = dngd_sc_momentum(eta, 2.0 * mu.sqrt());
        let centralized = (1.0 - (mu * eta).sqrt()) / (1.0 + (mu * eta).sqrt());
        assert!((m - centralized).abs() < 10.0 * eta);
    }

    #[test]
    fn d_constant_vanishes_when_consistent() {
        let g = build_graph(Topology::Ring { n: 4 }, 1.0).unwrap();
        let h = vec![vec![vec![1.0, 0.5], vec![0.0, 1.0]]; 4];
        let p = least_squares_consistent(h, vec![0.3, -0.2]).unwrap();
        assert!(estimate_d_constant(&g, &p, &DEFAULT_BETA_GRID).unwrap() < 1e-15);
        assert!(estimate_d_constant(&g, &p, &[]).is_err());
    }
}
