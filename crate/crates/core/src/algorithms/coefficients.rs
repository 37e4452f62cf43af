use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::CoefficientSchedule;

/// Relative gap between the last two extrapolants below which a limit is
/// considered converged.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-4;

/// `α̂ = 1 − α(k√η)√η`, `β̂ = β(k√η)η`.
pub fn continuous_to_discrete(schedule: &CoefficientSchedule, eta: f64, k: f64) -> Result<(f64, f64)> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::argument(format!("η must be positive, got {eta}")));
    }
    if !(k >= 0.0) {
        return Err(Error::argument(format!("k must be nonnegative, got {k}")));
    }
    if schedule.is_singular() && k == 0.0 {
        return Err(Error::contract(
            "α(t) = r/t is singular at k = 0; use the (k−1)/(k+1) momentum form there",
        ));
    }
    let h = eta.sqrt();
    let t = k * h;
    Ok((1.0 - schedule.alpha(t) * h, schedule.beta(t) * eta))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientEstimate {
    pub alpha: f64,
    pub beta: f64,
    pub converged: bool,
    /// Extrapolants of increasing order through the smallest-step points.
    pub alpha_extrapolants: Vec<f64>,
    pub beta_extrapolants: Vec<f64>,
}

/// Neville extrapolation to `h = 0`; entry `j` uses the `j + 1` smallest `h`.
fn extrapolants(hs: &[f64], values: &[f64]) -> Vec<f64> {
    let m = hs.len();
    let mut out = Vec::with_capacity(m);
    let mut table = values.to_vec();
    // table[i] holds the interpolant through points i..=i+j at h = 0
    out.push(table[m - 1]);
    for j in 1..m {
        for i in 0..m - j {
            table[i] = (hs[i + j] * table[i] - hs[i] * table[i + 1]) / (hs[i + j] - hs[i]);
        }
        out.push(table[m - 1 - j]);
    }
    out
}

fn converged(ex: &[f64]) -> bool {
    match ex {
        [.., a, b] => (b - a).abs() <= CONVERGENCE_TOLERANCE * b.abs().max(f64::MIN_POSITIVE),
        _ => false,
    }
}

/// Recovers `α(t) = lim (1 − α̂(t/√η, η))/√η` and `β(t) = lim β̂(t/√η, η)/η`
/// by Richardson extrapolation in `√η` along `etas`.
pub fn discrete_to_continuous_check(
    alpha_hat: impl Fn(f64, f64) -> f64,
    beta_hat: impl Fn(f64, f64) -> f64,
    t: f64,
    etas: &[f64],
) -> Result<CoefficientEstimate> {
    if etas.len() < 3 {
        return Err(Error::argument(format!("need at least 3 step sizes, got {}", etas.len())));
    }
    if etas.iter().any(|e| !(*e > 0.0)) || etas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::argument("step sizes must be positive and strictly decreasing"));
    }
    let hs: Vec<f64> = etas.iter().map(|e| e.sqrt()).collect();
    let a: Vec<f64> = etas
        .iter()
        .zip(&hs)
        .map(|(&eta, &h)| (1.0 - alpha_hat(t / h, eta)) / h)
        .collect();
    let b: Vec<f64> = etas.iter().zip(&hs).map(|(&eta, &h)| beta_hat(t / h, eta) / eta).collect();
    let alpha_extrapolants = extrapolants(&hs, &a);
    let beta_extrapolants = extrapolants(&hs, &b);
    Ok(CoefficientEstimate {
        alpha: *alpha_extrapolants.last().unwrap(),
        beta: *beta_extrapolants.last().unwrap(),
        converged: converged(&alpha_extrapolants) && converged(&beta_extrapolants),
        alpha_extrapolants,
        beta_extrapolants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_schedule_maps_directly() {
        let s = CoefficientSchedule::constant(3.0, 0.5).unwrap();
        let (a, b) = continuous_to_discrete(&s, 0.04, 17.0).unwrap();
        assert!((a - (1.0 - 3.0 * 0.2)).abs() < 1e-15);
        assert!((b - 0.02).abs() < 1e-15);
    }

    #[test]
    fn convex_schedule_maps_to_momentum_form() {
        let s = CoefficientSchedule::convex(2.0).unwrap();
        let eta: f64 = 0.01;
        for k in [1.0, 5.0, 40.0] {
            let (a, b) = continuous_to_discrete(&s, eta, k).unwrap();
            assert!((a - (1.0 - 2.0 / k)).abs() < 1e-14);
            assert!((b - eta.sqrt() / k).abs() < 1e-15);
        }
        assert!(matches!(continuous_to_discrete(&s, eta, 0.0), Err(Error::Contract(_))));
    }

    #[test]
    fn exact_limits_converge() {
        let est = discrete_to_continuous_check(|_, eta| 1.0 - 1.7 * eta.sqrt(), |_, eta| eta, 3.0, &[1e-2, 1e-3, 1e-4]).unwrap();
        assert!(est.converged);
        assert!((est.alpha - 1.7).abs() < 1e-10);
        assert!((est.beta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn centralized_nesterov_friction() {
        let mu: f64 = 0.3;
        let est = discrete_to_continuous_check(
            |_, eta| (1.0 - (mu * eta).sqrt()) / (1.0 + (mu * eta).sqrt()),
            |_, eta| eta,
            1.0,
            &[1e-2, 1e-3, 1e-4, 1e-5],
        )
        .unwrap();
        assert!(((est.alpha - 2.0 * mu.sqrt()) / (2.0 * mu.sqrt())).abs() < 1e-3);
    }

    #[test]
    fn divergent_quotient_is_flagged() {
        let est = discrete_to_continuous_check(|_, eta| 1.0 - eta.powf(0.25), |_, eta| eta, 1.0, &[1e-2, 1e-3, 1e-4]).unwrap();
        assert!(!est.converged);
    }

    #[test]
    fn bad_sequences_rejected() {
        assert!(discrete_to_continuous_check(|_, _| 0.0, |_, _| 0.0, 1.0, &[1e-2, 1e-3]).is_err());
        assert!(discrete_to_continuous_check(|_, _| 0.0, |_, _| 0.0, 1.0, &[1e-3, 1e-2, 1e-4]).is_err());
    }
}
