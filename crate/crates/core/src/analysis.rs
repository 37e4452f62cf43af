//! Metrics, rate estimators and invariant checkers shared by the flows and
//! the discrete runs.

use serde::Serialize;

use crate::algorithms::{IterState, RunRecord};
use crate::error::{Error, Result};
use crate::linalg;
use crate::netgraph::Graph;
use crate::objectives::Problem;

/// Slack used by invariant checks, scaled by `max(1, initial magnitude)`.
pub const INVARIANT_SLACK: f64 = 1e-9;

/// One row of a metrics series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSample {
    /// Iteration `k` or time `t`.
    pub index: f64,
    /// `Σ_i (f(x_i) − f*)`, each local iterate evaluated on the full `f`.
    pub sum_subopt: f64,
    /// `max_i (f(x_i) − f*)`.
    pub max_subopt: f64,
    /// `ξ = max_i ‖1_n ⊗ x_i − x̃‖`.
    pub consensus_err: f64,
    pub comm_scalars: u64,
    pub lyapunov: Option<f64>,
    pub momentum_margin: Option<f64>,
}

/// Evaluates every agent's iterate on the full objective and the
/// consensus error of the stack.
pub fn measure(index: f64, stacked: &[f64], g: &Graph, p: &Problem, f_star: f64, comm: u64) -> Result<MetricsSample> {
    let n = p.n();
    let d = p.d();
    if stacked.len() != n * d || g.n() != n {
        return Err(Error::argument(format!(
            "stacked length {} does not match n={n}, d={d} (graph has {} nodes)",
            stacked.len(),
            g.n()
        )));
    }
    let mut sum = 0.0;
    let mut max = f64::NEG_INFINITY;
    for i in 0..n {
        let gap = p.value(&stacked[i * d..(i + 1) * d]) - f_star;
        sum += gap;
        max = max.max(gap);
    }
    Ok(MetricsSample {
        index,
        sum_subopt: sum,
        max_subopt: max,
        consensus_err: consensus_error(stacked, n, d),
        comm_scalars: comm,
        lyapunov: None,
        momentum_margin: None,
    })
}

/// `max_i ‖1_n ⊗ x_i − x̃‖`.
pub fn consensus_error(stacked: &[f64], n: usize, d: usize) -> f64 {
    (0..n)
        .map(|i| {
            let xi = &stacked[i * d..(i + 1) * d];
            (0..n)
                .map(|j| linalg::dist_sq(xi, &stacked[j * d..(j + 1) * d]))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// Inclusive range of index values (`k` or `t`) a fit uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Self {
        Window { start, end }
    }

    /// Middle 60% of the index range covered by `series`.
    pub fn middle(series: &[(f64, f64)]) -> Option<Window> {
        let first = series.first()?.0;
        let last = series.last()?.0;
        let span = last - first;
        Some(Window::new(first + 0.2 * span, last - 0.2 * span))
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.start && x <= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum RateModel {
    /// `value ≈ C ρ^k`.
    LinearRate { rho: f64 },
    /// `value ≈ C k^exponent`.
    PowerLaw { exponent: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub model: RateModel,
    pub window: Window,
    /// Coefficient of determination of the log-space regression.
    pub r_squared: f64,
    pub points: usize,
    /// Set when the fitted parameter falls outside the model's range
    /// (ρ ≥ 1 or a positive exponent).
    pub degenerate: bool,
}

impl RateFit {
    /// `ρ` for linear fits, the exponent for power laws.
    pub fn value(&self) -> f64 {
        match self.model {
            RateModel::LinearRate { rho } => rho,
            RateModel::PowerLaw { exponent } => exponent,
        }
    }

    /// Exponential decay rate `−ln ρ` per unit index.
    pub fn decay_rate(&self) -> f64 {
        match self.model {
            RateModel::LinearRate { rho } => -rho.ln(),
            RateModel::PowerLaw { exponent } => -exponent,
        }
    }

    pub fn report(&self) -> FitReport {
        FitReport {
            model: match self.model {
                RateModel::LinearRate { .. } => "linear_rate",
                RateModel::PowerLaw { .. } => "power_law",
            },
            value: self.value(),
            window: [self.window.start, self.window.end],
            r_squared: self.r_squared,
        }
    }
}

/// Summary-JSON form of a fit: `{"model", "value", "window", "r_squared"}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub model: &'static str,
    pub value: f64,
    pub window: [f64; 2],
    pub r_squared: f64,
}

/// How a floor is removed before a linear-rate fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Floor {
    None,
    /// Subtract the minimum over the final 20% of the series.
    TailMinimum,
}

const MIN_FIT_POINTS: usize = 5;

/// Least-squares line through `(x, y)`: slope, intercept, R².
pub fn linear_regression(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 {
        let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        1.0 - ss_res / syy
    } else {
        1.0
    };
    (slope, intercept, r2)
}

fn tail_minimum(series: &[(f64, f64)]) -> f64 {
    let start = series.len() - (series.len() / 5).max(1);
    series[start..].iter().map(|p| p.1).fold(f64::INFINITY, f64::min)
}

/// Fits `value ≈ C ρ^k` by regressing `ln(value)` on `k`.
///
/// With [`Floor::TailMinimum`] the tail minimum is subtracted first so an
/// exponential-plus-constant series yields its geometric factor. Points that
/// are non-positive after the subtraction are skipped.
pub fn fit_linear_rate(series: &[(f64, f64)], window: Option<Window>, floor: Floor) -> Result<RateFit> {
    if series.is_empty() {
        return Err(Error::Fit("empty series".into()));
    }
    let window = window.or_else(|| Window::middle(series)).expect("non-empty");
    let offset = match floor {
        Floor::None => 0.0,
        Floor::TailMinimum => tail_minimum(series),
    };
    let (xs, ys): (Vec<f64>, Vec<f64>) = series
        .iter()
        .filter(|(k, v)| window.contains(*k) && v - offset > 0.0 && v.is_finite())
        .map(|&(k, v)| (k, (v - offset).ln()))
        .unzip();
    if xs.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "only {} usable points in window [{}, {}]",
            xs.len(),
            window.start,
            window.end
        )));
    }
    let (slope, _, r2) = linear_regression(&xs, &ys);
    let rho = slope.exp();
    Ok(RateFit {
        model: RateModel::LinearRate { rho },
        window,
        r_squared: r2,
        points: xs.len(),
        degenerate: !(rho > 0.0 && rho < 1.0),
    })
}

/// Fits `value ≈ C k^e` by regressing `ln(value)` on `ln(k)`.
pub fn fit_power_law(series: &[(f64, f64)], window: Option<Window>) -> Result<RateFit> {
    if series.is_empty() {
        return Err(Error::Fit("empty series".into()));
    }
    let window = window.or_else(|| Window::middle(series)).expect("non-empty");
    let (xs, ys): (Vec<f64>, Vec<f64>) = series
        .iter()
        .filter(|(k, v)| window.contains(*k) && *k > 0.0 && *v > 0.0 && v.is_finite())
        .map(|&(k, v)| (k.ln(), v.ln()))
        .unzip();
    if xs.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "only {} usable points in window [{}, {}]",
            xs.len(),
            window.start,
            window.end
        )));
    }
    let (slope, _, r2) = linear_regression(&xs, &ys);
    Ok(RateFit {
        model: RateModel::PowerLaw { exponent: slope },
        window,
        r_squared: r2,
        points: xs.len(),
        degenerate: slope > 0.0,
    })
}

/// `V_k = (η/2) k² x̃ₖᵀℒx̃ₖ + √η k (f̃(x̃ₖ) − f*) + ½‖(k+1)ỹₖ − k x̃ₖ − 1⊗x*‖²`.
pub fn lyapunov_vk(s: &IterState, g: &Graph, p: &Problem, eta: f64, x_star: &[f64], f_star: f64) -> Result<f64> {
    let d = p.d();
    if x_star.len() != d {
        return Err(Error::argument(format!("x_star has length {}, expected {d}", x_star.len())));
    }
    let k = s.k as f64;
    let consensus = g.quad_form(&s.x)?;
    let f_tilde = p.stacked_value(&s.x)?;
    let dist: f64 = s
        .y
        .iter()
        .zip(&s.x)
        .enumerate()
        .map(|(idx, (y, x))| {
            let v = (k + 1.0) * y - k * x - x_star[idx % d];
            v * v
        })
        .sum();
    Ok(0.5 * eta * k * k * consensus + eta.sqrt() * k * (f_tilde - f_star) + 0.5 * dist)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotoneCheck {
    pub ok: bool,
    /// Largest successive increase `v[i+1] − v[i]`.
    pub worst_violation: f64,
    /// Position of the later element of the worst step.
    pub index: usize,
}

/// Checks that every successive difference is at most `slack`.
pub fn check_monotone(series: &[f64], slack: f64) -> Result<MonotoneCheck> {
    if series.len() < 2 {
        return Err(Error::argument("monotonicity check needs at least two values"));
    }
    let (index, worst) = series
        .windows(2)
        .enumerate()
        .map(|(i, w)| (i + 1, w[1] - w[0]))
        .fold((1, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
    Ok(MonotoneCheck {
        ok: worst <= slack,
        worst_violation: worst,
        index,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvariantCheck {
    pub ok: bool,
    pub worst_margin: f64,
    /// Iteration `k` where the worst margin occurs.
    pub index: usize,
}

/// `(k+1) g(ỹ_k) − k g(x̃_k)` with `g(z̃) = z̃ᵀℒz̃`.
pub fn momentum_margin(s: &IterState, g: &Graph) -> Result<f64> {
    let k = s.k as f64;
    Ok((k + 1.0) * g.quad_form(&s.y)? - k * g.quad_form(&s.x)?)
}

/// Evaluates the momentum-consensus margin at every sampled iterate; ok iff
/// it never drops below `−INVARIANT_SLACK`.
pub fn check_momentum_invariant(run: &RunRecord, g: &Graph) -> Result<InvariantCheck> {
    let mut worst = (f64::INFINITY, 0);
    for s in &run.iterates {
        let m = momentum_margin(s, g)?;
        if m < worst.0 {
            worst = (m, s.k);
        }
    }
    if run.iterates.is_empty() {
        return Err(Error::argument("run has no sampled iterates"));
    }
    Ok(InvariantCheck {
        ok: worst.0 >= -INVARIANT_SLACK,
        worst_margin: worst.0,
        index: worst.1,
    })
}

/// Log-log slope of iterations-to-ε against κ.
pub fn kappa_sweep_summary(records: &[(f64, f64)]) -> Result<f64> {
    if let Some(bad) = records.iter().find(|(k, it)| !(*k > 0.0) || !(*it > 0.0)) {
        return Err(Error::argument(format!(
            "κ and iteration counts must be positive, got ({}, {})",
            bad.0, bad.1
        )));
    }
    let mut kappas: Vec<f64> = records.iter().map(|r| r.0).collect();
    kappas.sort_by(f64::total_cmp);
    kappas.dedup();
    if kappas.len() < 4 {
        return Err(Error::argument(format!("need at least 4 distinct κ values, got {}", kappas.len())));
    }
    let xs: Vec<f64> = records.iter().map(|r| r.0.ln()).collect();
    let ys: Vec<f64> = records.iter().map(|r| r.1.ln()).collect();
    Ok(linear_regression(&xs, &ys).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{build_graph, Topology};
    use crate::objectives::least_squares;

    #[test]
    fn measure_at_optimum_and_offset() {
        let g = build_graph(Topology::Path { n: 2 }, 1.0).unwrap();
        let p = least_squares(
            vec![vec![vec![1.0], vec![0.0]], vec![vec![0.0], vec![1.0]]],
            vec![vec![1.0], vec![2.0]],
        )
        .unwrap();
        let x_star = [1.0, 2.0];
        let at = measure(0.0, &[1.0, 2.0, 1.0, 2.0], &g, &p, 0.0, 0).unwrap();
        assert_eq!(at.sum_subopt, 0.0);
        assert_eq!(at.consensus_err, 0.0);
        let off = measure(3.0, &[x_star[0], x_star[1], x_star[0] + 1.0, x_star[1]], &g, &p, 0.0, 8).unwrap();
        assert!((off.consensus_err - 1.0).abs() < 1e-15);
        assert_eq!(off.comm_scalars, 8);
        assert_eq!(off.index, 3.0);
    }

    #[test]
    fn sum_equals_n_times_max_when_agents_coincide() {
        let g = build_graph(Topology::Ring { n: 3 }, 1.0).unwrap();
        let p = least_squares(vec![vec![vec![1.0]]; 3], vec![vec![0.0], vec![1.0], vec![5.0]]).unwrap();
        let m = measure(0.0, &[0.7, 0.7, 0.7], &g, &p, 1.0, 0).unwrap();
        assert!((m.sum_subopt - 3.0 * m.max_subopt).abs() < 1e-12);
    }

    #[test]
    fn exact_geometric_fit() {
        let series: Vec<(f64, f64)> = (0..60).map(|k| (k as f64, 0.9f64.powi(k))).collect();
        let fit = fit_linear_rate(&series, None, Floor::None).unwrap();
        assert!((fit.value() - 0.9).abs() < 1e-12);
        assert!(!fit.degenerate);
    }

    #[test]
    fn floored_geometric_fit() {
        let series: Vec<(f64, f64)> = (0..400).map(|k| (k as f64, 1e-3 + 0.9f64.powi(k))).collect();
        let fit = fit_linear_rate(&series, Some(Window::new(0.0, 50.0)), Floor::TailMinimum).unwrap();
        assert!((0.88..=0.92).contains(&fit.value()), "rho = {}", fit.value());
    }

    #[test]
    fn constant_series_is_degenerate() {
        let series: Vec<(f64, f64)> = (0..20).map(|k| (k as f64, 2.0)).collect();
        let fit = fit_linear_rate(&series, None, Floor::None).unwrap();
        assert_eq!(fit.value(), 1.0);
        assert!(fit.degenerate);
        // with the floor removed nothing positive remains
        assert!(matches!(fit_linear_rate(&series, None, Floor::TailMinimum), Err(Error::Fit(_))));
    }

    #[test]
    fn exact_power_laws() {
        let s1: Vec<(f64, f64)> = (1..100).map(|k| (k as f64, 5.0 / k as f64)).collect();
        assert!((fit_power_law(&s1, None).unwrap().value() + 1.0).abs() < 1e-12);
        let s2: Vec<(f64, f64)> = (1..100).map(|k| (k as f64, 3.0 / (k as f64).powi(2))).collect();
        assert!((fit_power_law(&s2, None).unwrap().value() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn oscillating_power_law() {
        let s: Vec<(f64, f64)> = (10..=10_000).map(|k| (k as f64, (2.0 + (k as f64).sin()) / k as f64)).collect();
        let e = fit_power_law(&s, Some(Window::new(10.0, 1e4))).unwrap().value();
        assert!((-1.15..=-0.85).contains(&e), "exponent {e}");
    }

    #[test]
    fn too_few_points() {
        let s = [(1.0, 1.0), (2.0, 0.5), (3.0, 0.25)];
        assert!(matches!(fit_power_law(&s, None), Err(Error::Fit(_))));
    }

    #[test]
    fn monotone_checks() {
        let c = check_monotone(&[5.0, 4.0, 3.5, 1.0], 0.0).unwrap();
        assert!(c.ok && c.worst_violation <= 0.0);
        let c = check_monotone(&[5.0, 4.0, 5.0, 3.0], 0.0).unwrap();
        assert!(!c.ok);
        assert_eq!(c.index, 2);
        assert_eq!(c.worst_violation, 1.0);
        assert!(check_monotone(&[1.0], 0.0).is_err());
    }

    #[test]
    fn kappa_summary() {
        let sqrt: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&k: &f64| (k, 100.0 * k.sqrt())).collect();
        assert!((kappa_sweep_summary(&sqrt).unwrap() - 0.5).abs() < 1e-12);
        let lin: Vec<(f64, f64)> = [1.0, 3.0, 9.0, 27.0].iter().map(|&k| (k, 7.0 * k)).collect();
        assert!((kappa_sweep_summary(&lin).unwrap() - 1.0).abs() < 1e-12);
        assert!(kappa_sweep_summary(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]).is_err());
        assert!(kappa_sweep_summary(&[(1.0, 1.0), (2.0, 0.0), (3.0, 3.0), (4.0, 1.0)]).is_err());
    }
}
