//! Discrete-time methods: DNGD-SC, DNGD-C, the five comparison baselines,
//! the parameter calculators and the run driver that samples metrics.

mod baselines;
mod coefficients;
mod dngd;

pub use baselines::{baseline_step, d_nc_rounds};
pub use coefficients::{continuous_to_discrete, discrete_to_continuous_check, CoefficientEstimate, CONVERGENCE_TOLERANCE};
pub use dngd::{
    dngd_c_bound, dngd_c_step, dngd_c_stepsize, dngd_c_stepsize_raw, dngd_sc_contraction, dngd_sc_momentum, dngd_sc_params,
    dngd_sc_step, estimate_d_constant, k0_bound, DngdScParams, DEFAULT_BETA_GRID, THETA_TOLERANCE,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analysis::{self, MetricsSample};
use crate::error::{Error, Result};
use crate::linalg;
use crate::netgraph::{Graph, LaplacianSpectrum};
use crate::objectives::{Optimum, Problem};

/// Iterate norm above which a run is declared divergent.
pub const DIVERGENCE_GUARD: f64 = 1e12;

/// State after `k` iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct IterState {
    pub k: usize,
    pub x: Vec<f64>,
    pub x_prev: Vec<f64>,
    /// Extrapolated point `ỹ_k` the next step will use; equals `x` for
    /// methods without momentum.
    pub y: Vec<f64>,
    /// Gradient tracker (gradient tracking) or `G(x̃_{k−1})` (EXTRA).
    pub tracker: Option<Vec<f64>>,
    pub comm_scalars: u64,
}

impl IterState {
    pub fn initial(x0: Vec<f64>) -> Self {
        IterState {
            k: 0,
            x_prev: x0.clone(),
            y: x0.clone(),
            x: x0,
            tracker: None,
            comm_scalars: 0,
        }
    }
}

/// Algorithm and its parameters; JSON `{"kind": ..., "params": {...}}`.
///
/// Baselines mix with `W = I − mixing·ℒ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum AlgorithmSpec {
    DngdSc { eta: f64, alpha: f64, beta: f64 },
    DngdC { eta: f64 },
    /// `γ_k = gamma0 / (k+1)^decay`.
    Dgd { mixing: f64, gamma0: f64, decay: f64 },
    /// Step `c/(k+1)`, momentum `(k−1)/(k+1)`.
    DNg { mixing: f64, c: f64 },
    DNc { mixing: f64, step: f64 },
    Extra { mixing: f64, gamma: f64 },
    GradientTracking { mixing: f64, gamma: f64 },
}

impl AlgorithmSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            AlgorithmSpec::DngdSc { .. } => "dngd_sc",
            AlgorithmSpec::DngdC { .. } => "dngd_c",
            AlgorithmSpec::Dgd { .. } => "dgd",
            AlgorithmSpec::DNg { .. } => "d_ng",
            AlgorithmSpec::DNc { .. } => "d_nc",
            AlgorithmSpec::Extra { .. } => "extra",
            AlgorithmSpec::GradientTracking { .. } => "gradient_tracking",
        }
    }

    /// Checks the parameter constraints against the graph and problem.
    pub fn validate(&self, spectrum: &LaplacianSpectrum, p: &Problem) -> Result<()> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::argument(format!("{}: {name} must be positive, got {v}", self.kind())))
            }
        };
        let mixing_ok = |a: f64| -> Result<()> {
            positive("mixing", a)?;
            if a * spectrum.lambda_n >= 1.0 {
                return Err(Error::contract(format!(
                    "{}: mixing·λₙ = {} must be below 1",
                    self.kind(),
                    a * spectrum.lambda_n
                )));
            }
            Ok(())
        };
        match *self {
            AlgorithmSpec::DngdSc { eta, alpha, beta } => {
                positive("eta", eta)?;
                positive("alpha", alpha)?;
                positive("beta", beta)?;
                if alpha * eta.sqrt() >= 2.0 {
                    return Err(Error::contract(format!(
                        "dngd_sc: α√η = {} puts the momentum coefficient outside (0, 1)",
                        alpha * eta.sqrt()
                    )));
                }
            }
            AlgorithmSpec::DngdC { eta } => {
                positive("eta", eta)?;
                let bound = dngd_c_stepsize(spectrum, p);
                if eta > bound * (1.0 + 1e-12) {
                    return Err(Error::contract(format!("dngd_c: η = {eta} exceeds the admissible {bound}")));
                }
            }
            AlgorithmSpec::Dgd { mixing, gamma0, decay } => {
                mixing_ok(mixing)?;
                positive("gamma0", gamma0)?;
                if !(decay >= 0.0 && decay.is_finite()) {
                    return Err(Error::argument(format!("dgd: decay must be nonnegative, got {decay}")));
                }
            }
            AlgorithmSpec::DNg { mixing, c } => {
                mixing_ok(mixing)?;
                positive("c", c)?;
            }
            AlgorithmSpec::DNc { mixing, step } => {
                mixing_ok(mixing)?;
                positive("step", step)?;
            }
            AlgorithmSpec::Extra { mixing, gamma } | AlgorithmSpec::GradientTracking { mixing, gamma } => {
                mixing_ok(mixing)?;
                positive("gamma", gamma)?;
            }
        }
        Ok(())
    }

    /// One iteration from `s`.
    pub fn step(&self, s: &IterState, g: &Graph, p: &Problem) -> Result<IterState> {
        match *self {
            AlgorithmSpec::DngdSc { eta, alpha, beta } => dngd_sc_step(s, g, p, eta, alpha, beta),
            AlgorithmSpec::DngdC { eta } => dngd_c_step(s, g, p, eta),
            _ => baseline_step(self, s, g, p),
        }
    }
}

/// Scalars sent by one round in which every agent ships a `d`-vector to
/// each neighbour.
pub(crate) fn round_scalars(g: &Graph, d: usize) -> u64 {
    2 * (g.edge_count() * d) as u64
}

pub(crate) fn check_dims(s: &IterState, g: &Graph, p: &Problem) -> Result<usize> {
    let len = p.n() * p.d();
    if g.n() != p.n() || s.x.len() != len || s.x_prev.len() != len {
        return Err(Error::argument(format!(
            "iterate of length {} does not match n={} (graph {}), d={}",
            s.x.len(),
            p.n(),
            g.n(),
            p.d()
        )));
    }
    Ok(p.d())
}

/// `x + m (x − x_prev)`
pub(crate) fn extrapolate(x: &[f64], x_prev: &[f64], m: f64) -> Vec<f64> {
    x.iter().zip(x_prev).map(|(a, b)| a + m * (a - b)).collect()
}

/// Rejects non-finite entries and norms beyond [`DIVERGENCE_GUARD`].
pub(crate) fn check_iterate(x: &[f64], d: usize, context: &str) -> Result<()> {
    if let Some(idx) = linalg::first_non_finite(x) {
        return Err(Error::NonFinite { agent: idx / d, context: context.into() });
    }
    let norm = linalg::norm(x);
    if norm > DIVERGENCE_GUARD {
        return Err(Error::Diverged { norm, limit: DIVERGENCE_GUARD, context: context.into() });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub iters: usize,
    pub sample_stride: usize,
    pub seed_init: u64,
    /// Draw one point and give it to every agent.
    pub identical_init: bool,
    /// Standard deviation of the random initial coordinates.
    pub init_scale: f64,
    /// Explicit stacked starting point; overrides the random draw.
    pub initial: Option<Vec<f64>>,
    /// Stop after the first sample whose `max_subopt` is at most this.
    pub stop_below: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            iters: 1000,
            sample_stride: 1,
            seed_init: 0,
            identical_init: true,
            init_scale: 1.0,
            initial: None,
            stop_below: None,
        }
    }
}

/// Deterministic starting point for `n` agents in `ℝ^d`.
pub fn initial_point(n: usize, d: usize, opts: &RunOptions) -> Result<Vec<f64>> {
    if let Some(x0) = &opts.initial {
        if x0.len() != n * d {
            return Err(Error::argument(format!("initial point has length {}, expected {}", x0.len(), n * d)));
        }
        return Ok(x0.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed_init);
    let mut draw = |len: usize| -> Vec<f64> {
        (0..len)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                opts.init_scale * z
            })
            .collect()
    };
    if opts.identical_init {
        let x = draw(d);
        Ok((0..n).flat_map(|_| x.iter().copied()).collect())
    } else {
        Ok(draw(n * d))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub spec: AlgorithmSpec,
    /// States at the sampled iterations.
    pub iterates: Vec<IterState>,
    /// One sample per entry of `iterates`.
    pub metrics: Vec<MetricsSample>,
    /// Set when `stop_below` ended the run before `iters`.
    pub stopped_early: bool,
}

impl RunRecord {
    pub fn series(&self, field: impl Fn(&MetricsSample) -> f64) -> Vec<(f64, f64)> {
        self.metrics.iter().map(|m| (m.index, field(m))).collect()
    }

    /// First sample whose `field` is at most `threshold`.
    pub fn first_below(&self, threshold: f64, field: impl Fn(&MetricsSample) -> f64) -> Option<&MetricsSample> {
        self.metrics.iter().find(|m| field(m) <= threshold)
    }

    pub fn last(&self) -> &MetricsSample {
        self.metrics.last().expect("a run records at least the initial sample")
    }
}

/// Runs `spec` for `opts.iters` iterations and samples metrics at `k = 0`,
/// every `sample_stride` iterations and at the last iteration.
pub fn run(spec: &AlgorithmSpec, g: &Graph, p: &Problem, optimum: &Optimum, opts: &RunOptions) -> Result<RunRecord> {
    if opts.iters == 0 {
        return Err(Error::argument("at least one iteration is required"));
    }
    if opts.sample_stride == 0 {
        return Err(Error::argument("sample stride must be at least 1"));
    }
    if optimum.x_star.len() != p.d() {
        return Err(Error::argument("optimum dimension does not match the problem"));
    }
    let spectrum = g.spectrum()?;
    spec.validate(&spectrum, p)?;
    let x0 = initial_point(p.n(), p.d(), opts)?;
    if opts.identical_init && g.quad_form(&x0)? > 0.0 {
        return Err(Error::contract("identical initialization requested but the initial point is not at consensus"));
    }

    let sample = |s: &IterState| -> Result<MetricsSample> {
        let mut m = analysis::measure(s.k as f64, &s.x, g, p, optimum.f_star, s.comm_scalars)?;
        if let AlgorithmSpec::DngdC { eta } = spec {
            m.lyapunov = Some(analysis::lyapunov_vk(s, g, p, *eta, &optimum.x_star, optimum.f_star)?);
            m.momentum_margin = Some(analysis::momentum_margin(s, g)?);
        }
        Ok(m)
    };

    let mut state = IterState::initial(x0);
    let mut iterates = vec![state.clone()];
    let mut metrics = vec![sample(&state)?];
    let mut stopped_early = false;
    if opts.stop_below.is_some_and(|eps| metrics[0].max_subopt <= eps) {
        stopped_early = true;
    }
    while !stopped_early && state.k < opts.iters {
        let k = state.k;
        state = spec.step(&state, g, p).map_err(|e| e.at_iteration(k))?;
        if state.k % opts.sample_stride == 0 || state.k == opts.iters {
            let m = sample(&state).map_err(|e| e.at_iteration(state.k))?;
            stopped_early = opts.stop_below.is_some_and(|eps| m.max_subopt <= eps) && state.k < opts.iters;
            iterates.push(state.clone());
            metrics.push(m);
        }
    }
    Ok(RunRecord { spec: *spec, iterates, metrics, stopped_early })
}
