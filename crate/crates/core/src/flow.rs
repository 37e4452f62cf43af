//! Second-order distributed Nesterov flows
//! `Ẍ + α(t)Ẋ + ℒX + β(t)G(X) = 0`, a fixed-step RK4 integrator, and the
//! Lyapunov functionals evaluated along trajectories.

use serde::Serialize;

use crate::analysis::{self, MetricsSample};
use crate::error::{Error, Result};
use crate::linalg;
use crate::netgraph::{Graph, LaplacianSpectrum};
use crate::objectives::Problem;

/// Integrator overflow guard on `‖(X, Ẋ)‖`.
pub const BLOW_UP_GUARD: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl FlowState {
    /// State at `t = 0` with zero velocity.
    pub fn at_rest(position: Vec<f64>) -> Self {
        let velocity = vec![0.0; position.len()];
        FlowState { t: 0.0, position, velocity }
    }
}

/// Friction `α(t)` and gradient gain `β(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientSchedule {
    Constant { alpha: f64, beta: f64 },
    /// `α = r/t`, `β = 1/t^p`.
    Convex { r: f64, p: f64 },
}

impl CoefficientSchedule {
    pub fn constant(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite() && beta >= 0.0 && beta.is_finite()) {
            return Err(Error::argument(format!(
                "constant schedule needs finite α, β ≥ 0, got α={alpha}, β={beta}"
            )));
        }
        Ok(CoefficientSchedule::Constant { alpha, beta })
    }

    /// `α = 2√min{λ₂, βμ/n}` with the given `β`.
    pub fn strongly_convex(spectrum: &LaplacianSpectrum, mu: f64, beta: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::contract(format!("strong convexity modulus must be positive, got {mu}")));
        }
        let mu_theta = spectrum.lambda2.min(beta * mu / spectrum.n as f64);
        Self::constant(2.0 * mu_theta.sqrt(), beta)
    }

    /// `α = r/t`, `β = 1/t^{3−r}`; requires `r ∈ [2, 3)`.
    pub fn convex(r: f64) -> Result<Self> {
        if !(2.0..3.0).contains(&r) {
            return Err(Error::contract(format!("convex schedule needs r in [2, 3), got {r}")));
        }
        Ok(CoefficientSchedule::Convex { r, p: 3.0 - r })
    }

    pub fn alpha(&self, t: f64) -> f64 {
        match *self {
            CoefficientSchedule::Constant { alpha, .. } => alpha,
            CoefficientSchedule::Convex { r, .. } => r / t,
        }
    }

    pub fn beta(&self, t: f64) -> f64 {
        match *self {
            CoefficientSchedule::Constant { beta, .. } => beta,
            CoefficientSchedule::Convex { p, .. } => t.powf(-p),
        }
    }

    /// True when `α(t)` is unbounded at `t = 0`.
    pub fn is_singular(&self) -> bool {
        matches!(self, CoefficientSchedule::Convex { .. })
    }
}

fn check_state(g: &Graph, p: &Problem, s: &FlowState) -> Result<()> {
    let len = p.n() * p.d();
    if g.n() != p.n() || s.position.len() != len || s.velocity.len() != len {
        return Err(Error::argument(format!(
            "state lengths ({}, {}) do not match n={} (graph {}), d={}",
            s.position.len(),
            s.velocity.len(),
            p.n(),
            g.n(),
            p.d()
        )));
    }
    Ok(())
}

/// `acc = −α(t)v − ℒx − β(t)G(x)`; `grad` is scratch space.
fn acceleration_into(
    schedule: &CoefficientSchedule,
    g: &Graph,
    p: &Problem,
    t: f64,
    x: &[f64],
    v: &[f64],
    grad: &mut [f64],
    acc: &mut [f64],
) -> Result<()> {
    let alpha = schedule.alpha(t);
    let beta = schedule.beta(t);
    p.stacked_grad_into(x, grad)?;
    for i in 0..acc.len() {
        acc[i] = -alpha * v[i] - beta * grad[i];
    }
    g.mix_into(x, p.d(), -1.0, acc);
    Ok(())
}

/// Returns `(Ẋ, Ẍ)` for the first-order form of the flow.
pub fn flow_rhs(schedule: &CoefficientSchedule, g: &Graph, p: &Problem, s: &FlowState) -> Result<(Vec<f64>, Vec<f64>)> {
    check_state(g, p, s)?;
    if s.t < 0.0 || (schedule.is_singular() && s.t <= 0.0) {
        return Err(Error::contract(format!("flow evaluated at t = {} outside the schedule domain", s.t)));
    }
    let mut grad = vec![0.0; s.position.len()];
    let mut acc = vec![0.0; s.position.len()];
    acceleration_into(schedule, g, p, s.t, &s.position, &s.velocity, &mut grad, &mut acc)?;
    Ok((s.velocity.clone(), acc))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrajectory {
    pub samples: Vec<FlowState>,
    pub h: f64,
    pub steps: usize,
    /// First integrated time; `h` for singular schedules started at 0.
    pub t0: f64,
}

/// Classical RK4 with fixed step `h` from `initial` to `t_end`, keeping every
/// `stride`-th state plus the final one.
///
/// Singular schedules started at `t < h` begin at `t₀ = h` with the state
/// frozen on `[0, t₀]`.
pub fn integrate(
    schedule: &CoefficientSchedule,
    g: &Graph,
    p: &Problem,
    initial: &FlowState,
    t_end: f64,
    h: f64,
    stride: usize,
) -> Result<FlowTrajectory> {
    check_state(g, p, initial)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::argument(format!("step size must be positive, got {h}")));
    }
    if stride == 0 {
        return Err(Error::argument("sample stride must be at least 1"));
    }
    if !linalg::all_finite(&initial.position) || !linalg::all_finite(&initial.velocity) {
        return Err(Error::argument("initial state has non-finite entries"));
    }
    let t0 = if schedule.is_singular() && initial.t < h { h } else { initial.t };
    if !(t_end > t0) {
        return Err(Error::argument(format!("t_end = {t_end} must exceed the start time {t0}")));
    }
    let steps = ((t_end - t0) / h - 1e-9).ceil() as usize;
    let len = initial.position.len();

    let mut x = initial.position.clone();
    let mut v = initial.velocity.clone();
    let mut grad = vec![0.0; len];
    let (mut k1x, mut k1v) = (vec![0.0; len], vec![0.0; len]);
    let (mut k2v, mut k3v, mut k4v) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    let (mut xs, mut vs) = (vec![0.0; len], vec![0.0; len]);
    let (mut k2x, mut k3x) = (vec![0.0; len], vec![0.0; len]);

    let mut samples = vec![FlowState { t: t0, position: x.clone(), velocity: v.clone() }];
    for step in 0..steps {
        let t = t0 + step as f64 * h;
        let t_next = if step + 1 == steps { t_end } else { t0 + (step + 1) as f64 * h };
        let dt = t_next - t;

        k1x.copy_from_slice(&v);
        acceleration_into(schedule, g, p, t, &x, &v, &mut grad, &mut k1v)?;
        for i in 0..len {
            xs[i] = x[i] + 0.5 * dt * k1x[i];
            vs[i] = v[i] + 0.5 * dt * k1v[i];
        }
        k2x.copy_from_slice(&vs);
        acceleration_into(schedule, g, p, t + 0.5 * dt, &xs, &vs, &mut grad, &mut k2v)?;
        for i in 0..len {
            xs[i] = x[i] + 0.5 * dt * k2x[i];
            vs[i] = v[i] + 0.5 * dt * k2v[i];
        }
        k3x.copy_from_slice(&vs);
        acceleration_into(schedule, g, p, t + 0.5 * dt, &xs, &vs, &mut grad, &mut k3v)?;
        for i in 0..len {
            xs[i] = x[i] + dt * k3x[i];
            vs[i] = v[i] + dt * k3v[i];
        }
        // xs/vs now hold the k4 stage point; k4x = vs
        acceleration_into(schedule, g, p, t_next, &xs, &vs, &mut grad, &mut k4v)?;
        let mut norm_sq = 0.0;
        for i in 0..len {
            let nx = x[i] + dt / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + vs[i]);
            let nv = v[i] + dt / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
            xs[i] = nx;
            k1x[i] = nv;
            norm_sq += nx * nx + nv * nv;
        }
        let norm = norm_sq.sqrt();
        if !(norm <= BLOW_UP_GUARD) {
            return Err(Error::BlowUp {
                t: t_next,
                norm,
                limit: BLOW_UP_GUARD,
                last_t: t,
                last_position: x,
                last_velocity: v,
            });
        }
        x.copy_from_slice(&xs);
        v.copy_from_slice(&k1x);
        if (step + 1) % stride == 0 || step + 1 == steps {
            samples.push(FlowState { t: t_next, position: x.clone(), velocity: v.clone() });
        }
    }
    Ok(FlowTrajectory { samples, h, steps, t0 })
}

/// `Θ_β(x̃) = ½ x̃ᵀℒx̃ + β f̃(x̃)`.
pub fn theta_beta(g: &Graph, p: &Problem, stacked: &[f64], beta: f64) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(Error::argument(format!("β must be nonnegative, got {beta}")));
    }
    Ok(0.5 * g.quad_form(stacked)? + beta * p.stacked_value(stacked)?)
}

/// `∇Θ_β(x̃) = ℒx̃ + β G(x̃)`.
pub fn theta_beta_grad(g: &Graph, p: &Problem, stacked: &[f64], beta: f64) -> Result<Vec<f64>> {
    let mut out = p.stacked_grad(stacked)?;
    for v in out.iter_mut() {
        *v *= beta;
    }
    g.mix_into(stacked, p.d(), 1.0, &mut out);
    Ok(out)
}

/// `V = ½t² X̃ᵀℒX̃ + t^{r−1}(f̃(X̃) − f*) + ½‖tẊ̃ + (r−1)(X̃ − X̃*)‖²`.
pub fn lyapunov_convex(g: &Graph, p: &Problem, s: &FlowState, r: f64, x_star: &[f64], f_star: f64) -> Result<f64> {
    check_state(g, p, s)?;
    if !(2.0..3.0).contains(&r) {
        return Err(Error::contract(format!("Lyapunov functional needs r in [2, 3), got {r}")));
    }
    let d = p.d();
    if x_star.len() != d {
        return Err(Error::argument(format!("x_star has length {}, expected {d}", x_star.len())));
    }
    let t = s.t;
    let dist: f64 = s
        .position
        .iter()
        .zip(&s.velocity)
        .enumerate()
        .map(|(idx, (x, v))| {
            let w = t * v + (r - 1.0) * (x - x_star[idx % d]);
            w * w
        })
        .sum();
    let gap = if t == 0.0 { 0.0 } else { t.powf(r - 1.0) * (p.stacked_value(&s.position)? - f_star) };
    Ok(0.5 * t * t * g.quad_form(&s.position)? + gap + 0.5 * dist)
}

/// `(t, max_i f(X_i(t)) − f*)` per sample.
pub fn flow_residual_series(traj: &FlowTrajectory, p: &Problem, f_star: f64) -> Result<Vec<(f64, f64)>> {
    if traj.samples.len() < 10 {
        return Err(Error::argument(format!(
            "trajectory has {} samples, at least 10 are needed",
            traj.samples.len()
        )));
    }
    let d = p.d();
    Ok(traj
        .samples
        .iter()
        .map(|s| {
            let worst = s
                .position
                .chunks(d)
                .map(|xi| p.value(xi) - f_star)
                .fold(f64::NEG_INFINITY, f64::max);
            (s.t, worst)
        })
        .collect())
}

/// Metrics per sample; `lyapunov_r` adds the convex-flow functional.
pub fn flow_metrics(
    traj: &FlowTrajectory,
    g: &Graph,
    p: &Problem,
    x_star: &[f64],
    f_star: f64,
    lyapunov_r: Option<f64>,
) -> Result<Vec<MetricsSample>> {
    traj.samples
        .iter()
        .map(|s| {
            let mut m = analysis::measure(s.t, &s.position, g, p, f_star, 0)?;
            if let Some(r) = lyapunov_r {
                m.lyapunov = Some(lyapunov_convex(g, p, s, r, x_star, f_star)?);
            }
            Ok(m)
        })
        .collect()
}

/// `f̃* = Σ_i min f_i`, the unconstrained infimum of the stacked objective.
pub fn tilde_f_star(p: &Problem, tol: f64) -> Result<f64> {
    (0..p.n())
        .map(|i| p.local_minimizer(i, tol).map(|x| p.value_i(i, &x)))
        .sum()
}

/// `B = 2(f̃(X̃(0)) − f̃*)` from the strongly convex analysis.
pub fn b_sc(p: &Problem, x0: &[f64], f_tilde_star: f64) -> Result<f64> {
    Ok(2.0 * (p.stacked_value(x0)? - f_tilde_star))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvexB {
    /// Largest sampled `‖∇f̃(X̃(t))‖`.
    pub grad_sup: f64,
    /// Largest sampled consensus error `ξ(t)`.
    pub xi_sup: f64,
    /// `G + (√n L / 2) sup ξ`.
    pub value: f64,
}

/// `B = G + (√n L/2) sup ξ(t)` from the convex analysis, with both suprema
/// taken over the sampled trajectory.
pub fn b_cvx(traj: &FlowTrajectory, p: &Problem) -> Result<ConvexB> {
    let (n, d) = (p.n(), p.d());
    let mut grad_sup: f64 = 0.0;
    let mut xi_sup: f64 = 0.0;
    for s in &traj.samples {
        grad_sup = grad_sup.max(linalg::norm(&p.stacked_grad(&s.position)?));
        xi_sup = xi_sup.max(analysis::consensus_error(&s.position, n, d));
    }
    Ok(ConvexB {
        grad_sup,
        xi_sup,
        value: grad_sup + 0.5 * (n as f64).sqrt() * p.lipschitz() * xi_sup,
    })
}

/// Right-hand side of the `r = 2` flow bound:
/// `(2B² + B√(4B² + 2λ₂S))/(tλ₂) + S/(2t)` with `S = Σ_i‖X_i(0) − X*‖²`.
pub fn flow_convex_bound(t: f64, lambda2: f64, b: f64, dist0_sq: f64) -> f64 {
    let lead = 2.0 * b * b + b * (4.0 * b * b + 2.0 * lambda2 * dist0_sq).sqrt();
    lead / (t * lambda2) + dist0_sq / (2.0 * t)
}

/// Default RK4 step `10⁻³/√λₙ`.
pub fn default_step(spectrum: &LaplacianSpectrum) -> f64 {
    1e-3 / spectrum.lambda_n.sqrt()
}
