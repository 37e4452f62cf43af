//! Executes configured experiments and collects everything the reports need.

use rayon::prelude::*;
use rayon::ThreadPool;
use serde::Serialize;

use dngd::algorithms::{self as alg, AlgorithmSpec, RunOptions, RunRecord};
use dngd::analysis::{self, FitReport, Floor, InvariantCheck, MetricsSample, MonotoneCheck, RateFit, Window};
use dngd::flow::{self, CoefficientSchedule, FlowState};
use dngd::{build_graph, centralized_optimum, linalg, Graph, LaplacianSpectrum, Optimum, Problem, ProblemSpec, Topology};

use crate::config::{AlgorithmEntry, ExperimentConfig, FlowConfig, FlowSchedule, InitConfig, Seeds};
use crate::CliError;

/// Gradient-norm tolerance for the centralized reference solutions.
pub const ORACLE_TOL: f64 = 1e-10;

/// Linear-rate fits ignore samples at or below this suboptimality.
pub const ROUNDOFF_LEVEL: f64 = 1e-12;

/// Relative slack for the convex-flow Lyapunov check.
pub const FLOW_LYAPUNOV_SLACK: f64 = 1e-6;

pub const COMM_NOTE: &str = "comm_scalars counts both directions of every edge: one round costs 2|E|d scalars";

/// Graph, problem and centralized reference for one experiment.
#[derive(Debug, Clone)]
pub struct Setup {
    pub graph: Graph,
    pub spectrum: LaplacianSpectrum,
    pub problem: Problem,
    pub optimum: Optimum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SystemSummary {
    pub n: usize,
    pub d: usize,
    pub edges: usize,
    pub lambda2: f64,
    pub lambda_n: f64,
    pub kappa: f64,
    pub lipschitz: f64,
    pub mu: Option<f64>,
    pub consistent: bool,
    pub f_star: f64,
}

impl Setup {
    pub fn new(topology: Topology, weight: f64, spec: &ProblemSpec) -> Result<Setup, CliError> {
        let graph = build_graph(topology, weight)?;
        let spectrum = graph.spectrum()?;
        let problem = spec.generate(graph.n())?;
        let optimum = centralized_optimum(&problem, ORACLE_TOL)?;
        Ok(Setup { graph, spectrum, problem, optimum })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Setup, CliError> {
        Setup::new(cfg.graph, cfg.edge_weight, &cfg.problem)
    }

    pub fn summary(&self) -> SystemSummary {
        let (l2, ln) = self.spectrum.extremes();
        SystemSummary {
            n: self.problem.n(),
            d: self.problem.d(),
            edges: self.graph.edge_count(),
            lambda2: l2,
            lambda_n: ln,
            kappa: ln / l2,
            lipschitz: self.problem.lipschitz(),
            mu: self.problem.strong_convexity(),
            consistent: self.problem.is_consistent(),
            f_star: self.optimum.f_star,
        }
    }
}

/// Quantities derived while choosing prescribed parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AutoDetails {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_constant: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_constant: Option<f64>,
    /// Per-step factor predicted for DNGD-SC.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k0: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub label: String,
    pub spec: AlgorithmSpec,
    pub auto: bool,
    pub details: AutoDetails,
}

/// Prescribed parameters. Baselines mix with `a = 0.5/λₙ` and take steps
/// proportional to `1/L`.
pub fn auto_spec(kind: &str, s: &Setup, epsilon: f64) -> Result<(AlgorithmSpec, AutoDetails), CliError> {
    let (_, ln) = s.spectrum.extremes();
    let mixing = 0.5 / ln;
    let l = s.problem.lipschitz();
    let mut details = AutoDetails::default();
    let spec = match kind {
        "dngd_sc" => {
            let d_constant = if s.problem.is_consistent() {
                None
            } else {
                Some(alg::estimate_d_constant(&s.graph, &s.problem, &alg::DEFAULT_BETA_GRID)?)
            };
            let prm = alg::dngd_sc_params(&s.spectrum, &s.problem, epsilon, d_constant)?;
            details.d_constant = d_constant;
            details.contraction = Some(alg::dngd_sc_contraction(&s.spectrum, &s.problem, prm.beta)?);
            AlgorithmSpec::DngdSc { eta: prm.eta, alpha: prm.alpha, beta: prm.beta }
        }
        "dngd_c" => AlgorithmSpec::DngdC { eta: alg::dngd_c_stepsize(&s.spectrum, &s.problem) },
        "dgd" => AlgorithmSpec::Dgd { mixing, gamma0: 1.0 / l, decay: 1.0 / 3.0 },
        "d_ng" => AlgorithmSpec::DNg { mixing, c: 1.0 / l },
        "d_nc" => AlgorithmSpec::DNc { mixing, step: 0.5 / l },
        "extra" => AlgorithmSpec::Extra { mixing, gamma: 0.5 / l },
        "gradient_tracking" => AlgorithmSpec::GradientTracking { mixing, gamma: 0.2 / l },
        other => return Err(CliError::Config(format!("unknown algorithm kind {other:?}"))),
    };
    Ok((spec, details))
}

pub fn resolve(entry: &AlgorithmEntry, s: &Setup, epsilon: f64) -> Result<Resolved, CliError> {
    let label = entry.label().to_string();
    let ctx = format!("algorithm {label}");
    match entry.explicit_spec().map_err(CliError::Config)? {
        Some(spec) => {
            let mut details = AutoDetails::default();
            if let AlgorithmSpec::DngdSc { beta, .. } = spec {
                details.contraction = alg::dngd_sc_contraction(&s.spectrum, &s.problem, beta).ok();
            }
            Ok(Resolved { label, spec, auto: false, details })
        }
        None => {
            let (spec, details) = auto_spec(&entry.kind, s, epsilon).map_err(|e| e.context(&ctx))?;
            Ok(Resolved { label, spec, auto: true, details })
        }
    }
}

pub fn run_options(cfg: &ExperimentConfig) -> RunOptions {
    RunOptions {
        iters: cfg.iterations,
        sample_stride: cfg.sample_stride,
        seed_init: cfg.init.seed,
        identical_init: cfg.init.identical,
        init_scale: cfg.init.scale,
        initial: None,
        stop_below: cfg.stop_at_epsilon.then_some(cfg.epsilon),
    }
}

/// A fit, or why it could not be made.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum FitOutcome {
    Fit(FitReport),
    Failed { error: String },
}

impl FitOutcome {
    fn from(r: dngd::Result<RateFit>) -> FitOutcome {
        match r {
            Ok(f) => FitOutcome::Fit(f.report()),
            Err(e) => FitOutcome::Failed { error: e.to_string() },
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            FitOutcome::Fit(f) => Some(f.value),
            FitOutcome::Failed { .. } => None,
        }
    }
}

/// Linear-rate fit over the middle of the range before the series first
/// reaches [`ROUNDOFF_LEVEL`]. With a floor, the whole series is used.
pub fn fit_exponential(series: &[(f64, f64)], floor: Floor) -> dngd::Result<RateFit> {
    let usable = match floor {
        Floor::None => {
            let cut = series.iter().position(|p| p.1 <= ROUNDOFF_LEVEL).unwrap_or(series.len());
            &series[..cut]
        }
        Floor::TailMinimum => series,
    };
    analysis::fit_linear_rate(usable, Window::middle(usable), floor)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossing {
    pub k: f64,
    pub comm_scalars: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgorithmOutcome {
    pub label: String,
    pub spec: AlgorithmSpec,
    pub auto: bool,
    pub details: AutoDetails,
    pub fit: FitOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov_check: Option<MonotoneCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub momentum_check: Option<InvariantCheck>,
    /// First sample with `sum_subopt ≤ ε`.
    pub epsilon_crossing: Option<Crossing>,
    /// First sample with `max_subopt ≤ ε`.
    pub epsilon_crossing_max: Option<Crossing>,
    pub final_sample: MetricsSample,
    pub stopped_early: bool,
    #[serde(skip)]
    pub record: RunRecord,
}

fn crossing(record: &RunRecord, eps: f64, field: impl Fn(&MetricsSample) -> f64) -> Option<Crossing> {
    record.first_below(eps, field).map(|m| Crossing { k: m.index, comm_scalars: m.comm_scalars })
}

pub fn run_algorithm(r: &Resolved, s: &Setup, opts: &RunOptions, epsilon: f64) -> Result<AlgorithmOutcome, CliError> {
    let ctx = format!("algorithm {}", r.label);
    let record = alg::run(&r.spec, &s.graph, &s.problem, &s.optimum, opts).map_err(|e| CliError::from(e).context(&ctx))?;
    let mut details = r.details.clone();

    let fit = match r.spec {
        AlgorithmSpec::DngdSc { .. } => {
            let floor = if s.problem.is_consistent() { Floor::None } else { Floor::TailMinimum };
            FitOutcome::from(fit_exponential(&record.series(|m| m.max_subopt), floor))
        }
        _ => FitOutcome::from(analysis::fit_power_law(&record.series(|m| m.sum_subopt), None)),
    };

    if let (AlgorithmSpec::DngdSc { .. }, Some(dc)) = (r.spec, details.d_constant) {
        let k0 = alg::initial_point(s.problem.n(), s.problem.d(), opts)
            .and_then(|x0| Ok((x0, flow::tilde_f_star(&s.problem, ORACLE_TOL)?)))
            .and_then(|(x0, fts)| flow::b_sc(&s.problem, &x0, fts))
            .and_then(|b| {
                details.b_constant = Some(b);
                alg::k0_bound(&s.spectrum, &s.problem, epsilon, b, dc)
            });
        match k0 {
            Ok(k) => details.k0 = Some(k),
            Err(e) => details.note = Some(format!("k0 unavailable: {e}")),
        }
    }

    let (lyapunov_check, momentum_check) = if let AlgorithmSpec::DngdC { .. } = r.spec {
        let v: Vec<f64> = record.metrics.iter().filter_map(|m| m.lyapunov).collect();
        let slack = analysis::INVARIANT_SLACK * v.first().map_or(1.0, |v0| v0.abs().max(1.0));
        let mono = if v.len() >= 2 { Some(analysis::check_monotone(&v, slack)?) } else { None };
        (mono, Some(analysis::check_momentum_invariant(&record, &s.graph)?))
    } else {
        (None, None)
    };

    Ok(AlgorithmOutcome {
        label: r.label.clone(),
        spec: r.spec,
        auto: r.auto,
        details,
        fit,
        lyapunov_check,
        momentum_check,
        epsilon_crossing: crossing(&record, epsilon, |m| m.sum_subopt),
        epsilon_crossing_max: crossing(&record, epsilon, |m| m.max_subopt),
        final_sample: record.last().clone(),
        stopped_early: record.stopped_early,
        record,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub name: String,
    pub command: &'static str,
    pub note: &'static str,
    pub seeds: Seeds,
    pub graph: Topology,
    pub edge_weight: f64,
    pub problem: ProblemSpec,
    pub system: SystemSummary,
    pub init: InitConfig,
    pub epsilon: f64,
    pub iterations: usize,
    pub sample_stride: usize,
    pub algorithms: Vec<AlgorithmOutcome>,
}

fn collect<T>(results: Vec<Result<T, CliError>>) -> Result<Vec<T>, CliError> {
    results.into_iter().collect()
}

pub fn run_experiment(cfg: &ExperimentConfig, pool: &ThreadPool) -> Result<RunReport, CliError> {
    if cfg.algorithms.is_empty() {
        return Err(CliError::Config("run needs at least one algorithm".into()));
    }
    let setup = Setup::from_config(cfg)?;
    let opts = run_options(cfg);
    let resolved = collect(pool.install(|| {
        cfg.algorithms.par_iter().map(|a| resolve(a, &setup, cfg.epsilon)).collect()
    }))?;
    let algorithms = collect(pool.install(|| {
        resolved.par_iter().map(|r| run_algorithm(r, &setup, &opts, cfg.epsilon)).collect()
    }))?;
    Ok(RunReport {
        name: cfg.name.clone(),
        command: "run",
        note: COMM_NOTE,
        seeds: cfg.seeds(),
        graph: cfg.graph,
        edge_weight: cfg.edge_weight,
        problem: cfg.problem,
        system: setup.summary(),
        init: cfg.init.clone(),
        epsilon: cfg.epsilon,
        iterations: cfg.iterations,
        sample_stride: cfg.sample_stride,
        algorithms,
    })
}

/// `max_subopt(t) ≤ bound(t)` along an `r = 2` flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub b_constant: f64,
    pub dist0_sq: f64,
    pub ok: bool,
    /// Largest `max_subopt / bound` over the samples.
    pub worst_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowOutcome {
    pub schedule: CoefficientSchedule,
    pub step: f64,
    pub t0: f64,
    pub t_end: f64,
    pub steps: usize,
    pub fit: FitOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov_check: Option<MonotoneCheck>,
    /// `"ok"` or `"violated"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov_status: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_check: Option<BoundCheck>,
    pub final_sample: MetricsSample,
    #[serde(skip)]
    pub metrics: Vec<MetricsSample>,
    #[serde(skip)]
    pub residual: Vec<(f64, f64)>,
}

pub fn resolve_schedule(
    schedule: &FlowSchedule,
    s: &Setup,
    epsilon: f64,
) -> Result<CoefficientSchedule, CliError> {
    Ok(match *schedule {
        FlowSchedule::Convex { r } => CoefficientSchedule::convex(r)?,
        FlowSchedule::Constant { alpha, beta } => CoefficientSchedule::constant(alpha, beta)?,
        FlowSchedule::StronglyConvex { beta } => {
            let mu = s
                .problem
                .strong_convexity()
                .ok_or_else(|| CliError::Config("strongly convex flow needs a strongly convex problem".into()))?;
            let beta = match beta {
                Some(b) => b,
                None => auto_spec("dngd_sc", s, epsilon).map(|(spec, _)| match spec {
                    AlgorithmSpec::DngdSc { beta, .. } => beta,
                    _ => unreachable!("dngd_sc resolves to DNGD-SC"),
                })?,
            };
            CoefficientSchedule::strongly_convex(&s.spectrum, mu, beta)?
        }
    })
}

pub fn run_flow(
    schedule: &CoefficientSchedule,
    flow_cfg: &FlowConfig,
    s: &Setup,
    opts: &RunOptions,
) -> Result<FlowOutcome, CliError> {
    let (p, g) = (&s.problem, &s.graph);
    let x0 = alg::initial_point(p.n(), p.d(), opts)?;
    let h = flow_cfg.step.unwrap_or_else(|| flow::default_step(&s.spectrum));
    let traj = flow::integrate(schedule, g, p, &FlowState::at_rest(x0.clone()), flow_cfg.t_end, h, flow_cfg.sample_stride)?;
    let r = match *schedule {
        CoefficientSchedule::Convex { r, .. } => Some(r),
        CoefficientSchedule::Constant { .. } => None,
    };
    let metrics = flow::flow_metrics(&traj, g, p, &s.optimum.x_star, s.optimum.f_star, r)?;
    let residual = flow::flow_residual_series(&traj, p, s.optimum.f_star)?;

    let fit = match r {
        Some(_) => FitOutcome::from(analysis::fit_power_law(&residual, None)),
        None => {
            let floor = if p.is_consistent() { Floor::None } else { Floor::TailMinimum };
            FitOutcome::from(fit_exponential(&residual, floor))
        }
    };

    let (lyapunov_check, lyapunov_status) = match r {
        Some(_) => {
            let v: Vec<f64> = metrics.iter().filter_map(|m| m.lyapunov).collect();
            let check = analysis::check_monotone(&v, FLOW_LYAPUNOV_SLACK * v[0].abs())?;
            (Some(check), Some(if check.ok { "ok" } else { "violated" }))
        }
        None => (None, None),
    };

    let bound_check = match r {
        Some(r) if r == 2.0 => {
            let b = flow::b_cvx(&traj, p)?.value;
            let star: Vec<f64> = (0..p.n()).flat_map(|_| s.optimum.x_star.iter().copied()).collect();
            let dist0_sq = linalg::dist_sq(&x0, &star);
            let worst_ratio = metrics
                .iter()
                .filter(|m| m.index > 0.0)
                .map(|m| m.max_subopt / flow::flow_convex_bound(m.index, s.spectrum.lambda2, b, dist0_sq))
                .fold(f64::NEG_INFINITY, f64::max);
            Some(BoundCheck { b_constant: b, dist0_sq, ok: worst_ratio <= 1.0, worst_ratio })
        }
        _ => None,
    };

    Ok(FlowOutcome {
        schedule: *schedule,
        step: h,
        t0: traj.t0,
        t_end: flow_cfg.t_end,
        steps: traj.steps,
        fit,
        lyapunov_check,
        lyapunov_status,
        bound_check,
        final_sample: metrics.last().expect("trajectory has samples").clone(),
        metrics,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowReport {
    pub name: String,
    pub command: &'static str,
    pub seeds: Seeds,
    pub graph: Topology,
    pub edge_weight: f64,
    pub problem: ProblemSpec,
    pub system: SystemSummary,
    pub init: InitConfig,
    pub flow: FlowOutcome,
}

pub fn flow_experiment(cfg: &ExperimentConfig) -> Result<FlowReport, CliError> {
    let flow_cfg = cfg
        .flow
        .as_ref()
        .ok_or_else(|| CliError::Config("flow command needs a \"flow\" section".into()))?;
    let setup = Setup::from_config(cfg)?;
    let schedule = resolve_schedule(&flow_cfg.schedule, &setup, cfg.epsilon)?;
    let flow = run_flow(&schedule, flow_cfg, &setup, &run_options(cfg)).map_err(|e| e.context("flow"))?;
    Ok(FlowReport {
        name: cfg.name.clone(),
        command: "flow",
        seeds: cfg.seeds(),
        graph: cfg.graph,
        edge_weight: cfg.edge_weight,
        problem: cfg.problem,
        system: setup.summary(),
        init: cfg.init.clone(),
        flow,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Kappa,
    Epsilon,
    R,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Kappa => "kappa",
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::R => "r",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: &'static str,
    pub value: f64,
    pub n: usize,
    pub kappa: f64,
    pub iterations_to_epsilon: Option<f64>,
    pub exponent: Option<f64>,
    pub target_exponent: Option<f64>,
    pub r_squared: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub name: String,
    pub command: &'static str,
    pub axis: SweepAxis,
    pub note: &'static str,
    pub seeds: Seeds,
    pub graph: Topology,
    pub problem: ProblemSpec,
    pub init: InitConfig,
    pub epsilon: f64,
    pub algorithm: Option<String>,
    pub systems: Vec<SystemSummary>,
    pub specs: Vec<Option<AlgorithmSpec>>,
    pub rows: Vec<SweepRow>,
    /// κ axis: slope of log iterations against log κ. ε axis: slope against
    /// log(1/ε).
    pub summary_exponent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary_error: Option<String>,
}

fn sweep_entry(cfg: &ExperimentConfig) -> AlgorithmEntry {
    cfg.algorithms.first().cloned().unwrap_or(AlgorithmEntry {
        kind: "dngd_sc".into(),
        params: None,
        label: None,
    })
}

/// One iterations-to-ε measurement.
fn iterations_row(
    axis: SweepAxis,
    value: f64,
    setup: &Setup,
    entry: &AlgorithmEntry,
    cfg: &ExperimentConfig,
    epsilon: f64,
) -> Result<(SweepRow, SystemSummary, AlgorithmSpec), CliError> {
    let r = resolve(entry, setup, epsilon)?;
    let opts = RunOptions { stop_below: Some(epsilon), ..run_options(cfg) };
    let record = alg::run(&r.spec, &setup.graph, &setup.problem, &setup.optimum, &opts)
        .map_err(|e| CliError::from(e).context(&format!("{} = {value}", axis.name())))?;
    let sys = setup.summary();
    let hit = record.first_below(epsilon, |m| m.max_subopt).map(|m| m.index);
    let row = SweepRow {
        axis: axis.name(),
        value,
        n: sys.n,
        kappa: sys.kappa,
        iterations_to_epsilon: hit,
        exponent: None,
        target_exponent: None,
        r_squared: None,
        error: hit.is_none().then(|| format!("ε = {epsilon} not reached within {} iterations", cfg.iterations)),
    };
    Ok((row, sys, r.spec))
}

pub fn sweep_experiment(cfg: &ExperimentConfig, axis: SweepAxis, pool: &ThreadPool) -> Result<SweepReport, CliError> {
    let sweep = cfg.sweep.clone().unwrap_or_default();
    let missing = || CliError::Config(format!("sweep over {} needs a non-empty \"sweep.{}\" list", axis.name(), axis.name()));
    let entry = sweep_entry(cfg);
    let mut report = SweepReport {
        name: cfg.name.clone(),
        command: "sweep",
        axis,
        note: COMM_NOTE,
        seeds: cfg.seeds(),
        graph: cfg.graph,
        problem: cfg.problem,
        init: cfg.init.clone(),
        epsilon: cfg.epsilon,
        algorithm: None,
        systems: Vec::new(),
        specs: Vec::new(),
        rows: Vec::new(),
        summary_exponent: None,
        summary_error: None,
    };
    let results: Vec<(SweepRow, SystemSummary, Option<AlgorithmSpec>)> = match axis {
        SweepAxis::Kappa => {
            let ns = sweep.kappa.filter(|v| !v.is_empty()).ok_or_else(missing)?;
            report.algorithm = Some(entry.label().to_string());
            collect(pool.install(|| {
                ns.par_iter()
                    .map(|&n| {
                        let setup = Setup::new(cfg.graph.with_node_count(n), cfg.edge_weight, &cfg.problem)?;
                        iterations_row(axis, n as f64, &setup, &entry, cfg, cfg.epsilon).map(|(r, s, a)| (r, s, Some(a)))
                    })
                    .collect()
            }))?
        }
        SweepAxis::Epsilon => {
            let eps = sweep.epsilon.filter(|v| !v.is_empty()).ok_or_else(missing)?;
            report.algorithm = Some(entry.label().to_string());
            let setup = Setup::from_config(cfg)?;
            collect(pool.install(|| {
                eps.par_iter()
                    .map(|&e| iterations_row(axis, e, &setup, &entry, cfg, e).map(|(r, s, a)| (r, s, Some(a))))
                    .collect()
            }))?
        }
        SweepAxis::R => {
            let rs = sweep.r.filter(|v| !v.is_empty()).ok_or_else(missing)?;
            let flow_cfg = cfg
                .flow
                .as_ref()
                .ok_or_else(|| CliError::Config("r sweep needs a \"flow\" section for t_end and step".into()))?;
            let setup = Setup::from_config(cfg)?;
            let opts = run_options(cfg);
            collect(pool.install(|| {
                rs.par_iter()
                    .map(|&r| {
                        let schedule = CoefficientSchedule::convex(r)?;
                        let out = run_flow(&schedule, flow_cfg, &setup, &opts).map_err(|e| e.context(&format!("r = {r}")))?;
                        let sys = setup.summary();
                        let (exponent, r_squared, error) = match &out.fit {
                            FitOutcome::Fit(f) => (Some(f.value), Some(f.r_squared), None),
                            FitOutcome::Failed { error } => (None, None, Some(error.clone())),
                        };
                        let row = SweepRow {
                            axis: axis.name(),
                            value: r,
                            n: sys.n,
                            kappa: sys.kappa,
                            iterations_to_epsilon: None,
                            exponent,
                            target_exponent: Some(-(3.0 - r)),
                            r_squared,
                            error,
                        };
                        Ok((row, sys, None))
                    })
                    .collect()
            }))?
        }
    };
    for (row, sys, spec) in results {
        report.rows.push(row);
        report.systems.push(sys);
        report.specs.push(spec);
    }

    let reached: Vec<&SweepRow> = report.rows.iter().filter(|r| r.iterations_to_epsilon.is_some()).collect();
    let summary = match axis {
        SweepAxis::Kappa => {
            let pts: Vec<(f64, f64)> = reached.iter().map(|r| (r.kappa, r.iterations_to_epsilon.unwrap())).collect();
            Some(analysis::kappa_sweep_summary(&pts).map_err(|e| e.to_string()))
        }
        SweepAxis::Epsilon => {
            let (xs, ys): (Vec<f64>, Vec<f64>) = reached
                .iter()
                .map(|r| ((1.0 / r.value).ln(), r.iterations_to_epsilon.unwrap().ln()))
                .unzip();
            Some(if xs.len() >= 2 {
                Ok(analysis::linear_regression(&xs, &ys).0)
            } else {
                Err(format!("need at least 2 reached ε values, got {}", xs.len()))
            })
        }
        SweepAxis::R => None,
    };
    match summary {
        Some(Ok(v)) => report.summary_exponent = Some(v),
        Some(Err(e)) => report.summary_error = Some(e),
        None => {}
    }
    Ok(report)
}
