//! Built-in invariant suite behind `verify`.

use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use dngd::algorithms::{self as alg, AlgorithmSpec, RunOptions};
use dngd::analysis;
use dngd::flow::{self, CoefficientSchedule, FlowState};
use dngd::objectives::{least_squares, random_least_squares, random_logistic};
use dngd::{build_graph, centralized_optimum, linalg, Graph, Problem, Topology};

use crate::CliError;

/// Soft budget; exceeding it only warns.
pub const TIME_BUDGET: Duration = Duration::from_secs(120);

pub const GRADIENT_TOLERANCE: f64 = 1e-6;
pub const SPECTRUM_TOLERANCE: f64 = 1e-10;
pub const RK4_RATIO_RANGE: (f64, f64) = (12.0, 20.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Goldens {
    pub spectra: Vec<SpectrumGolden>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumGolden {
    pub topology: Topology,
    pub eigenvalues: Vec<f64>,
}

impl Default for Goldens {
    fn default() -> Self {
        let g = |topology, eigenvalues: &[f64]| SpectrumGolden { topology, eigenvalues: eigenvalues.to_vec() };
        Goldens {
            spectra: vec![
                g(Topology::Complete { n: 4 }, &[0.0, 4.0, 4.0, 4.0]),
                g(Topology::Ring { n: 4 }, &[0.0, 2.0, 2.0, 4.0]),
                g(Topology::Path { n: 3 }, &[0.0, 1.0, 3.0]),
            ],
        }
    }
}

impl Goldens {
    pub fn load(path: &Path) -> Result<Goldens, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read goldens {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("goldens line {}, column {}: {e}", e.line(), e.column())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: impl Into<String>, r: Result<String, String>) -> CheckResult {
    let name = name.into();
    match r {
        Ok(detail) => CheckResult { name, passed: true, detail },
        Err(detail) => CheckResult { name, passed: false, detail },
    }
}

fn ok_if(cond: bool, detail: String) -> Result<String, String> {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn s(e: dngd::Error) -> String {
    e.to_string()
}

/// Largest relative error of central differences against `grad_i`, with
/// step `1e-5·(1 + ‖x‖)`.
pub fn gradient_error(p: &Problem, points: &[Vec<f64>]) -> f64 {
    let d = p.d();
    let mut worst: f64 = 0.0;
    for x in points {
        let h = 1e-5 * (1.0 + linalg::norm(x));
        for i in 0..p.n() {
            let g = p.grad_i(i, x);
            let fd: Vec<f64> = (0..d)
                .map(|c| {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[c] += h;
                    xm[c] -= h;
                    (p.value_i(i, &xp) - p.value_i(i, &xm)) / (2.0 * h)
                })
                .collect();
            let err = linalg::norm(&linalg::sub(&fd, &g)) / linalg::norm(&g).max(1.0);
            worst = worst.max(err);
        }
    }
    worst
}

fn probe_points(d: usize, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|j| (0..d).map(|c| ((j * d + c) as f64 * 0.731 + 0.2).sin() * (1.0 + j as f64)).collect())
        .collect()
}

fn gradient_checks() -> Vec<CheckResult> {
    let cases: [(&str, dngd::Result<Problem>); 2] = [
        ("gradient:least_squares", random_least_squares(4, 3, 3, 11, false)),
        ("gradient:logistic", random_logistic(4, 3, 4, 12)),
    ];
    cases
        .into_iter()
        .map(|(name, p)| {
            check(
                name,
                p.map_err(s).and_then(|p| {
                    let err = gradient_error(&p, &probe_points(p.d(), 5));
                    ok_if(err <= GRADIENT_TOLERANCE, format!("max relative error {err:.2e}"))
                }),
            )
        })
        .collect()
}

fn spectrum_checks(goldens: &Goldens) -> Vec<CheckResult> {
    goldens
        .spectra
        .iter()
        .map(|gold| {
            let name = format!("spectrum:{}", serde_json::to_string(&gold.topology).unwrap_or_default());
            let r = build_graph(gold.topology, 1.0).and_then(|g| g.spectrum()).map_err(s).and_then(|sp| {
                if sp.eigenvalues.len() != gold.eigenvalues.len() {
                    return Err(format!("{} eigenvalues, golden has {}", sp.eigenvalues.len(), gold.eigenvalues.len()));
                }
                let dev = sp
                    .eigenvalues
                    .iter()
                    .zip(&gold.eigenvalues)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                ok_if(dev <= SPECTRUM_TOLERANCE, format!("max deviation {dev:.2e} from {:?}", gold.eigenvalues))
            });
            check(name, r)
        })
        .collect()
}

/// Error ratio of RK4 at steps `h` and `h/2` on `ẍ + 2ẋ + x = 0`.
pub fn rk4_order_ratio() -> dngd::Result<f64> {
    let p = least_squares(vec![vec![vec![0.5f64.sqrt()]]], vec![vec![0.0]])?;
    let g = Graph::single_agent();
    let sched = CoefficientSchedule::constant(2.0, 1.0)?;
    let t_end: f64 = 2.0;
    let exact = (1.0 + t_end) * (-t_end).exp();
    let err = |h: f64| -> dngd::Result<f64> {
        let traj = flow::integrate(&sched, &g, &p, &FlowState::at_rest(vec![1.0]), t_end, h, usize::MAX)?;
        Ok((traj.samples.last().expect("final state").position[0] - exact).abs())
    };
    Ok(err(0.1)? / err(0.05)?)
}

fn dngd_c_canned() -> dngd::Result<(Graph, alg::RunRecord)> {
    let g = build_graph(Topology::Ring { n: 5 }, 1.0)?;
    let p = random_logistic(5, 3, 4, 3)?;
    let opt = centralized_optimum(&p, 1e-10)?;
    let eta = alg::dngd_c_stepsize(&g.spectrum()?, &p);
    let opts = RunOptions { iters: 300, seed_init: 1, ..RunOptions::default() };
    let rec = alg::run(&AlgorithmSpec::DngdC { eta }, &g, &p, &opt, &opts)?;
    Ok((g, rec))
}

fn dngd_c_checks() -> Vec<CheckResult> {
    match dngd_c_canned() {
        Ok((g, rec)) => {
            let v: Vec<f64> = rec.metrics.iter().filter_map(|m| m.lyapunov).collect();
            let slack = analysis::INVARIANT_SLACK * v[0].abs().max(1.0);
            let mono = analysis::check_monotone(&v, slack).map_err(s).and_then(|c| {
                ok_if(c.ok, format!("worst increase {:.3e} at sample {}", c.worst_violation, c.index))
            });
            let inv = analysis::check_momentum_invariant(&rec, &g).map_err(s).and_then(|c| {
                ok_if(c.ok, format!("worst margin {:.3e} at k = {}", c.worst_margin, c.index))
            });
            vec![check("lyapunov:dngd_c", mono), check("momentum_invariant:dngd_c", inv)]
        }
        Err(e) => vec![
            check("lyapunov:dngd_c", Err(s(e.clone()))),
            check("momentum_invariant:dngd_c", Err(s(e))),
        ],
    }
}

fn flow_lyapunov_check() -> CheckResult {
    let r = (|| -> dngd::Result<analysis::MonotoneCheck> {
        let g = build_graph(Topology::Ring { n: 4 }, 1.0)?;
        let p = random_least_squares(4, 2, 2, 5, false)?;
        let opt = centralized_optimum(&p, 1e-12)?;
        let x0 = alg::initial_point(4, 2, &RunOptions { seed_init: 2, ..RunOptions::default() })?;
        let traj = flow::integrate(&CoefficientSchedule::convex(2.0)?, &g, &p, &FlowState::at_rest(x0), 20.0, 1e-3, 50)?;
        let v = traj
            .samples
            .iter()
            .map(|st| flow::lyapunov_convex(&g, &p, st, 2.0, &opt.x_star, opt.f_star))
            .collect::<dngd::Result<Vec<f64>>>()?;
        analysis::check_monotone(&v, 1e-6 * v[0].abs())
    })();
    check(
        "lyapunov:convex_flow",
        r.map_err(s).and_then(|c| ok_if(c.ok, format!("worst increase {:.3e}", c.worst_violation))),
    )
}

fn coefficient_checks() -> Vec<CheckResult> {
    let mu: f64 = 0.5;
    let etas = [1e-2, 1e-3, 1e-4, 1e-5];
    let round_trip = (|| -> dngd::Result<alg::CoefficientEstimate> {
        let sched = CoefficientSchedule::constant(2.0 * mu.sqrt(), 1.0)?;
        let a = |k: f64, eta: f64| alg::continuous_to_discrete(&sched, eta, k).map(|c| c.0).unwrap_or(f64::NAN);
        let b = |k: f64, eta: f64| alg::continuous_to_discrete(&sched, eta, k).map(|c| c.1).unwrap_or(f64::NAN);
        alg::discrete_to_continuous_check(a, b, 1.0, &etas)
    })();
    let rt = round_trip.map_err(s).and_then(|e| {
        let ea = (e.alpha - 2.0 * mu.sqrt()).abs() / (2.0 * mu.sqrt());
        let eb = (e.beta - 1.0).abs();
        ok_if(ea <= 1e-4 && eb <= 1e-4, format!("relative errors α {ea:.1e}, β {eb:.1e}"))
    });
    let nesterov = alg::discrete_to_continuous_check(
        |_, eta| (1.0 - (mu * eta).sqrt()) / (1.0 + (mu * eta).sqrt()),
        |_, eta| eta,
        1.0,
        &etas,
    )
    .map_err(s)
    .and_then(|e| {
        let ea = (e.alpha - 2.0 * mu.sqrt()).abs() / (2.0 * mu.sqrt());
        ok_if(ea <= 1e-3, format!("α relative error {ea:.1e}"))
    });
    vec![check("coefficients:round_trip", rt), check("coefficients:centralized_nesterov", nesterov)]
}

/// Runs every check in a fixed order.
pub fn run_suite(goldens: &Goldens) -> Vec<CheckResult> {
    let mut out = gradient_checks();
    out.extend(spectrum_checks(goldens));
    out.push(check(
        "rk4:order",
        rk4_order_ratio().map_err(s).and_then(|r| {
            ok_if((RK4_RATIO_RANGE.0..=RK4_RATIO_RANGE.1).contains(&r), format!("error ratio {r:.2}"))
        }),
    ));
    out.extend(dngd_c_checks());
    out.push(flow_lyapunov_check());
    out.extend(coefficient_checks());
    out
}

/// Runs the suite and prints the table; `Err` lists the failed checks.
pub fn verify(goldens: &Goldens, quiet: bool) -> Result<Vec<CheckResult>, CliError> {
    let start = Instant::now();
    let results = run_suite(goldens);
    let elapsed = start.elapsed();
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    if !quiet {
        for r in &results {
            println!("{:<width$}  {}  {}", r.name, if r.passed { "PASS" } else { "FAIL" }, r.detail);
        }
    }
    if elapsed > TIME_BUDGET {
        eprintln!("warning: verify took {:.1} s, over the {} s budget", elapsed.as_secs_f64(), TIME_BUDGET.as_secs());
    }
    let failed: Vec<String> = results.iter().filter(|r| !r.passed).map(|r| r.name.clone()).collect();
    if failed.is_empty() {
        Ok(results)
    } else {
        Err(CliError::Verify(failed))
    }
}
