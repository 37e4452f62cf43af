//! Dense-matrix reference implementations checked against the edge-wise
//! library code.

use nalgebra::{DMatrix, DVector};

use dngd::algorithms::{self as alg, AlgorithmSpec, IterState, RunOptions};
use dngd::analysis;
use dngd::flow::{self, CoefficientSchedule, FlowState};
use dngd::objectives::{least_squares, random_least_squares, random_logistic};
use dngd::{build_graph, centralized_optimum, Graph, Problem, ProblemInstance, Topology};

fn dense_laplacian(g: &Graph) -> DMatrix<f64> {
    let n = g.n();
    let mut l = DMatrix::zeros(n, n);
    for &(i, j, w) in g.edges() {
        l[(i, j)] -= w;
        l[(j, i)] -= w;
        l[(i, i)] += w;
        l[(j, j)] += w;
    }
    l
}

/// `ℒ ⊗ I_d`.
fn kron_laplacian(g: &Graph, d: usize) -> DMatrix<f64> {
    dense_laplacian(g).kronecker(&DMatrix::identity(d, d))
}

/// Per-agent `(H_i, b_i)` with `f_i(x) = ‖H_iᵀx − b_i‖²`.
fn ls_data(p: &Problem) -> Vec<(DMatrix<f64>, DVector<f64>)> {
    match p.to_instance() {
        ProblemInstance::LeastSquares { d, data, .. } => data
            .h
            .iter()
            .zip(&data.b)
            .map(|(h, b)| {
                let m = b.len();
                (DMatrix::from_fn(d, m, |r, c| h[r][c]), DVector::from_column_slice(b))
            })
            .collect(),
        ProblemInstance::Logistic { .. } => panic!("least-squares instance expected"),
    }
}

fn dense_grad(p: &Problem, x: &DVector<f64>) -> DVector<f64> {
    let d = p.d();
    let mut out = DVector::zeros(x.len());
    match p.to_instance() {
        ProblemInstance::LeastSquares { .. } => {
            for (i, (h, b)) in ls_data(p).iter().enumerate() {
                let xi = x.rows(i * d, d).into_owned();
                let gi = 2.0 * h * (h.transpose() * xi - b);
                out.rows_mut(i * d, d).copy_from(&gi);
            }
        }
        ProblemInstance::Logistic { data, .. } => {
            for (i, samples) in data.samples.iter().enumerate() {
                let xi = x.rows(i * d, d).into_owned();
                let mut gi = DVector::zeros(d);
                for s in samples {
                    let a = DVector::from_column_slice(&s.a);
                    let z = -s.y * a.dot(&xi);
                    gi += a * (-s.y / (1.0 + (-z).exp()));
                }
                out.rows_mut(i * d, d).copy_from(&gi);
            }
        }
    }
    out
}

fn dense_value(p: &Problem, x: &DVector<f64>) -> f64 {
    let d = p.d();
    match p.to_instance() {
        ProblemInstance::LeastSquares { .. } => ls_data(p)
            .iter()
            .enumerate()
            .map(|(i, (h, b))| (h.transpose() * x.rows(i * d, d) - b).norm_squared())
            .sum(),
        ProblemInstance::Logistic { data, .. } => data
            .samples
            .iter()
            .enumerate()
            .map(|(i, samples)| {
                samples
                    .iter()
                    .map(|s| (1.0 + (-s.y * DVector::from_column_slice(&s.a).dot(&x.rows(i * d, d))).exp()).ln())
                    .sum::<f64>()
            })
            .sum(),
    }
}

fn vecd(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn assert_close(a: &[f64], b: &DVector<f64>, rel: f64) {
    let diff = (vecd(a) - b).norm();
    assert!(diff <= rel * b.norm().max(1.0), "difference {diff:.3e} (reference norm {:.3e})", b.norm());
}

fn sample_point(len: usize, salt: f64) -> Vec<f64> {
    (0..len).map(|i| ((i as f64 + 1.0) * 0.917 + salt).sin() * 1.5).collect()
}

fn problems() -> Vec<(Graph, Problem)> {
    vec![
        (build_graph(Topology::Ring { n: 6 }, 1.0).unwrap(), random_least_squares(6, 3, 2, 4, false).unwrap()),
        (
            build_graph(Topology::RandomGnp { n: 7, p: 0.5, seed: 3 }, 0.7).unwrap(),
            random_logistic(7, 4, 4, 5).unwrap(),
        ),
        (build_graph(Topology::Grid { rows: 2, cols: 3 }, 1.3).unwrap(), random_least_squares(6, 2, 3, 6, true).unwrap()),
    ]
}

#[test]
fn spectrum_matches_dense_eigensolver() {
    let topologies = [
        Topology::RandomGnp { n: 12, p: 0.3, seed: 1 },
        Topology::RandomGnp { n: 9, p: 0.6, seed: 2 },
        Topology::Grid { rows: 3, cols: 4 },
        Topology::Star { n: 8 },
        Topology::Complete { n: 6 },
    ];
    for t in topologies {
        for w in [1.0, 0.35] {
            let g = build_graph(t, w).unwrap();
            let sp = g.spectrum().unwrap();
            let mut reference: Vec<f64> = dense_laplacian(&g).symmetric_eigen().eigenvalues.iter().copied().collect();
            reference.sort_by(f64::total_cmp);
            for (a, b) in sp.eigenvalues.iter().zip(&reference) {
                assert!((a - b).abs() <= 1e-10 * sp.lambda_n.max(1.0), "{t:?}: {a} vs {b}");
            }
            assert!((sp.kappa - reference[g.n() - 1] / reference[1]).abs() <= 1e-9 * sp.kappa);
        }
    }
}

#[test]
fn stacked_gradient_and_value_match_dense() {
    for (_, p) in problems() {
        let x = sample_point(p.n() * p.d(), 0.3);
        assert_close(&p.stacked_grad(&x).unwrap(), &dense_grad(&p, &vecd(&x)), 1e-12);
        let v = p.stacked_value(&x).unwrap();
        assert!((v - dense_value(&p, &vecd(&x))).abs() <= 1e-12 * v.abs().max(1.0));
    }
}

#[test]
fn flow_rhs_matches_dense() {
    for (g, p) in problems() {
        let len = p.n() * p.d();
        let s = FlowState { t: 2.5, position: sample_point(len, 0.1), velocity: sample_point(len, 1.7) };
        let kl = kron_laplacian(&g, p.d());
        for sched in [CoefficientSchedule::constant(0.8, 0.3).unwrap(), CoefficientSchedule::convex(2.4).unwrap()] {
            let (alpha, beta) = (sched.alpha(s.t), sched.beta(s.t));
            let (x, v) = (vecd(&s.position), vecd(&s.velocity));
            let expected = -alpha * &v - &kl * &x - beta * dense_grad(&p, &x);
            let (dx, dv) = flow::flow_rhs(&sched, &g, &p, &s).unwrap();
            assert_eq!(dx, s.velocity);
            assert_close(&dv, &expected, 1e-12);
        }
    }
}

#[test]
fn theta_and_gradient_match_dense() {
    for (g, p) in problems() {
        let x = vecd(&sample_point(p.n() * p.d(), 0.9));
        let kl = kron_laplacian(&g, p.d());
        for beta in [0.0, 0.2, 5.0] {
            let expected = 0.5 * x.dot(&(&kl * &x)) + beta * dense_value(&p, &x);
            let got = flow::theta_beta(&g, &p, x.as_slice(), beta).unwrap();
            assert!((got - expected).abs() <= 1e-11 * expected.abs().max(1.0));
            let grad = flow::theta_beta_grad(&g, &p, x.as_slice(), beta).unwrap();
            assert_close(&grad, &(&kl * &x + beta * dense_grad(&p, &x)), 1e-12);
        }
    }
}

#[test]
fn dngd_steps_match_dense_recursion() {
    for (g, p) in problems() {
        let (len, d) = (p.n() * p.d(), p.d());
        let kl = kron_laplacian(&g, d);
        let x0 = sample_point(len, 0.4);
        let (eta, alpha, beta) = (0.05, 0.9, 0.4);
        let a = alpha * f64::sqrt(eta);
        let m = (2.0 * a - a * a) / (2.0 * a + a * a);

        let mut s = IterState::initial(x0.clone());
        let (mut x, mut xp) = (vecd(&x0), vecd(&x0));
        for _ in 0..15 {
            s = alg::dngd_sc_step(&s, &g, &p, eta, alpha, beta).unwrap();
            let y = &x + m * (&x - &xp);
            let next = &y - eta * (&kl * &y) - eta * beta * dense_grad(&p, &y);
            xp = std::mem::replace(&mut x, next);
            assert_close(&s.x, &x, 1e-11);
        }

        let mut s = IterState::initial(x0.clone());
        let (mut x, mut xp) = (vecd(&x0), vecd(&x0));
        for k in 0..15 {
            s = alg::dngd_c_step(&s, &g, &p, eta).unwrap();
            let kf = k as f64;
            let y = &x + ((kf - 1.0) / (kf + 1.0)) * (&x - &xp);
            let next = &y - eta * (&kl * &y) - (eta.sqrt() / (kf + 1.0)) * dense_grad(&p, &y);
            xp = std::mem::replace(&mut x, next);
            assert_close(&s.x, &x, 1e-11);
            // stored extrapolation is the next iteration's ỹ
            let kn = kf + 1.0;
            assert_close(&s.y, &(&x + ((kn - 1.0) / (kn + 1.0)) * (&x - &xp)), 1e-11);
        }
    }
}

#[test]
fn lyapunov_vk_matches_formula() {
    for (g, p) in problems() {
        let opt = centralized_optimum(&p, 1e-12).unwrap();
        let eta = alg::dngd_c_stepsize(&g.spectrum().unwrap(), &p);
        let kl = kron_laplacian(&g, p.d());
        let star = vecd(&(0..p.n()).flat_map(|_| opt.x_star.clone()).collect::<Vec<_>>());
        let mut s = IterState::initial(sample_point(p.n() * p.d(), 2.2));
        for _ in 0..8 {
            s = alg::dngd_c_step(&s, &g, &p, eta).unwrap();
            let k = s.k as f64;
            let (x, y) = (vecd(&s.x), vecd(&s.y));
            let expected = 0.5 * eta * k * k * x.dot(&(&kl * &x))
                + eta.sqrt() * k * (dense_value(&p, &x) - opt.f_star)
                + 0.5 * ((k + 1.0) * &y - k * &x - &star).norm_squared();
            let got = analysis::lyapunov_vk(&s, &g, &p, eta, &opt.x_star, opt.f_star).unwrap();
            assert!((got - expected).abs() <= 1e-10 * expected.abs().max(1.0), "{got} vs {expected}");
        }
    }
}

#[test]
fn least_squares_optimum_matches_normal_equations() {
    let p = random_least_squares(5, 3, 2, 9, false).unwrap();
    let data = ls_data(&p);
    let mut a = DMatrix::zeros(3, 3);
    let mut rhs = DVector::zeros(3);
    for (h, b) in &data {
        a += h * h.transpose();
        rhs += h * b;
    }
    let x = a.lu().solve(&rhs).unwrap();
    let opt = centralized_optimum(&p, 1e-12).unwrap();
    assert_close(&opt.x_star, &x, 1e-9);
    assert!((opt.f_star - p.value(x.as_slice())).abs() <= 1e-9 * opt.f_star.abs().max(1.0));
}

#[test]
fn extra_reaches_consistent_optimum() {
    let g = build_graph(Topology::Ring { n: 4 }, 1.0).unwrap();
    let p = random_least_squares(4, 2, 2, 1, true).unwrap();
    let opt = centralized_optimum(&p, 1e-12).unwrap();
    let ln = g.spectrum().unwrap().lambda_n;
    let spec = AlgorithmSpec::Extra { mixing: 0.5 / ln, gamma: 0.2 / p.lipschitz() };
    let rec = alg::run(&spec, &g, &p, &opt, &RunOptions { iters: 3000, sample_stride: 100, ..RunOptions::default() }).unwrap();
    assert!(rec.last().max_subopt < 1e-9, "{}", rec.last().max_subopt);
}

/// Brute-force minimization of Θ_β over ℝ² by coarse grid then local
/// refinement, for `f₁ = x²`, `f₂ = (x − 2)²` on a single edge.
#[test]
fn d_constant_matches_grid_oracle() {
    let g = build_graph(Topology::Path { n: 2 }, 1.0).unwrap();
    let p = least_squares(vec![vec![vec![1.0]], vec![vec![1.0]]], vec![vec![0.0], vec![2.0]]).unwrap();
    let grid = [0.1, 0.5, 1.0, 3.0];
    let theta = |x: f64, y: f64, beta: f64| 0.5 * (x - y).powi(2) + beta * (x * x + (y - 2.0).powi(2));
    let mut worst: f64 = 0.0;
    for &beta in &grid {
        let (mut cx, mut cy, mut step): (f64, f64, f64) = (1.0, 1.0, 0.05);
        let mut span: f64 = 1.5;
        while step > 1e-8 {
            let mut best = (f64::INFINITY, cx, cy);
            let count = (span / step).round() as i64;
            for i in -count..=count {
                for j in -count..=count {
                    let (x, y) = (cx + i as f64 * step, cy + j as f64 * step);
                    let v = theta(x, y, beta);
                    if v < best.0 {
                        best = (v, x, y);
                    }
                }
            }
            (cx, cy) = (best.1, best.2);
            span = 4.0 * step;
            step /= 10.0;
        }
        worst = worst.max(cx * cx + (cy - 2.0).powi(2));
    }
    let l = p.lipschitz();
    assert_eq!(l, 2.0);
    let oracle = 2.0 * 2.0 * l * l * worst;
    let got = alg::estimate_d_constant(&g, &p, &grid).unwrap();
    assert!(got > 0.0);
    assert!((got - oracle).abs() <= 1e-6 * oracle, "{got} vs {oracle}");
}
