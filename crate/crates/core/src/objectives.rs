//! Benchmark objective families: distributed least squares and distributed
//! logistic regression, their gradients, smoothness/strong-convexity
//! constants and a centralized oracle for the optimal value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::solver::{self, MinimizeOptions};

/// Per-agent least-squares data: `f_i(x) = ‖H_iᵀx − b_i‖²`.
#[derive(Debug, Clone, PartialEq)]
struct LsAgent {
    /// `d x m` row-major.
    h: Vec<f64>,
    m: usize,
    b: Vec<f64>,
}

/// One labelled sample of a logistic agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledSample {
    pub a: Vec<f64>,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Family {
    LeastSquares(Vec<LsAgent>),
    /// Each agent's objective is the sum over its samples.
    Logistic(Vec<Vec<LabelledSample>>),
}

/// A distributed problem `min Σ_i f_i(x)` over `n` agents in `ℝ^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    n: usize,
    d: usize,
    family: Family,
    lipschitz: f64,
    sum_lipschitz: f64,
    strong_convexity: Option<f64>,
    consistent: bool,
    common_minimizer: Option<Vec<f64>>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OptimumMethod {
    ClosedForm,
    Iterative { tolerance: f64, iterations: usize },
}

/// Centralized optimum of `f = Σ f_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Optimum {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub method: OptimumMethod,
    /// Set when the normal equations were singular and the minimum-norm
    /// solution was reported instead.
    pub degenerate: bool,
}

const RANK_TOL: f64 = 1e-10;

impl Problem {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Uniform per-agent gradient Lipschitz constant `L`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Gradient Lipschitz constant of the sum `f = Σ f_i`.
    pub fn sum_lipschitz(&self) -> f64 {
        self.sum_lipschitz
    }

    /// Strong convexity modulus `μ` of the sum, when it has one.
    pub fn strong_convexity(&self) -> Option<f64> {
        self.strong_convexity
    }

    /// True when every `f_i` is minimized by the same point.
    pub fn is_consistent(&self) -> bool {
        self.consistent
    }

    pub fn common_minimizer(&self) -> Option<&[f64]> {
        self.common_minimizer.as_deref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn kind(&self) -> &'static str {
        match self.family {
            Family::LeastSquares(_) => "least_squares",
            Family::Logistic(_) => "logistic",
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn value_i(&self, i: usize, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.d);
        match &self.family {
            Family::LeastSquares(agents) => {
                let ag = &agents[i];
                (0..ag.m)
                    .map(|c| {
                        let r = (0..self.d).map(|k| ag.h[k * ag.m + c] * x[k]).sum::<f64>() - ag.b[c];
                        r * r
                    })
                    .sum()
            }
            Family::Logistic(agents) => agents[i]
                .iter()
                .map(|s| softplus(-s.y * linalg::dot(&s.a, x)))
                .sum(),
        }
    }

    /// Writes `∇f_i(x)` into `out`.
    pub fn grad_i_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match &self.family {
            Family::LeastSquares(agents) => {
                let ag = &agents[i];
                for c in 0..ag.m {
                    let r = (0..self.d).map(|k| ag.h[k * ag.m + c] * x[k]).sum::<f64>() - ag.b[c];
                    for k in 0..self.d {
                        out[k] += 2.0 * ag.h[k * ag.m + c] * r;
                    }
                }
            }
            Family::Logistic(agents) => {
                for s in &agents[i] {
                    let coeff = -s.y * sigmoid(-s.y * linalg::dot(&s.a, x));
                    linalg::axpy(coeff, &s.a, out);
                }
            }
        }
    }

    pub fn grad_i(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.d];
        self.grad_i_into(i, x, &mut g);
        g
    }

    /// Full objective `f(x) = Σ_i f_i(x)`.
    pub fn value(&self, x: &[f64]) -> f64 {
        (0..self.n).map(|i| self.value_i(i, x)).sum()
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut total = vec![0.0; self.d];
        let mut g = vec![0.0; self.d];
        for i in 0..self.n {
            self.grad_i_into(i, x, &mut g);
            linalg::axpy(1.0, &g, &mut total);
        }
        total
    }

    fn check_stacked(&self, stacked: &[f64]) -> Result<()> {
        if stacked.len() != self.n * self.d {
            return Err(Error::argument(format!(
                "stacked vector has length {}, expected n*d = {}",
                stacked.len(),
                self.n * self.d
            )));
        }
        Ok(())
    }

    /// `f̃(x̃) = Σ_i f_i(x_i)` for a stacked vector.
    pub fn stacked_value(&self, stacked: &[f64]) -> Result<f64> {
        self.check_stacked(stacked)?;
        Ok((0..self.n)
            .map(|i| self.value_i(i, &stacked[i * self.d..(i + 1) * self.d]))
            .sum())
    }

    /// Stacked local gradients `G(x̃) = [∇f_1(x_1); …; ∇f_n(x_n)]`, combined
    /// in fixed agent order. Non-finite entries are reported with the agent.
    pub fn stacked_grad(&self, stacked: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; stacked.len()];
        self.stacked_grad_into(stacked, &mut out)?;
        Ok(out)
    }

    pub fn stacked_grad_into(&self, stacked: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_stacked(stacked)?;
        let d = self.d;
        for i in 0..self.n {
            let block = &mut out[i * d..(i + 1) * d];
            self.grad_i_into(i, &stacked[i * d..(i + 1) * d], block);
            if !linalg::all_finite(block) {
                return Err(Error::NonFinite {
                    agent: i,
                    context: "local gradient".into(),
                });
            }
        }
        Ok(())
    }

    /// Minimizer of a single agent's objective, used for the non-consensus
    /// optimum `X̃*_nc`. Rank-deficient least-squares agents report their
    /// minimum-norm minimizer.
    pub fn local_minimizer(&self, i: usize, tol: f64) -> Result<Vec<f64>> {
        match &self.family {
            Family::LeastSquares(agents) => {
                let (a, rhs) = normal_equations(std::slice::from_ref(&agents[i]), self.d);
                Ok(solve_normal(&a, self.d, &rhs)?.0)
            }
            Family::Logistic(agents) => {
                let lip = agents[i].iter().map(|s| linalg::norm_sq(&s.a)).sum::<f64>() / 4.0;
                let out = solver::nesterov_minimize_accepting(
                    |x| self.value_i(i, x),
                    |x, g| self.grad_i_into(i, x, g),
                    |x, gn| logistic_attained(agents[i].iter(), x, gn),
                    &vec![0.0; self.d],
                    MinimizeOptions {
                        lipschitz: lip.max(f64::MIN_POSITIVE),
                        mu: LOGISTIC_MU_FLOOR * lip,
                        tol,
                        max_iter: ORACLE_MAX_ITER,
                    },
                )?;
                Ok(out.x)
            }
        }
    }

    pub fn to_instance(&self) -> ProblemInstance {
        match &self.family {
            Family::LeastSquares(agents) => ProblemInstance::LeastSquares {
                n: self.n,
                d: self.d,
                data: LeastSquaresData {
                    h: agents
                        .iter()
                        .map(|ag| (0..self.d).map(|k| ag.h[k * ag.m..(k + 1) * ag.m].to_vec()).collect())
                        .collect(),
                    b: agents.iter().map(|ag| ag.b.clone()).collect(),
                    x_common: self.common_minimizer.clone(),
                },
                seed: self.seed,
            },
            Family::Logistic(agents) => ProblemInstance::Logistic {
                n: self.n,
                d: self.d,
                data: LogisticData {
                    samples: agents.clone(),
                },
                seed: self.seed,
            },
        }
    }

    pub fn from_instance(inst: &ProblemInstance) -> Result<Problem> {
        let (p, n, d, seed) = match inst {
            ProblemInstance::LeastSquares { n, d, data, seed } => {
                let p = match &data.x_common {
                    Some(xc) => least_squares_consistent(data.h.clone(), xc.clone())?,
                    None => least_squares(data.h.clone(), data.b.clone())?,
                };
                (p, *n, *d, *seed)
            }
            ProblemInstance::Logistic { n, d, data, seed } => (logistic_samples(data.samples.clone())?, *n, *d, *seed),
        };
        if p.n != n || p.d != d {
            return Err(Error::argument(format!(
                "instance header says n={n}, d={d} but data has n={}, d={}",
                p.n, p.d
            )));
        }
        Ok(Problem { seed, ..p })
    }
}

/// `log(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Logistic function `1 / (1 + e^{-z})` without overflow.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn normal_equations(agents: &[LsAgent], d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = vec![0.0; d * d];
    let mut rhs = vec![0.0; d];
    for ag in agents {
        for r in 0..d {
            for c in 0..d {
                a[r * d + c] += (0..ag.m).map(|j| ag.h[r * ag.m + j] * ag.h[c * ag.m + j]).sum::<f64>();
            }
            rhs[r] += (0..ag.m).map(|j| ag.h[r * ag.m + j] * ag.b[j]).sum::<f64>();
        }
    }
    (a, rhs)
}

/// Returns the solution and whether the system was singular.
fn solve_normal(a: &[f64], d: usize, rhs: &[f64]) -> Result<(Vec<f64>, bool)> {
    match linalg::cholesky_solve(a, d, rhs, RANK_TOL) {
        Some(x) => Ok((x, false)),
        None => Ok((linalg::pseudo_inverse_solve(a, d, rhs, RANK_TOL)?, true)),
    }
}

fn ls_agents(h: Vec<Vec<Vec<f64>>>, b: Vec<Vec<f64>>) -> Result<(Vec<LsAgent>, usize)> {
    if h.is_empty() {
        return Err(Error::argument("least squares needs at least one agent"));
    }
    if h.len() != b.len() {
        return Err(Error::argument(format!("{} H matrices but {} b vectors", h.len(), b.len())));
    }
    let d = h[0].len();
    if d == 0 {
        return Err(Error::argument("H_i must have at least one row"));
    }
    let mut agents = Vec::with_capacity(h.len());
    for (i, (rows, bi)) in h.into_iter().zip(b).enumerate() {
        if rows.len() != d {
            return Err(Error::argument(format!("H_{i} has {} rows, expected d={d}", rows.len())));
        }
        let m = rows[0].len();
        if m == 0 || rows.iter().any(|r| r.len() != m) {
            return Err(Error::argument(format!("H_{i} rows are ragged or empty")));
        }
        if bi.len() != m {
            return Err(Error::argument(format!("b_{i} has length {}, expected {m}", bi.len())));
        }
        if rows.iter().flatten().chain(&bi).any(|v| !v.is_finite()) {
            return Err(Error::argument(format!("agent {i} data is not finite")));
        }
        agents.push(LsAgent {
            h: rows.into_iter().flatten().collect(),
            m,
            b: bi,
        });
    }
    Ok((agents, d))
}

fn ls_problem(agents: Vec<LsAgent>, d: usize, consistent: bool, common: Option<Vec<f64>>) -> Result<Problem> {
    let mut lipschitz: f64 = 0.0;
    for ag in &agents {
        let (a, _) = normal_equations(std::slice::from_ref(ag), d);
        let eig = linalg::symmetric_eigen(&a, d)?;
        lipschitz = lipschitz.max(2.0 * eig.values[d - 1]);
    }
    if !(lipschitz > 0.0) {
        return Err(Error::argument("all H_i are zero; the gradient Lipschitz constant vanishes"));
    }
    let (a, _) = normal_equations(&agents, d);
    let eig = linalg::symmetric_eigen(&a, d)?;
    let (lo, hi) = (eig.values[0], eig.values[d - 1]);
    let strong_convexity = (lo > RANK_TOL * hi).then_some(2.0 * lo);
    Ok(Problem {
        n: agents.len(),
        d,
        family: Family::LeastSquares(agents),
        lipschitz,
        sum_lipschitz: 2.0 * hi,
        strong_convexity,
        consistent,
        common_minimizer: common,
        seed: None,
    })
}

/// Distributed least squares `f_i(x) = ‖H_iᵀx − b_i‖²`.
///
/// `h[i]` holds the `d` rows of `H_i` (each of length `m_i`), `b[i]` has
/// length `m_i`.
pub fn least_squares(h: Vec<Vec<Vec<f64>>>, b: Vec<Vec<f64>>) -> Result<Problem> {
    let (agents, d) = ls_agents(h, b)?;
    ls_problem(agents, d, false, None)
}

/// Least squares with `b_i := H_iᵀ x_common`, so every agent is minimized
/// at `x_common`.
pub fn least_squares_consistent(h: Vec<Vec<Vec<f64>>>, x_common: Vec<f64>) -> Result<Problem> {
    let d = h.first().map(|rows| rows.len()).unwrap_or(0);
    if x_common.len() != d {
        return Err(Error::argument(format!("x_common has length {}, expected d={d}", x_common.len())));
    }
    let b = h
        .iter()
        .map(|rows| {
            let m = rows.first().map(|r| r.len()).unwrap_or(0);
            (0..m)
                .map(|c| rows.iter().zip(&x_common).map(|(r, x)| r.get(c).copied().unwrap_or(0.0) * x).sum())
                .collect()
        })
        .collect();
    let (agents, d) = ls_agents(h, b)?;
    ls_problem(agents, d, true, Some(x_common))
}

/// Distributed logistic regression with one sample per agent:
/// `f_i(x) = log(1 + exp(−y_i xᵀa_i))`.
pub fn logistic(a: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Problem> {
    if a.len() != y.len() {
        return Err(Error::argument(format!("{} feature vectors but {} labels", a.len(), y.len())));
    }
    logistic_samples(a.into_iter().zip(y).map(|(a, y)| vec![LabelledSample { a, y }]).collect())
}

/// Logistic regression where agent `i` sums the losses of `samples[i]`.
pub fn logistic_samples(samples: Vec<Vec<LabelledSample>>) -> Result<Problem> {
    let d = samples
        .iter()
        .flatten()
        .map(|s| s.a.len())
        .next()
        .ok_or_else(|| Error::argument("logistic regression needs at least one sample"))?;
    if d == 0 {
        return Err(Error::argument("feature dimension must be positive"));
    }
    for (i, agent) in samples.iter().enumerate() {
        if agent.is_empty() {
            return Err(Error::argument(format!("agent {i} holds no samples")));
        }
        for s in agent {
            if s.y != 1.0 && s.y != -1.0 {
                return Err(Error::argument(format!("agent {i} has label {}, expected ±1", s.y)));
            }
            if s.a.len() != d || s.a.iter().any(|v| !v.is_finite()) {
                return Err(Error::argument(format!("agent {i} has a malformed feature vector")));
            }
        }
    }
    let lipschitz = samples
        .iter()
        .map(|ag| ag.iter().map(|s| linalg::norm_sq(&s.a)).sum::<f64>() / 4.0)
        .fold(0.0, f64::max);
    if !(lipschitz > 0.0) {
        return Err(Error::argument("all feature vectors are zero; the gradient Lipschitz constant vanishes"));
    }
    let mut scatter = vec![0.0; d * d];
    for s in samples.iter().flatten() {
        for r in 0..d {
            for c in 0..d {
                scatter[r * d + c] += s.a[r] * s.a[c];
            }
        }
    }
    let sum_lipschitz = linalg::symmetric_eigen(&scatter, d)?.values[d - 1] / 4.0;
    Ok(Problem {
        n: samples.len(),
        d,
        family: Family::Logistic(samples),
        lipschitz,
        sum_lipschitz,
        strong_convexity: None,
        consistent: false,
        common_minimizer: None,
        seed: None,
    })
}

/// Strong-convexity floor used by the logistic oracle, relative to the
/// smoothness constant.
pub const LOGISTIC_MU_FLOOR: f64 = 1e-3;

/// Iteration budget of the iterative oracle.
pub const ORACLE_MAX_ITER: usize = 200_000;

/// A logistic stationary point is accepted only when the Newton-step
/// estimate `‖∇f‖/λmin(∇²f)` is below this times `max(1, ‖x‖)`. Along an
/// escaping direction gradient and curvature vanish together, so an
/// unattained infimum never passes.
pub const ATTAINMENT_RATIO: f64 = 1e-6;

fn logistic_attained<'a>(samples: impl Iterator<Item = &'a LabelledSample>, x: &[f64], grad_norm: f64) -> bool {
    let d = x.len();
    let mut hess = vec![0.0; d * d];
    for s in samples {
        let sg = sigmoid(s.y * linalg::dot(&s.a, x));
        let w = sg * (1.0 - sg);
        for r in 0..d {
            for c in 0..d {
                hess[r * d + c] += w * s.a[r] * s.a[c];
            }
        }
    }
    match linalg::symmetric_eigen(&hess, d) {
        Ok(eig) => grad_norm <= ATTAINMENT_RATIO * eig.values[0] * linalg::norm(x).max(1.0),
        Err(_) => false,
    }
}

/// Reference optimum of `f = Σ f_i`.
///
/// Least squares is solved in closed form through the normal equations;
/// logistic regression runs the centralized accelerated method until the
/// gradient norm drops to `tol`. A problem without a minimizer exhausts the
/// budget and returns [`Error::BudgetExhausted`] carrying the best iterate.
pub fn centralized_optimum(p: &Problem, tol: f64) -> Result<Optimum> {
    if !(tol > 0.0) {
        return Err(Error::argument(format!("oracle tolerance must be positive, got {tol}")));
    }
    centralized_optimum_with_budget(p, tol, ORACLE_MAX_ITER)
}

pub fn centralized_optimum_with_budget(p: &Problem, tol: f64, max_iter: usize) -> Result<Optimum> {
    match &p.family {
        Family::LeastSquares(agents) => {
            let (a, rhs) = normal_equations(agents, p.d);
            let (x_star, degenerate) = solve_normal(&a, p.d, &rhs)?;
            let f_star = p.value(&x_star);
            Ok(Optimum {
                x_star,
                f_star,
                method: OptimumMethod::ClosedForm,
                degenerate,
            })
        }
        Family::Logistic(agents) => {
            let out = solver::nesterov_minimize_accepting(
                |x| p.value(x),
                |x, g| {
                    let full = p.grad(x);
                    g.copy_from_slice(&full);
                },
                |x, gn| logistic_attained(agents.iter().flatten(), x, gn),
                &vec![0.0; p.d],
                MinimizeOptions {
                    lipschitz: p.sum_lipschitz,
                    mu: LOGISTIC_MU_FLOOR * p.sum_lipschitz,
                    tol,
                    max_iter,
                },
            )?;
            Ok(Optimum {
                f_star: out.value,
                x_star: out.x,
                method: OptimumMethod::Iterative {
                    tolerance: tol,
                    iterations: out.iterations,
                },
                degenerate: false,
            })
        }
    }
}

/// Wire form of a problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemInstance {
    LeastSquares {
        n: usize,
        d: usize,
        data: LeastSquaresData,
        #[serde(default)]
        seed: Option<u64>,
    },
    Logistic {
        n: usize,
        d: usize,
        data: LogisticData,
        #[serde(default)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeastSquaresData {
    /// `h[i][row][col]`: the `d x m_i` matrix `H_i`.
    pub h: Vec<Vec<Vec<f64>>>,
    pub b: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_common: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticData {
    pub samples: Vec<Vec<LabelledSample>>,
}

/// Recipe for a seeded random problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSpec {
    /// Standard normal `H_i` (`d x samples_per_agent`) and `b_i`, resampled
    /// until `Σ H_i H_iᵀ` has full rank.
    LeastSquares {
        d: usize,
        #[serde(default = "default_ls_samples")]
        samples_per_agent: usize,
        seed: u64,
        #[serde(default)]
        consistent: bool,
    },
    /// Standard normal features with labels drawn from a planted logistic
    /// model; every agent holds samples of both classes.
    Logistic {
        d: usize,
        #[serde(default = "default_logistic_samples")]
        samples_per_agent: usize,
        seed: u64,
    },
}

fn default_ls_samples() -> usize {
    2
}

fn default_logistic_samples() -> usize {
    4
}

impl ProblemSpec {
    pub fn seed(&self) -> u64 {
        match *self {
            ProblemSpec::LeastSquares { seed, .. } | ProblemSpec::Logistic { seed, .. } => seed,
        }
    }

    pub fn generate(&self, n: usize) -> Result<Problem> {
        match *self {
            ProblemSpec::LeastSquares {
                d,
                samples_per_agent,
                seed,
                consistent,
            } => random_least_squares(n, d, samples_per_agent, seed, consistent),
            ProblemSpec::Logistic {
                d,
                samples_per_agent,
                seed,
            } => random_logistic(n, d, samples_per_agent, seed),
        }
    }
}

const GENERATOR_MAX_ATTEMPTS: usize = 100;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn random_least_squares(n: usize, d: usize, m: usize, seed: u64, consistent: bool) -> Result<Problem> {
    if n == 0 || d == 0 || m == 0 {
        return Err(Error::argument("n, d and samples_per_agent must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..GENERATOR_MAX_ATTEMPTS {
        let h: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|_| (0..d).map(|_| (0..m).map(|_| normal(&mut rng)).collect()).collect())
            .collect();
        let p = if consistent {
            let x_common: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
            least_squares_consistent(h, x_common)?
        } else {
            let b = (0..n).map(|_| (0..m).map(|_| normal(&mut rng)).collect()).collect();
            least_squares(h, b)?
        };
        if p.strong_convexity.is_some() {
            return Ok(p.with_seed(seed));
        }
    }
    Err(Error::Construction(format!(
        "could not draw a full-rank least-squares instance (n={n}, d={d}, m={m}, seed={seed})"
    )))
}

pub fn random_logistic(n: usize, d: usize, m: usize, seed: u64) -> Result<Problem> {
    if n == 0 || d == 0 || m < 2 {
        return Err(Error::argument("logistic generator needs n, d > 0 and at least 2 samples per agent"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planted: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
    for _ in 0..GENERATOR_MAX_ATTEMPTS {
        let mut agents = Vec::with_capacity(n);
        for _ in 0..n {
            let mut samples: Vec<LabelledSample>;
            loop {
                samples = (0..m)
                    .map(|_| {
                        let a: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
                        let prob = sigmoid(linalg::dot(&planted, &a));
                        let y = if rng.random::<f64>() < prob { 1.0 } else { -1.0 };
                        LabelledSample { a, y }
                    })
                    .collect();
                let pos = samples.iter().any(|s| s.y > 0.0);
                let neg = samples.iter().any(|s| s.y < 0.0);
                if pos && neg {
                    break;
                }
            }
            agents.push(samples);
        }
        let p = logistic_samples(agents)?;
        // separable data has no finite minimizer; draw again
        if centralized_optimum(&p, 1e-8).is_ok() {
            return Ok(p.with_seed(seed));
        }
    }
    Err(Error::Construction(format!(
        "could not draw a logistic instance with a finite minimizer (n={n}, d={d}, seed={seed})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_quadratic() {
        let p = least_squares(vec![vec![vec![1.0]]], vec![vec![3.0]]).unwrap();
        assert_eq!(p.value(&[3.0]), 0.0);
        assert_eq!(p.value(&[1.0]), 4.0);
        let opt = centralized_optimum(&p, 1e-12).unwrap();
        assert!((opt.x_star[0] - 3.0).abs() < 1e-14);
        assert!(opt.f_star.abs() < 1e-24);
        assert_eq!(opt.method, OptimumMethod::ClosedForm);
    }

    #[test]
    fn two_agent_least_squares_optimum() {
        let p = least_squares(vec![vec![vec![1.0]], vec![vec![1.0]]], vec![vec![0.0], vec![2.0]]).unwrap();
        let opt = centralized_optimum(&p, 1e-12).unwrap();
        assert!((opt.x_star[0] - 1.0).abs() < 1e-14);
        assert!((opt.f_star - 2.0).abs() < 1e-14);
        assert_eq!(p.lipschitz(), 2.0);
        assert_eq!(p.strong_convexity(), Some(4.0));
        assert!(!p.is_consistent());
    }

    #[test]
    fn consistent_construction_zeroes_every_agent() {
        let h = vec![
            vec![vec![1.0, 0.5], vec![-0.3, 2.0]],
            vec![vec![0.2, 0.0], vec![1.0, 1.0]],
            vec![vec![-1.0, 0.7], vec![0.4, -0.2]],
        ];
        let p = least_squares_consistent(h, vec![1.0, -1.0]).unwrap();
        assert!(p.is_consistent());
        for i in 0..3 {
            assert!(p.value_i(i, &[1.0, -1.0]).abs() < 1e-28);
        }
        let opt = centralized_optimum(&p, 1e-12).unwrap();
        assert!(opt.f_star.abs() < 1e-12);
    }

    #[test]
    fn logistic_by_hand() {
        let p = logistic(vec![vec![1.0]], vec![1.0]).unwrap();
        assert!((p.value(&[0.0]) - 2f64.ln()).abs() < 1e-15);
        assert!((p.grad(&[0.0])[0] + 0.5).abs() < 1e-15);
        assert_eq!(p.lipschitz(), 0.25);
        assert!(p.strong_convexity().is_none());
    }

    #[test]
    fn logistic_zero_features_are_constant() {
        let p = logistic(vec![vec![0.0, 0.0], vec![1.0, 2.0]], vec![1.0, -1.0]).unwrap();
        for x in [[0.0, 0.0], [5.0, -3.0]] {
            assert!((p.value_i(0, &x) - 2f64.ln()).abs() < 1e-15);
            assert_eq!(p.grad_i(0, &x), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn logistic_is_overflow_safe() {
        let p = logistic(vec![vec![1.0]], vec![1.0]).unwrap();
        assert!((p.value(&[-1000.0]) - 1000.0).abs() < 1e-9);
        assert!(p.value(&[1000.0]) >= 0.0);
        assert!((p.grad(&[-1000.0])[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(matches!(logistic(vec![vec![1.0]], vec![0.5]), Err(Error::Argument(_))));
        assert!(matches!(
            least_squares(vec![vec![vec![1.0]], vec![vec![1.0], vec![2.0]]], vec![vec![0.0], vec![0.0]]),
            Err(Error::Argument(_))
        ));
        assert!(least_squares(vec![vec![vec![1.0, 2.0]]], vec![vec![0.0]]).is_err());
        assert!(centralized_optimum(&logistic(vec![vec![1.0]], vec![1.0]).unwrap(), 0.0).is_err());
    }

    #[test]
    fn unattained_logistic_infimum_exhausts_budget() {
        let p = logistic(vec![vec![1.0]], vec![1.0]).unwrap();
        match centralized_optimum_with_budget(&p, 1e-10, 20_000) {
            Err(Error::BudgetExhausted { best_point, best_value, .. }) => {
                assert!(best_point[0] > 5.0);
                assert!(best_value < 1e-2);
            }
            other => panic!("expected budget exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn singular_normal_equations_flag_degeneracy() {
        // Both agents only see the first coordinate.
        let p = least_squares(
            vec![vec![vec![1.0], vec![0.0]], vec![vec![1.0], vec![0.0]]],
            vec![vec![1.0], vec![3.0]],
        )
        .unwrap();
        let opt = centralized_optimum(&p, 1e-12).unwrap();
        assert!(opt.degenerate);
        assert!((opt.x_star[0] - 2.0).abs() < 1e-12 && opt.x_star[1].abs() < 1e-12);
        assert!(p.strong_convexity().is_none());
    }

    #[test]
    fn generators_are_deterministic() {
        let spec = ProblemSpec::LeastSquares { d: 2, samples_per_agent: 2, seed: 11, consistent: false };
        assert_eq!(spec.generate(5).unwrap(), spec.generate(5).unwrap());
        let spec = ProblemSpec::Logistic { d: 3, samples_per_agent: 4, seed: 5 };
        let p = spec.generate(4).unwrap();
        assert_eq!(p, spec.generate(4).unwrap());
        assert_eq!(p.seed(), Some(5));
    }

    #[test]
    fn instance_round_trip() {
        let p = random_least_squares(3, 2, 2, 9, true).unwrap();
        let text = serde_json::to_string(&p.to_instance()).unwrap();
        assert!(text.contains("\"kind\":\"least_squares\""));
        let back = Problem::from_instance(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.value(&[0.3, 0.1]), p.value(&[0.3, 0.1]));
        assert!(back.is_consistent());
        assert_eq!(back.seed(), Some(9));

        let q = random_logistic(3, 2, 3, 4).unwrap();
        let back = Problem::from_instance(&q.to_instance()).unwrap();
        assert_eq!(back, q);
    }
}
