//! Communication graphs, their Laplacians and the spectral quantities
//! (λ₂, λₙ, κ) that every parameter formula consumes.
//!
//! Stacked network vectors are laid out agent-major: agent `i` owns the
//! block `[i*d, (i+1)*d)`. [`Graph::mix`] applies `scale * (L ⊗ I_d)` to
//! such a vector edge by edge, never materializing the Kronecker product.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Number of attempts `random_gnp` makes before giving up on connectivity.
pub const GNP_MAX_RETRIES: usize = 100;

/// Relative threshold under which λ₁ is snapped to exactly zero.
pub const ZERO_EIGENVALUE_SNAP: f64 = 1e-10;

/// Graph families used by the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Topology {
    Path { n: usize },
    Ring { n: usize },
    Complete { n: usize },
    Star { n: usize },
    RandomGnp { n: usize, p: f64, seed: u64 },
    Grid { rows: usize, cols: usize },
}

impl Topology {
    pub fn node_count(&self) -> usize {
        match *self {
            Topology::Path { n }
            | Topology::Ring { n }
            | Topology::Complete { n }
            | Topology::Star { n }
            | Topology::RandomGnp { n, .. } => n,
            Topology::Grid { rows, cols } => rows * cols,
        }
    }

    /// Same family with a different node count. Grids become `1 x n`.
    pub fn with_node_count(&self, n: usize) -> Topology {
        match *self {
            Topology::Path { .. } => Topology::Path { n },
            Topology::Ring { .. } => Topology::Ring { n },
            Topology::Complete { .. } => Topology::Complete { n },
            Topology::Star { .. } => Topology::Star { n },
            Topology::RandomGnp { p, seed, .. } => Topology::RandomGnp { n, p, seed },
            Topology::Grid { .. } => Topology::Grid { rows: 1, cols: n },
        }
    }
}

/// Weighted undirected connected graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    /// Dense symmetric adjacency, row-major.
    weights: Vec<f64>,
    /// Each edge once, `i < j`.
    edges: Vec<(usize, usize, f64)>,
}

/// Laplacian together with its full ascending spectrum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplacianSpectrum {
    pub n: usize,
    #[serde(skip)]
    pub laplacian: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub lambda2: f64,
    pub lambda_n: f64,
    pub kappa: f64,
}

impl LaplacianSpectrum {
    /// λ₂ / λₙ pair as used by parameter formulas.
    pub fn extremes(&self) -> (f64, f64) {
        (self.lambda2, self.lambda_n)
    }
}

/// Builds a connected graph with uniform edge weight.
pub fn build_graph(topology: Topology, weight: f64) -> Result<Graph> {
    if !(weight > 0.0 && weight.is_finite()) {
        return Err(Error::argument(format!("edge weight must be positive, got {weight}")));
    }
    let n = topology.node_count();
    if n < 2 {
        return Err(Error::argument(format!("graph needs at least 2 nodes, got {n}")));
    }
    let pairs: Vec<(usize, usize)> = match topology {
        Topology::Path { n } => (0..n - 1).map(|i| (i, i + 1)).collect(),
        Topology::Ring { n } => {
            if n == 2 {
                vec![(0, 1)]
            } else {
                let mut p: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
                p.push((0, n - 1));
                p
            }
        }
        Topology::Complete { n } => (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .collect(),
        Topology::Star { n } => (1..n).map(|j| (0, j)).collect(),
        Topology::Grid { rows, cols } => {
            let mut p = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    let i = r * cols + c;
                    if c + 1 < cols {
                        p.push((i, i + 1));
                    }
                    if r + 1 < rows {
                        p.push((i, i + cols));
                    }
                }
            }
            p
        }
        Topology::RandomGnp { n, p, seed } => return random_gnp(n, p, seed, weight),
    };
    Graph::from_edges(n, pairs.into_iter().map(|(i, j)| (i, j, weight)).collect())
}

fn random_gnp(n: usize, p: f64, seed: u64, weight: f64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::argument(format!("edge probability must lie in [0,1], got {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..GNP_MAX_RETRIES {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < p {
                    edges.push((i, j, weight));
                }
            }
        }
        if is_connected(n, &edges) {
            return Graph::from_edges(n, edges);
        }
    }
    Err(Error::Construction(format!(
        "G({n}, {p}) with seed {seed} stayed disconnected after {GNP_MAX_RETRIES} attempts"
    )))
}

fn is_connected(n: usize, edges: &[(usize, usize, f64)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(i, j, _) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

impl Graph {
    /// Validates and builds a graph from an edge list. Duplicate edges,
    /// self-loops, non-positive weights and disconnected graphs are rejected.
    pub fn from_edges(n: usize, edges: Vec<(usize, usize, f64)>) -> Result<Graph> {
        if n == 0 {
            return Err(Error::argument("graph needs at least one node"));
        }
        let mut weights = vec![0.0; n * n];
        let mut normalized = Vec::with_capacity(edges.len());
        for (i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::argument(format!("edge ({i},{j}) out of range for n={n}")));
            }
            if i == j {
                return Err(Error::argument(format!("self-loop at node {i}")));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::argument(format!("edge ({i},{j}) has non-positive weight {w}")));
            }
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            if weights[a * n + b] != 0.0 {
                return Err(Error::argument(format!("duplicate edge ({a},{b})")));
            }
            weights[a * n + b] = w;
            weights[b * n + a] = w;
            normalized.push((a, b, w));
        }
        normalized.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        if !is_connected(n, &normalized) {
            return Err(Error::Construction(format!("graph on {n} nodes is disconnected")));
        }
        Ok(Graph {
            n,
            weights,
            edges: normalized,
        })
    }

    /// A single agent with no links. Its Laplacian is the 1x1 zero matrix,
    /// which turns every distributed update into its centralized form.
    pub fn single_agent() -> Graph {
        Graph {
            n: 1,
            weights: vec![0.0],
            edges: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.weights[i * self.n..(i + 1) * self.n].iter().sum()
    }

    /// Dense `n x n` Laplacian `D - A`, row-major.
    pub fn laplacian(&self) -> Vec<f64> {
        let n = self.n;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                l[i * n + j] = if i == j {
                    self.degree(i)
                } else {
                    -self.weights[i * n + j]
                };
            }
        }
        l
    }

    /// Full spectrum of the Laplacian via cyclic Jacobi.
    pub fn spectrum(&self) -> Result<LaplacianSpectrum> {
        if self.n < 2 {
            return Err(Error::contract("spectral gap is undefined for a single agent"));
        }
        let laplacian = self.laplacian();
        let eig = linalg::symmetric_eigen(&laplacian, self.n)?;
        let mut eigenvalues = eig.values;
        let lambda_n = *eigenvalues.last().expect("n >= 2");
        if eigenvalues[0].abs() <= ZERO_EIGENVALUE_SNAP * lambda_n {
            eigenvalues[0] = 0.0;
        }
        let lambda2 = eigenvalues[1];
        if lambda2 <= ZERO_EIGENVALUE_SNAP * lambda_n {
            return Err(Error::Construction(format!(
                "algebraic connectivity {lambda2:e} is numerically zero"
            )));
        }
        Ok(LaplacianSpectrum {
            n: self.n,
            laplacian,
            eigenvalues,
            lambda2,
            lambda_n,
            kappa: lambda_n / lambda2,
        })
    }

    /// Infers the per-agent dimension of a stacked vector.
    pub fn block_dim(&self, stacked_len: usize) -> Result<usize> {
        if stacked_len == 0 || stacked_len % self.n != 0 {
            return Err(Error::argument(format!(
                "stacked vector of length {stacked_len} is not a multiple of n={}",
                self.n
            )));
        }
        Ok(stacked_len / self.n)
    }

    /// `scale * (L ⊗ I_d) * stacked`, computed edge-wise.
    pub fn mix(&self, stacked: &[f64], scale: f64) -> Result<Vec<f64>> {
        let d = self.block_dim(stacked.len())?;
        let mut out = vec![0.0; stacked.len()];
        self.mix_into(stacked, d, scale, &mut out);
        Ok(out)
    }

    /// Adds `scale * (L ⊗ I_d) * stacked` into `out`. Lengths must agree.
    pub(crate) fn mix_into(&self, stacked: &[f64], d: usize, scale: f64, out: &mut [f64]) {
        for &(i, j, w) in &self.edges {
            let sw = scale * w;
            for c in 0..d {
                let diff = stacked[i * d + c] - stacked[j * d + c];
                out[i * d + c] += sw * diff;
                out[j * d + c] -= sw * diff;
            }
        }
    }

    /// Quadratic form `x̃ᵀ (L ⊗ I_d) x̃ = Σ_{edges} w ‖x_i − x_j‖²`.
    pub fn quad_form(&self, stacked: &[f64]) -> Result<f64> {
        let d = self.block_dim(stacked.len())?;
        Ok(self.quad_form_dim(stacked, d))
    }

    pub(crate) fn quad_form_dim(&self, stacked: &[f64], d: usize) -> f64 {
        self.edges
            .iter()
            .map(|&(i, j, w)| {
                w * linalg::dist_sq(&stacked[i * d..(i + 1) * d], &stacked[j * d..(j + 1) * d])
            })
            .sum()
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            n: self.n,
            edges: self.edges.iter().map(|&(i, j, w)| (i, j, w)).collect(),
        }
    }

    pub fn from_json(json: &GraphJson) -> Result<Graph> {
        Graph::from_edges(json.n, json.edges.clone())
    }
}

/// Wire form: `{"n": int, "edges": [[i, j, weight], ...]}`, 0-based, `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
}
