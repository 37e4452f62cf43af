//! Distributed Nesterov gradient flows and the discrete algorithms derived
//! from them, with the graph, objective and analysis machinery needed to run
//! and check them.
//!
//! Stacked vectors are agent-major: agent `i` owns entries `[i*d, (i+1)*d)`.

pub mod algorithms;
pub mod analysis;
pub mod error;
pub mod flow;
pub mod linalg;
pub mod netgraph;
pub mod objectives;
pub mod solver;

pub use error::{Error, Result};
pub use netgraph::{build_graph, Graph, LaplacianSpectrum, Topology};
pub use objectives::{centralized_optimum, Optimum, Problem, ProblemInstance, ProblemSpec};
