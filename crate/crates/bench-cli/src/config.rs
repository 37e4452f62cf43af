//! Experiment configuration files (JSON).

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use dngd::algorithms::AlgorithmSpec;
use dngd::{ProblemSpec, Topology};

use crate::CliError;

const KNOWN_KINDS: [&str; 7] = ["dngd_sc", "dngd_c", "dgd", "d_ng", "d_nc", "extra", "gradient_tracking"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub graph: Topology,
    #[serde(default = "one")]
    pub edge_weight: f64,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub algorithms: Vec<AlgorithmEntry>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "one_usize")]
    pub sample_stride: usize,
    #[serde(default)]
    pub init: InitConfig,
    /// Stop a run at the first sample with `max_subopt ≤ epsilon`.
    #[serde(default)]
    pub stop_at_epsilon: bool,
    #[serde(default)]
    pub flow: Option<FlowConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    /// Overrides `--out-dir` when present.
    #[serde(default)]
    pub output_dir: Option<String>,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

fn default_iterations() -> usize {
    1000
}

fn default_epsilon() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub identical: bool,
    #[serde(default = "one")]
    pub scale: f64,
}

fn yes() -> bool {
    true
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig { seed: 0, identical: true, scale: 1.0 }
    }
}

/// An algorithm with explicit parameters, or `"auto"` for the prescribed ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmEntry {
    pub kind: String,
    #[serde(default)]
    pub params: Option<Value>,
    /// Defaults to `kind`; must be unique within a config.
    #[serde(default)]
    pub label: Option<String>,
}

impl AlgorithmEntry {
    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.kind)
    }

    pub fn is_auto(&self) -> bool {
        match &self.params {
            None => true,
            Some(Value::String(s)) => s == "auto",
            Some(_) => false,
        }
    }

    pub fn explicit_spec(&self) -> Result<Option<AlgorithmSpec>, String> {
        if self.is_auto() {
            return Ok(None);
        }
        let wire = serde_json::json!({ "kind": self.kind, "params": self.params });
        serde_json::from_value(wire)
            .map(Some)
            .map_err(|e| format!("bad parameters for {}: {e}", self.kind))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub schedule: FlowSchedule,
    pub t_end: f64,
    /// RK4 step; defaults to `10⁻³/√λₙ`.
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default = "default_flow_stride")]
    pub sample_stride: usize,
}

fn default_flow_stride() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FlowSchedule {
    /// `α(t) = r/t`, `β(t) = t^{−(3−r)}`.
    Convex { r: f64 },
    Constant { alpha: f64, beta: f64 },
    /// `α = 2√min{λ₂, βμ/n}`; `β` defaults to the DNGD-SC choice.
    StronglyConvex {
        #[serde(default)]
        beta: Option<f64>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Node counts; κ is read off each graph.
    #[serde(default)]
    pub kappa: Option<Vec<usize>>,
    #[serde(default)]
    pub epsilon: Option<Vec<f64>>,
    #[serde(default)]
    pub r: Option<Vec<f64>>,
}

/// 1-based line of the first occurrence of the quoted string `key`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

fn at_line(text: &str, key: &str, msg: String) -> CliError {
    match line_of(text, key) {
        Some(line) => CliError::Config(format!("line {line}: {msg}")),
        None => CliError::Config(msg),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            CliError::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        cfg.validate(text)?;
        Ok(cfg)
    }

    fn validate(&self, text: &str) -> Result<(), CliError> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(at_line(text, "name", format!("invalid experiment name {:?}", self.name)));
        }
        if !(self.edge_weight > 0.0 && self.edge_weight.is_finite()) {
            return Err(at_line(text, "edge_weight", "edge weight must be positive".into()));
        }
        if self.iterations == 0 {
            return Err(at_line(text, "iterations", "iterations must be positive".into()));
        }
        if self.sample_stride == 0 {
            return Err(at_line(text, "sample_stride", "sample stride must be positive".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(at_line(text, "epsilon", "epsilon must be positive".into()));
        }
        if !(self.init.scale > 0.0 && self.init.scale.is_finite()) {
            return Err(at_line(text, "scale", "init scale must be positive".into()));
        }
        let mut labels = Vec::new();
        for a in &self.algorithms {
            if !KNOWN_KINDS.contains(&a.kind.as_str()) {
                return Err(at_line(
                    text,
                    &a.kind,
                    format!("unknown algorithm kind {:?}; expected one of {}", a.kind, KNOWN_KINDS.join(", ")),
                ));
            }
            if let Some(Value::String(s)) = &a.params {
                if s != "auto" {
                    return Err(at_line(text, "params", format!("params must be an object or \"auto\", got {s:?}")));
                }
            }
            a.explicit_spec().map_err(|e| at_line(text, "params", e))?;
            if labels.contains(&a.label()) {
                return Err(at_line(text, a.label(), format!("duplicate algorithm label {:?}", a.label())));
            }
            labels.push(a.label());
        }
        if let Some(flow) = &self.flow {
            if !(flow.t_end > 0.0 && flow.t_end.is_finite()) {
                return Err(at_line(text, "t_end", "t_end must be positive".into()));
            }
            if flow.step.is_some_and(|h| !(h > 0.0 && h < flow.t_end)) {
                return Err(at_line(text, "step", "step must lie in (0, t_end)".into()));
            }
            if flow.sample_stride == 0 {
                return Err(at_line(text, "sample_stride", "flow sample stride must be positive".into()));
            }
            if let FlowSchedule::Convex { r } = flow.schedule {
                check_r(text, r)?;
            }
        }
        if let Some(sweep) = &self.sweep {
            if let Some(rs) = &sweep.r {
                for &r in rs {
                    check_r(text, r)?;
                }
            }
            if sweep.kappa.as_ref().is_some_and(|v| v.iter().any(|&n| n < 2)) {
                return Err(at_line(text, "kappa", "kappa sweep node counts must be at least 2".into()));
            }
            if sweep.epsilon.as_ref().is_some_and(|v| v.iter().any(|&e| !(e > 0.0))) {
                return Err(at_line(text, "epsilon", "epsilon sweep values must be positive".into()));
            }
        }
        Ok(())
    }

    /// Every seed the experiment depends on.
    pub fn seeds(&self) -> Seeds {
        Seeds {
            problem: self.problem.seed(),
            init: self.init.seed,
            graph: match self.graph {
                Topology::RandomGnp { seed, .. } => Some(seed),
                _ => None,
            },
        }
    }
}

fn check_r(text: &str, r: f64) -> Result<(), CliError> {
    if !(2.0..3.0).contains(&r) {
        return Err(at_line(text, "r", format!("r must lie in [2, 3) with p = 3 − r, got {r}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Seeds {
    pub problem: u64,
    pub init: u64,
    pub graph: Option<u64>,
}
