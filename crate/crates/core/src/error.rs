use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// The variants are grouped by who is at fault: the caller (`Argument`,
/// `Contract`), graph construction, or the numerics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A parameter set lies outside the regime an operation is defined for.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("graph construction failed: {0}")]
    Construction(String),

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    EigenNonConvergence { sweeps: usize, off_norm: f64 },

    #[error("non-finite value at agent {agent}{}", context_suffix(.context))]
    NonFinite { agent: usize, context: String },

    #[error("divergence guard tripped: state norm {norm:e} exceeds {limit:e}{}", context_suffix(.context))]
    Diverged {
        norm: f64,
        limit: f64,
        context: String,
    },

    /// The integrator state left the overflow guard; carries the last finite state.
    #[error("integrator blow-up at t = {t}: state norm {norm:e} exceeds {limit:e}")]
    BlowUp {
        t: f64,
        norm: f64,
        limit: f64,
        last_t: f64,
        last_position: Vec<f64>,
        last_velocity: Vec<f64>,
    },

    #[error("iteration budget of {iterations} exhausted (gradient norm {grad_norm:e}, best value {best_value})")]
    BudgetExhausted {
        iterations: usize,
        grad_norm: f64,
        best_value: f64,
        best_point: Vec<f64>,
    },

    #[error("rate fit failed: {0}")]
    Fit(String),

    #[error("at iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

fn context_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" ({context})")
    }
}

impl Error {
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// True for failures caused by the inputs rather than by the numerics.
    pub fn is_usage_error(&self) -> bool {
        match self {
            Error::Argument(_) | Error::Contract(_) | Error::Construction(_) => true,
            Error::AtIteration { source, .. } => source.is_usage_error(),
            _ => false,
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
