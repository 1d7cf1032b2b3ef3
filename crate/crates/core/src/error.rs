use std::fmt;

use thiserror::Error;

/// One problem found while validating an experiment configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    /// Dotted key path (`model.bounds.c0`) or `line N` for syntax errors.
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Error)]
pub enum FvError {
    #[error("distance function is not differentiable at {point:?}")]
    NonSmoothPoint { point: Vec<f64> },

    #[error("point {point:?} is outside the domain")]
    DomainViolation { point: Vec<f64> },

    #[error("invalid time step dt = {0}")]
    InvalidStep(f64),

    #[error("invalid configuration:\n{}", format_issues(.0))]
    Config(Vec<ConfigIssue>),

    #[error("no admissible donor for particle {0}")]
    NoDonor(usize),

    #[error("explosion guard: {count} jumps in unit window {window} exceeds cap {cap}")]
    ExplosionGuard { window: u64, count: u64, cap: u64 },

    #[error("{0}")]
    Range(String),

    #[error("operation requires a one-dimensional measure, got dimension {0}")]
    Dimension(usize),

    #[error("histogram bins do not cover the support: {0}")]
    Bin(String),

    #[error("all {attempts} paths were killed before t = {t}")]
    AllKilled { attempts: usize, t: f64 },

    #[error("eigen-solver did not converge: residual {residual:e} after {iterations} iterations")]
    Convergence { residual: f64, iterations: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FvError {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        FvError::Config(vec![ConfigIssue {
            key: key.into(),
            message: message.into(),
        }])
    }
}

fn format_issues(issues: &[ConfigIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub type Result<T, E = FvError> = std::result::Result<T, E>;
