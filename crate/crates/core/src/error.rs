use std::path::PathBuf;

use psps_milp::{MilpError, SolveStatus};

#[derive(Debug, thiserror::Error)]
pub enum PspsError {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Validation(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("point ({lat}, {lon}) lies outside the raster extent")]
    OutOfExtent { lat: f64, lon: f64 },
    #[error("value {0} is not covered by the reliability table")]
    NoBin(f64),
    #[error("history has {have} days, {need} required")]
    InsufficientHistory { have: usize, need: usize },
    #[error("demand curve is zero everywhere")]
    ZeroTotal,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("model too large: {vars} variables, {rows} rows (cap {cap})")]
    ModelTooLarge { vars: usize, rows: usize, cap: usize },
    #[error("infeasible{}", budget_note(.budget))]
    Infeasible { budget: Option<String> },
    #[error("solver stopped with status {0:?} and no solution")]
    Solver(SolveStatus),
    #[error("numerical failure in solver: {0}")]
    Numerical(String),
    #[error("convex hull area is zero")]
    ZeroArea,
    #[error("cluster {0} is empty after re-seeding")]
    DegenerateCluster(usize),
}

fn budget_note(budget: &Option<String>) -> String {
    match budget {
        Some(b) => format!(" (risk budget {b} cannot be met)"),
        None => String::new(),
    }
}

impl From<MilpError> for PspsError {
    fn from(e: MilpError) -> Self {
        match e {
            MilpError::ModelTooLarge { vars, rows, cap } => PspsError::ModelTooLarge { vars, rows, cap },
            MilpError::NumericalFailure(m) => PspsError::Numerical(m),
            other => PspsError::Config(other.to_string()),
        }
    }
}

impl PspsError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PspsError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, PspsError>;
