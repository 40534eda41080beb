use std::fmt;
use std::path::Path;

use psps_core::PspsError;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Config,
    GridModel,
    RiskPipeline,
    ScenarioEngine,
    PspsFormulation,
    RtEvaluator,
    Analytics,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("stage serializes");
        write!(f, "{}", s.as_str().unwrap_or_default())
    }
}

/// Process exit codes.
pub mod exit {
    pub const CONFIG: i32 = 2;
    pub const INFEASIBLE: i32 = 3;
    pub const SOLVER_LIMIT: i32 = 4;
    pub const IO: i32 = 5;
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CliError {
    pub stage: Stage,
    pub kind: String,
    pub message: String,
    #[serde(skip)]
    pub exit_code: i32,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            stage: Stage::Config,
            kind: "ConfigError".into(),
            message: message.into(),
            exit_code: exit::CONFIG,
        }
    }

    pub fn missing_input(stage: Stage, path: &Path) -> Self {
        Self {
            stage,
            kind: "ParseError".into(),
            message: format!("input file {} does not exist", path.display()),
            exit_code: exit::CONFIG,
        }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self {
            stage: Stage::Output,
            kind: "IoError".into(),
            message: format!("{}: {e}", path.display()),
            exit_code: exit::IO,
        }
    }

    pub fn at(stage: Stage) -> impl Fn(PspsError) -> CliError {
        move |e| CliError::from_core(stage, e)
    }

    pub fn from_core(stage: Stage, e: PspsError) -> Self {
        let (kind, exit_code) = match &e {
            PspsError::Parse { .. } => ("ParseError", exit::CONFIG),
            PspsError::Validation(_) => ("ValidationError", exit::CONFIG),
            PspsError::Config(_) => ("ConfigError", exit::CONFIG),
            PspsError::DimensionMismatch(_) => ("DimensionMismatch", exit::CONFIG),
            PspsError::OutOfExtent { .. } => ("OutOfExtent", exit::CONFIG),
            PspsError::NoBin(_) => ("NoBin", exit::CONFIG),
            PspsError::InsufficientHistory { .. } => ("InsufficientHistory", exit::CONFIG),
            PspsError::ZeroTotal => ("ZeroTotal", exit::CONFIG),
            PspsError::ZeroArea => ("ZeroArea", exit::CONFIG),
            PspsError::DegenerateCluster(_) => ("DegenerateCluster", exit::CONFIG),
            PspsError::Infeasible { .. } => ("Infeasible", exit::INFEASIBLE),
            PspsError::ModelTooLarge { .. } => ("ModelTooLarge", exit::SOLVER_LIMIT),
            PspsError::Solver(_) => ("SolverLimit", exit::SOLVER_LIMIT),
            PspsError::Numerical(_) => ("NumericalFailure", exit::SOLVER_LIMIT),
            PspsError::Io { .. } => ("IoError", exit::IO),
        };
        Self {
            stage,
            kind: kind.into(),
            message: e.to_string(),
            exit_code,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": {
                "stage": self.stage,
                "kind": self.kind,
                "message": self.message,
                "exit_code": self.exit_code,
            }
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({}): {}", self.stage, self.kind, self.message)
    }
}

impl std::error::Error for CliError {}
