//! Run configuration file.

use std::path::{Path, PathBuf};

use psps_core::formulation::{CvarConfig, RiskBudget};
use psps_core::risk::{Aggregation, Metric};
use psps_core::rt::OnsetMode;
use psps_core::scenario::FanProbabilityMode;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Stage};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RasterInput {
    pub path: PathBuf,
    #[serde(default)]
    pub date: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryInput {
    pub demand: PathBuf,
    pub risk: PathBuf,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioStructure {
    #[default]
    Fan,
    Tree,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioOptions {
    pub structure: ScenarioStructure,
    /// Survivors kept by tree reduction.
    pub count: usize,
    pub fan_probability_mode: FanProbabilityMode,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            structure: ScenarioStructure::Fan,
            count: 5,
            fan_probability_mode: FanProbabilityMode::NormalPartition,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RtOptions {
    pub samples: usize,
    pub onset: OnsetMode,
    pub window: Option<usize>,
}

impl Default for RtOptions {
    fn default() -> Self {
        Self {
            samples: 1000,
            onset: OnsetMode::Uniform,
            window: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub rel_gap: f64,
    pub max_nodes: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_gap: psps_milp::DEFAULT_REL_GAP,
            max_nodes: 200_000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepOptions {
    /// Grid given as counts of the riskiest lines admitted.
    pub lines: Vec<usize>,
    /// Grid given directly as tolerances.
    pub pi_tols: Vec<f64>,
    /// Solve each point on the probability-weighted mean scenario.
    pub expected_scenario: bool,
    /// Node limit for the full search after the greedy pass.
    pub max_nodes: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub network: PathBuf,
    #[serde(default)]
    pub raster: Option<RasterInput>,
    #[serde(default)]
    pub reliability_table: Option<PathBuf>,
    /// Precomputed line risk, used instead of a raster.
    #[serde(default)]
    pub line_risk: Option<PathBuf>,
    #[serde(default)]
    pub history: Option<HistoryInput>,
    /// Ready-made scenario set, used instead of history.
    #[serde(default)]
    pub scenario_file: Option<PathBuf>,
    #[serde(default)]
    pub realized_demand: Option<PathBuf>,
    #[serde(default)]
    pub plan: Option<PathBuf>,
    #[serde(default = "default_metric")]
    pub metric: Metric,
    #[serde(default)]
    pub aggregation: Aggregation,
    #[serde(default = "no_budget")]
    pub budget: RiskBudget,
    #[serde(default)]
    pub cvar: Option<CvarConfig>,
    #[serde(default = "default_theta")]
    pub theta_bound: f64,
    #[serde(default)]
    pub energize_zero_risk: bool,
    #[serde(default)]
    pub scenarios: ScenarioOptions,
    #[serde(default)]
    pub rt: RtOptions,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub sweep: SweepOptions,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_metric() -> Metric {
    Metric::Wfpi
}

fn no_budget() -> RiskBudget {
    RiskBudget::None
}

fn default_theta() -> f64 {
    0.6
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    /// Reads a config file as written; see [`RunConfig::resolve`].
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: line {}: {e}", path.display(), e.line())))
    }

    /// Digest of the settings that determine the results: everything but
    /// the output directory, with paths as written in the file.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("out");
        }
        crate::pipeline::sha256_hex(v.to_string().as_bytes())
    }

    /// Makes relative paths relative to `base`, the config file's directory.
    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.network);
        fix(&mut self.out);
        if let Some(r) = &mut self.raster {
            fix(&mut r.path);
        }
        if let Some(h) = &mut self.history {
            fix(&mut h.demand);
            fix(&mut h.risk);
        }
        for p in [
            &mut self.reliability_table,
            &mut self.line_risk,
            &mut self.scenario_file,
            &mut self.realized_demand,
            &mut self.plan,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    /// Every referenced input must exist before any stage runs. A missing
    /// file is reported against the stage that would read it.
    pub fn check_inputs(&self) -> Result<(), CliError> {
        let mut inputs: Vec<(&Path, Stage)> = vec![(&self.network, Stage::GridModel)];
        if let Some(r) = &self.raster {
            inputs.push((&r.path, Stage::RiskPipeline));
        }
        if let Some(p) = &self.reliability_table {
            inputs.push((p, Stage::RiskPipeline));
        }
        if let Some(p) = &self.line_risk {
            inputs.push((p, Stage::RiskPipeline));
        }
        if let Some(h) = &self.history {
            inputs.push((&h.demand, Stage::ScenarioEngine));
            inputs.push((&h.risk, Stage::ScenarioEngine));
        }
        if let Some(p) = &self.scenario_file {
            inputs.push((p, Stage::ScenarioEngine));
        }
        if let Some(p) = &self.realized_demand {
            inputs.push((p, Stage::RtEvaluator));
        }
        if let Some(p) = &self.plan {
            inputs.push((p, Stage::RtEvaluator));
        }
        for (p, stage) in inputs {
            if !p.is_file() {
                return Err(CliError::missing_input(stage, p));
            }
        }
        if !(self.theta_bound > 0.0) {
            return Err(CliError::config("theta_bound must be positive"));
        }
        if let Some(c) = self.cvar {
            if !(0.0..=1.0).contains(&c.beta) || !(0.0..1.0).contains(&c.epsilon) {
                return Err(CliError::config("cvar needs beta in [0, 1] and epsilon in [0, 1)"));
            }
        }
        Ok(())
    }
}
