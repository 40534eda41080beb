//! Day-ahead scenario sets from historical demand and risk.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{PspsError, Result};
use crate::grid::PowerNetwork;
use crate::risk::csv_error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: usize,
    pub probability: f64,
    /// `demand[d][t]` in MW, indexed like `PowerNetwork::demands`.
    pub demand: Vec<Vec<f64>>,
    /// Daily ignition probability per line, constant over the day.
    pub line_risk: Vec<f64>,
    /// Raw metric per line for WFPI-sum budgets; empty when unused.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub line_metric: Vec<f64>,
}

impl Scenario {
    pub fn total_demand(&self, t: usize) -> f64 {
        self.demand.iter().map(|d| d[t]).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    DayAhead,
    RealTime,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub kind: ScenarioKind,
    pub scenarios: Vec<Scenario>,
}

impl ScenarioSet {
    pub fn single(scenario: Scenario) -> Self {
        Self {
            kind: ScenarioKind::DayAhead,
            scenarios: vec![Scenario {
                probability: 1.0,
                ..scenario
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    /// Checks probabilities and dimensions against `net`.
    pub fn validate(&self, net: &PowerNetwork) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(PspsError::Validation("scenario set is empty".into()));
        }
        let total: f64 = self.scenarios.iter().map(|s| s.probability).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(PspsError::Validation(format!("scenario probabilities sum to {total}")));
        }
        for s in &self.scenarios {
            if !(s.probability > 0.0) {
                return Err(PspsError::Validation(format!("scenario {}: probability must be positive", s.id)));
            }
            if s.demand.len() != net.demands.len() || s.demand.iter().any(|d| d.len() != net.horizon) {
                return Err(PspsError::DimensionMismatch(format!(
                    "scenario {}: demand must be {} x {}",
                    s.id,
                    net.demands.len(),
                    net.horizon
                )));
            }
            if s.demand.iter().flatten().any(|v| !(*v >= 0.0)) {
                return Err(PspsError::Validation(format!("scenario {}: negative demand", s.id)));
            }
            if s.line_risk.len() != net.lines.len() {
                return Err(PspsError::DimensionMismatch(format!(
                    "scenario {}: {} line risks for {} lines",
                    s.id,
                    s.line_risk.len(),
                    net.lines.len()
                )));
            }
            if s.line_risk.iter().any(|p| !(0.0..1.0).contains(p)) {
                return Err(PspsError::Validation(format!("scenario {}: line risk outside [0, 1)", s.id)));
            }
            if !s.line_metric.is_empty() && s.line_metric.len() != net.lines.len() {
                return Err(PspsError::DimensionMismatch(format!("scenario {}: line_metric length", s.id)));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PspsError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| PspsError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("scenario set serializes");
        std::fs::write(path, text + "\n").map_err(|e| PspsError::io(path, e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryDay {
    /// ISO date; lexical order is chronological.
    pub date: String,
    pub total_demand_curve: Vec<f64>,
    pub cumulative_bus_risk: f64,
    /// Daily ignition probability per line.
    pub per_line_metric: Vec<f64>,
}

fn zscore_columns(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len() as f64;
    let dim = rows[0].len();
    let mut out = rows.to_vec();
    for j in 0..dim {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        for r in out.iter_mut() {
            r[j] = if sd > 0.0 { (r[j] - mean) / sd } else { 0.0 };
        }
    }
    out
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Backward reduction of equiprobable history days to `k` survivors.
///
/// Returns `(history index, probability)` in chronological order of the
/// input. Features are the per-step z-scored demand curve followed by the
/// z-scored cumulative risk.
pub fn reduce_scenarios(history: &[HistoryDay], k: usize) -> Result<Vec<(usize, f64)>> {
    if k == 0 || history.len() < k {
        return Err(PspsError::InsufficientHistory {
            have: history.len(),
            need: k.max(1),
        });
    }
    let h = history[0].total_demand_curve.len();
    if history.iter().any(|d| d.total_demand_curve.len() != h) {
        return Err(PspsError::DimensionMismatch("history curves differ in length".into()));
    }
    let raw: Vec<Vec<f64>> = history
        .iter()
        .map(|d| {
            let mut f = d.total_demand_curve.clone();
            f.push(d.cumulative_bus_risk);
            f
        })
        .collect();
    let feats = zscore_columns(&raw);
    let n = history.len();
    let mut prob = vec![1.0 / n as f64; n];
    let mut alive = vec![true; n];
    let nearest = |i: usize, alive: &[bool]| -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for j in 0..n {
            if j != i && alive[j] {
                let d = euclid(&feats[i], &feats[j]);
                if d < best.1 {
                    best = (j, d);
                }
            }
        }
        best
    };
    for _ in 0..(n - k) {
        let mut victim = (usize::MAX, usize::MAX, f64::INFINITY);
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            let (j, d) = nearest(i, &alive);
            let cost = prob[i] * d;
            if cost < victim.2 {
                victim = (i, j, cost);
            }
        }
        let (i, j, _) = victim;
        alive[i] = false;
        prob[j] += prob[i];
        prob[i] = 0.0;
    }
    Ok((0..n).filter(|&i| alive[i]).map(|i| (i, prob[i])).collect())
}

/// Standard-normal mass of the five bands centred on -2..=2 standard deviations.
pub fn normal_partition() -> [f64; 5] {
    let z = Normal::new(0.0, 1.0).expect("unit normal");
    let edges = [-1.5, -0.5, 0.5, 1.5];
    let cdf: Vec<f64> = edges.iter().map(|&e| z.cdf(e)).collect();
    [
        cdf[0],
        cdf[1] - cdf[0],
        cdf[2] - cdf[1],
        cdf[3] - cdf[2],
        1.0 - cdf[3],
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct FanCurve {
    /// Offset in standard deviations, -2..=2.
    pub offset: i32,
    pub curve: Vec<f64>,
    pub probability: f64,
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Five demand curves at the per-step sample mean and +-1, +-2 sample
/// standard deviations (clipped at zero), ordered from lowest to highest.
pub fn gaussian_fan(history: &[HistoryDay]) -> Result<Vec<FanCurve>> {
    if history.len() < 2 {
        return Err(PspsError::InsufficientHistory {
            have: history.len(),
            need: 2,
        });
    }
    let h = history[0].total_demand_curve.len();
    let stats: Vec<(f64, f64)> = (0..h)
        .map(|t| mean_sd(history.iter().map(move |d| d.total_demand_curve[t])))
        .collect();
    let probs = normal_partition();
    Ok((-2..=2)
        .zip(probs)
        .map(|(offset, probability)| FanCurve {
            offset,
            curve: stats
                .iter()
                .map(|&(m, s)| (m + offset as f64 * s).max(0.0))
                .collect(),
            probability,
        })
        .collect())
}

/// Index of the day whose cumulative risk is closest to `target`; ties go
/// to the earliest date.
pub fn match_risk_day(target: f64, history: &[HistoryDay]) -> Option<usize> {
    (0..history.len()).min_by(|&a, &b| {
        let da = (history[a].cumulative_bus_risk - target).abs();
        let db = (history[b].cumulative_bus_risk - target).abs();
        da.total_cmp(&db)
            .then_with(|| history[a].date.cmp(&history[b].date))
            .then(a.cmp(&b))
    })
}

/// Splits a system-wide curve across demands in proportion to their peak
/// base load: `p[d][t] = total[t] * peak_d / sum(peaks)`.
pub fn project_demand(total_curve: &[f64], net: &PowerNetwork) -> Result<Vec<Vec<f64>>> {
    if total_curve.len() != net.horizon {
        return Err(PspsError::DimensionMismatch(format!(
            "curve has {} steps, horizon is {}",
            total_curve.len(),
            net.horizon
        )));
    }
    let peaks: Vec<f64> = net.demands.iter().map(|d| d.peak()).collect();
    let sum: f64 = peaks.iter().sum();
    if total_curve.iter().all(|&v| v == 0.0) || sum <= 0.0 {
        return Err(PspsError::ZeroTotal);
    }
    Ok(peaks
        .iter()
        .map(|&pk| total_curve.iter().map(|&v| v * pk / sum).collect())
        .collect())
}

/// Probability-weighted mean of demand and line risk.
pub fn expected_scenario(set: &ScenarioSet) -> Scenario {
    let first = &set.scenarios[0];
    let mut demand = vec![vec![0.0; first.demand.first().map_or(0, |d| d.len())]; first.demand.len()];
    let mut line_risk = vec![0.0; first.line_risk.len()];
    let mut line_metric = vec![0.0; first.line_metric.len()];
    for s in &set.scenarios {
        for (acc, row) in demand.iter_mut().zip(&s.demand) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += s.probability * v;
            }
        }
        for (a, v) in line_risk.iter_mut().zip(&s.line_risk) {
            *a += s.probability * v;
        }
        for (a, v) in line_metric.iter_mut().zip(&s.line_metric) {
            *a += s.probability * v;
        }
    }
    Scenario {
        id: 0,
        probability: 1.0,
        demand,
        line_risk,
        line_metric,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FanProbabilityMode {
    #[default]
    NormalPartition,
    Tree,
}

/// Gaussian fan on demand paired with a fan on cumulative risk; each risk
/// level is matched to the nearest historical day, whose line risks the
/// scenario adopts.
pub fn build_fan_scenarios(
    history: &[HistoryDay],
    net: &PowerNetwork,
    mode: FanProbabilityMode,
) -> Result<ScenarioSet> {
    let fan = gaussian_fan(history)?;
    let (rmean, rsd) = mean_sd(history.iter().map(|d| d.cumulative_bus_risk));
    let probs: Vec<f64> = match mode {
        FanProbabilityMode::NormalPartition => fan.iter().map(|f| f.probability).collect(),
        FanProbabilityMode::Tree => {
            let mut kept = reduce_scenarios(history, 5)?;
            kept.sort_by(|a, b| {
                let ea: f64 = history[a.0].total_demand_curve.iter().sum();
                let eb: f64 = history[b.0].total_demand_curve.iter().sum();
                ea.total_cmp(&eb).then(a.0.cmp(&b.0))
            });
            kept.iter().map(|k| k.1).collect()
        }
    };
    let mut scenarios = Vec::with_capacity(5);
    for (k, f) in fan.iter().enumerate() {
        let day = match_risk_day(rmean + f.offset as f64 * rsd, history).expect("nonempty history");
        scenarios.push(Scenario {
            id: k + 1,
            probability: probs[k],
            demand: project_demand(&f.curve, net)?,
            line_risk: history[day].per_line_metric.clone(),
            line_metric: Vec::new(),
        });
    }
    Ok(ScenarioSet {
        kind: ScenarioKind::DayAhead,
        scenarios,
    })
}

/// Scenarios from the `k` survivors of backward reduction.
pub fn build_tree_scenarios(history: &[HistoryDay], net: &PowerNetwork, k: usize) -> Result<ScenarioSet> {
    let kept = reduce_scenarios(history, k)?;
    let scenarios = kept
        .iter()
        .enumerate()
        .map(|(n, &(i, p))| {
            Ok(Scenario {
                id: n + 1,
                probability: p,
                demand: project_demand(&history[i].total_demand_curve, net)?,
                line_risk: history[i].per_line_metric.clone(),
                line_metric: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioSet {
        kind: ScenarioKind::DayAhead,
        scenarios,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct DemandRow {
    date: String,
    step: usize,
    total_demand: f64,
}

/// Reads history from a long-format demand CSV (`date,step,total_demand`)
/// and a wide risk CSV (`date,cumulative_bus_risk,<one column per line>`).
pub fn load_history(demand_csv: impl AsRef<Path>, risk_csv: impl AsRef<Path>) -> Result<Vec<HistoryDay>> {
    let dpath = demand_csv.as_ref();
    let rpath = risk_csv.as_ref();
    let mut curves: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
    let mut rdr = csv::Reader::from_path(dpath).map_err(|e| csv_error(dpath, e))?;
    for rec in rdr.deserialize() {
        let row: DemandRow = rec.map_err(|e| csv_error(dpath, e))?;
        curves.entry(row.date).or_default().push((row.step, row.total_demand));
    }
    let mut risk: BTreeMap<String, (f64, Vec<f64>)> = BTreeMap::new();
    let mut rdr = csv::Reader::from_path(rpath).map_err(|e| csv_error(rpath, e))?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(rpath, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let parse = |s: &str| {
            s.trim().parse::<f64>().map_err(|_| PspsError::Parse {
                path: rpath.to_path_buf(),
                line,
                message: format!("bad number `{s}`"),
            })
        };
        let date = rec.get(0).unwrap_or_default().to_string();
        let cum = parse(rec.get(1).unwrap_or_default())?;
        let lines = rec.iter().skip(2).map(parse).collect::<Result<Vec<_>>>()?;
        risk.insert(date, (cum, lines));
    }
    let mut out = Vec::new();
    for (date, mut steps) in curves {
        steps.sort_by_key(|s| s.0);
        let (cum, lines) = risk.remove(&date).ok_or_else(|| PspsError::Parse {
            path: rpath.to_path_buf(),
            line: 0,
            message: format!("no risk row for date {date}"),
        })?;
        out.push(HistoryDay {
            date,
            total_demand_curve: steps.into_iter().map(|s| s.1).collect(),
            cumulative_bus_risk: cum,
            per_line_metric: lines,
        });
    }
    Ok(out)
}

pub fn save_history(history: &[HistoryDay], demand_csv: impl AsRef<Path>, risk_csv: impl AsRef<Path>) -> Result<()> {
    let dpath = demand_csv.as_ref();
    let mut w = csv::Writer::from_path(dpath).map_err(|e| csv_error(dpath, e))?;
    for d in history {
        for (step, &v) in d.total_demand_curve.iter().enumerate() {
            w.serialize(DemandRow {
                date: d.date.clone(),
                step,
                total_demand: v,
            })
            .map_err(|e| csv_error(dpath, e))?;
        }
    }
    w.flush().map_err(|e| PspsError::io(dpath, e))?;
    let rpath = risk_csv.as_ref();
    let mut w = csv::Writer::from_path(rpath).map_err(|e| csv_error(rpath, e))?;
    let nl = history.first().map_or(0, |d| d.per_line_metric.len());
    let mut header = vec!["date".to_string(), "cumulative_bus_risk".to_string()];
    header.extend((1..=nl).map(|l| format!("line_{l}")));
    w.write_record(&header).map_err(|e| csv_error(rpath, e))?;
    for d in history {
        let mut rec = vec![d.date.clone(), d.cumulative_bus_risk.to_string()];
        rec.extend(d.per_line_metric.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| csv_error(rpath, e))?;
    }
    w.flush().map_err(|e| PspsError::io(rpath, e))
}

/// Reads a `step,total_demand` CSV.
pub fn load_demand_curve(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    #[derive(Deserialize)]
    struct Row {
        step: usize,
        total_demand: f64,
    }
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        let r: Row = rec.map_err(|e| csv_error(path, e))?;
        rows.push((r.step, r.total_demand));
    }
    rows.sort_by_key(|r| r.0);
    Ok(rows.into_iter().map(|r| r.1).collect())
}
