//! Power network types and the JSON case format.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PspsError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    #[serde(default)]
    pub name: String,
    pub latitude: f64,
    pub longitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    /// MW per radian; the MVA base is folded in.
    pub susceptance: f64,
    pub flow_min: f64,
    pub flow_max: f64,
    /// `[(lat, lon) at from end, (lat, lon) at to end]`.
    pub endpoints: [(f64, f64); 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: usize,
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    /// Signed lower ramp limit (negative), MW per step.
    pub ramp_down: f64,
    pub ramp_up: f64,
    pub min_up: usize,
    pub min_down: usize,
    pub marginal_cost: f64,
    pub startup_cost: f64,
    pub shutdown_cost: f64,
    #[serde(default)]
    pub initially_on: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    pub id: usize,
    pub bus: usize,
    pub voll: f64,
    pub base_profile: Vec<f64>,
}

impl Demand {
    pub fn peak(&self) -> f64 {
        self.base_profile.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerNetwork {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    pub demands: Vec<Demand>,
    pub horizon: usize,
    pub step_hours: f64,
}

/// One violated invariant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub entity: String,
    pub field: String,
    pub rule: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} {}", self.entity, self.field, self.rule)
    }
}

fn diag(entity: String, field: &str, rule: impl Into<String>) -> Diagnostic {
    Diagnostic {
        entity,
        field: field.to_string(),
        rule: rule.into(),
    }
}

impl PowerNetwork {
    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    /// Position of a bus id in `buses` (ids are 1..=N after validation).
    pub fn bus_index(&self, id: usize) -> usize {
        id - 1
    }

    /// Reference bus for phase angles: the lowest bus id hosting a generator,
    /// or bus 1 when there are none.
    pub fn reference_bus(&self) -> usize {
        self.generators.iter().map(|g| g.bus).min().unwrap_or(1)
    }

    pub fn max_marginal_cost(&self) -> f64 {
        self.generators
            .iter()
            .map(|g| g.marginal_cost)
            .fold(0.0, f64::max)
    }

    /// Copy with every demand profile cut or padded (holding the last value)
    /// to `horizon` steps.
    pub fn with_horizon(&self, horizon: usize) -> PowerNetwork {
        let mut net = self.clone();
        net.horizon = horizon;
        for d in &mut net.demands {
            let last = d.base_profile.last().copied().unwrap_or(0.0);
            d.base_profile.resize(horizon, last);
        }
        net
    }
}

pub fn validate_network(net: &PowerNetwork) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let n = net.buses.len();
    if net.horizon < 1 {
        out.push(diag("network".into(), "horizon", "must be at least 1"));
    }
    if !(net.step_hours > 0.0) {
        out.push(diag("network".into(), "step_hours", "must be positive"));
    }
    for (k, b) in net.buses.iter().enumerate() {
        let e = format!("bus {}", b.id);
        if b.id != k + 1 {
            out.push(diag(e.clone(), "id", format!("must equal {} (ids contiguous from 1)", k + 1)));
        }
        if !(b.latitude.abs() <= 90.0) {
            out.push(diag(e.clone(), "latitude", "must lie in [-90, 90]"));
        }
        if !(b.longitude.abs() <= 180.0) {
            out.push(diag(e, "longitude", "must lie in [-180, 180]"));
        }
    }
    let known = |id: usize| id >= 1 && id <= n;
    for l in &net.lines {
        let e = format!("line {}", l.id);
        if !known(l.from_bus) {
            out.push(diag(e.clone(), "from_bus", format!("unknown bus {}", l.from_bus)));
        }
        if !known(l.to_bus) {
            out.push(diag(e.clone(), "to_bus", format!("unknown bus {}", l.to_bus)));
        }
        if l.from_bus == l.to_bus {
            out.push(diag(e.clone(), "to_bus", "must differ from from_bus"));
        }
        if !(l.susceptance > 0.0) {
            out.push(diag(e.clone(), "susceptance", "must be positive"));
        }
        if !(l.flow_min <= 0.0 && 0.0 <= l.flow_max) {
            out.push(diag(e, "flow_min/flow_max", "must satisfy flow_min <= 0 <= flow_max"));
        }
    }
    for g in &net.generators {
        let e = format!("generator {}", g.id);
        if !known(g.bus) {
            out.push(diag(e.clone(), "bus", format!("unknown bus {}", g.bus)));
        }
        if !(g.p_min >= 0.0) {
            out.push(diag(e.clone(), "p_min", "must be nonnegative"));
        }
        if !(g.p_min <= g.p_max) {
            out.push(diag(e.clone(), "p_min", format!("{} exceeds p_max {}", g.p_min, g.p_max)));
        }
        if !(g.ramp_down < 0.0 && g.ramp_up > 0.0) {
            out.push(diag(e.clone(), "ramp_down/ramp_up", "must satisfy ramp_down < 0 < ramp_up"));
        }
        if g.min_up < 1 {
            out.push(diag(e.clone(), "min_up", "must be at least 1"));
        }
        if g.min_down < 1 {
            out.push(diag(e.clone(), "min_down", "must be at least 1"));
        }
        for (field, v) in [
            ("marginal_cost", g.marginal_cost),
            ("startup_cost", g.startup_cost),
            ("shutdown_cost", g.shutdown_cost),
        ] {
            if !(v >= 0.0) {
                out.push(diag(e.clone(), field, "must be nonnegative"));
            }
        }
    }
    let max_cost = net.max_marginal_cost();
    for d in &net.demands {
        let e = format!("demand {}", d.id);
        if !known(d.bus) {
            out.push(diag(e.clone(), "bus", format!("unknown bus {}", d.bus)));
        }
        if d.base_profile.len() != net.horizon {
            out.push(diag(
                e.clone(),
                "base_profile",
                format!("has {} entries, horizon is {}", d.base_profile.len(), net.horizon),
            ));
        }
        if d.base_profile.iter().any(|v| !(*v >= 0.0)) {
            out.push(diag(e.clone(), "base_profile", "entries must be nonnegative"));
        }
        if !(d.voll > max_cost) {
            out.push(diag(e, "voll", format!("must exceed the largest marginal cost {max_cost}")));
        }
    }
    out
}

pub fn parse_network(text: &str, origin: &Path) -> Result<PowerNetwork> {
    let net: PowerNetwork = serde_json::from_str(text).map_err(|e| PspsError::Parse {
        path: origin.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let diags = validate_network(&net);
    if let Some(first) = diags.first() {
        return Err(PspsError::Validation(format!("{}: {}", first.entity, first.rule)));
    }
    Ok(net)
}

pub fn load_network(path: impl AsRef<Path>) -> Result<PowerNetwork> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| PspsError::io(path, e))?;
    parse_network(&text, path)
}

pub fn save_network(net: &PowerNetwork, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(net).expect("network serializes");
    std::fs::write(path, text + "\n").map_err(|e| PspsError::io(path, e))
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn three_bus() -> PowerNetwork {
        let bus = |id, lat, lon| Bus {
            id,
            name: format!("b{id}"),
            latitude: lat,
            longitude: lon,
        };
        PowerNetwork {
            buses: vec![bus(1, 38.0, -121.0), bus(2, 38.1, -121.0), bus(3, 38.0, -120.9)],
            lines: vec![
                Line {
                    id: 1,
                    from_bus: 1,
                    to_bus: 2,
                    susceptance: 500.0,
                    flow_min: -100.0,
                    flow_max: 100.0,
                    endpoints: [(38.0, -121.0), (38.1, -121.0)],
                },
                Line {
                    id: 2,
                    from_bus: 2,
                    to_bus: 3,
                    susceptance: 500.0,
                    flow_min: -100.0,
                    flow_max: 100.0,
                    endpoints: [(38.1, -121.0), (38.0, -120.9)],
                },
            ],
            generators: vec![
                Generator {
                    id: 1,
                    bus: 1,
                    p_min: 0.0,
                    p_max: 150.0,
                    ramp_down: -150.0,
                    ramp_up: 150.0,
                    min_up: 1,
                    min_down: 1,
                    marginal_cost: 10.0,
                    startup_cost: 100.0,
                    shutdown_cost: 0.0,
                    initially_on: false,
                },
                Generator {
                    id: 2,
                    bus: 3,
                    p_min: 0.0,
                    p_max: 50.0,
                    ramp_down: -50.0,
                    ramp_up: 50.0,
                    min_up: 1,
                    min_down: 1,
                    marginal_cost: 30.0,
                    startup_cost: 50.0,
                    shutdown_cost: 0.0,
                    initially_on: false,
                },
            ],
            demands: vec![Demand {
                id: 1,
                bus: 2,
                voll: 1000.0,
                base_profile: vec![60.0, 80.0],
            }],
            horizon: 2,
            step_hours: 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::three_bus;
    use super::*;

    #[test]
    fn valid_case_has_no_diagnostics() {
        assert!(validate_network(&three_bus()).is_empty());
    }

    #[test]
    fn reports_bad_generator_fields() {
        let mut net = three_bus();
        net.generators[0].p_min = 10.0;
        net.generators[0].p_max = 5.0;
        let d = validate_network(&net);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].entity, "generator 1");
        assert_eq!(d[0].field, "p_min");

        let mut net = three_bus();
        net.generators[1].min_up = 0;
        let d = validate_network(&net);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].field, "min_up");
    }

    #[test]
    fn unknown_bus_is_a_validation_error() {
        let mut net = three_bus();
        net.generators[0].bus = 99;
        let text = serde_json::to_string(&net).unwrap();
        let err = parse_network(&text, Path::new("case.json")).unwrap_err();
        assert_eq!(err.to_string(), "generator 1: unknown bus 99");
    }

    #[test]
    fn malformed_json_reports_line() {
        let err = parse_network("{\n\"buses\": [\n  oops\n]}", Path::new("bad.json")).unwrap_err();
        match err {
            PspsError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn initially_on_defaults_false() {
        let mut v = serde_json::to_value(three_bus()).unwrap();
        v["generators"][0].as_object_mut().unwrap().remove("initially_on");
        let net: PowerNetwork = serde_json::from_value(v).unwrap();
        assert!(!net.generators[0].initially_on);
    }

    #[test]
    fn with_horizon_pads_with_last_value() {
        let net = three_bus().with_horizon(4);
        assert_eq!(net.demands[0].base_profile, vec![60.0, 80.0, 80.0, 80.0]);
        assert_eq!(net.reference_bus(), 1);
    }
}
