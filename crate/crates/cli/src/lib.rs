//! `psps` command-line pipeline: risk build, scenarios, day-ahead solve,
//! real-time Monte Carlo and analysis reports, each run leaving a manifest.

pub mod config;
pub mod error;
mod manifest;
pub mod pipeline;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use psps_core::analytics::{kmeans_regions, mae_by_bus, mae_improvement, owip_histogram, FireRecord};
use psps_core::formulation::{load_plan, CvarConfig};
use psps_core::risk::Metric;
use serde::Serialize;

pub use config::RunConfig;
pub use error::{CliError, Stage};
use pipeline::Output;

#[derive(Debug, Parser)]
#[command(name = "psps", version, about = "Wildfire shutoff planning: day-ahead plans and real-time evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MetricArg {
    Wfpi,
    Wlfp,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Real-time Monte Carlo samples.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Whole pipeline: risk, scenarios, day-ahead solve, real-time evaluation.
    Run(Common),
    /// Day-ahead solve only.
    SolveDa(Common),
    /// Real-time evaluation of a saved plan.
    SimulateRt {
        #[command(flatten)]
        common: Common,
        /// Plan JSON written by `solve-da`; overrides the config.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        onset: Option<psps_core::rt::OnsetMode>,
    },
    /// Day-ahead solves over a grid of risk tolerances.
    Sweep(Common),
    /// Line ignition probabilities from the raster.
    Risk {
        #[command(subcommand)]
        action: RiskCommand,
    },
    Analyze {
        #[command(subcommand)]
        action: AnalyzeCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum RiskCommand {
    Build(Common),
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Value of the stochastic solution and of perfect information.
    Vss {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Monthly error between bus WIP series and cluster OWIP series.
    Mae {
        /// CSV `bus,m1..m12`.
        #[arg(long)]
        wip: PathBuf,
        /// Second metric's series, for the improvement column.
        #[arg(long)]
        wip_second: Option<PathBuf>,
        /// CSV `cluster,m1..m12`.
        #[arg(long)]
        owip: PathBuf,
        /// CSV `bus,cluster`.
        #[arg(long)]
        assignment: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// K-means regions of historical fires with hull areas and OWIP.
    Clusters {
        /// CSV `date,latitude,longitude,acres`.
        #[arg(long)]
        fires: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Years spanned by the fire records.
        #[arg(long, default_value_t = 1)]
        years: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

/// Loads the config, applies command-line overrides and checks inputs.
/// Returns the config and its hash.
pub fn prepare(common: &Common) -> Result<(RunConfig, String), CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(n) = common.samples {
        cfg.rt.samples = n;
    }
    if let Some(m) = common.metric {
        cfg.metric = match m {
            MetricArg::Wfpi => Metric::Wfpi,
            MetricArg::Wlfp => Metric::Wlfp,
        };
    }
    let hash = cfg.hash();
    cfg.resolve(common.config.parent().unwrap_or(Path::new(".")));
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    cfg.check_inputs()?;
    Ok((cfg, hash))
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run(c) => run(c, "run", true),
        Command::SolveDa(c) => run(c, "solve-da", false),
        Command::SimulateRt { common, plan, onset } => simulate_rt(common, plan.as_deref(), *onset),
        Command::Sweep(c) => sweep(c),
        Command::Risk {
            action: RiskCommand::Build(c),
        } => risk_build(c),
        Command::Analyze { action } => match action {
            AnalyzeCommand::Vss { common, beta, epsilon } => vss(common, *beta, *epsilon),
            AnalyzeCommand::Mae {
                wip,
                wip_second,
                owip,
                assignment,
                out,
            } => mae(wip, wip_second.as_deref(), owip, assignment, out),
            AnalyzeCommand::Clusters {
                fires,
                k,
                seed,
                years,
                out,
            } => clusters(fires, *k, *seed, *years, out),
        },
    }
}

fn run(common: &Common, command: &str, with_rt: bool) -> Result<(), CliError> {
    let (cfg, hash) = prepare(common)?;
    let net = pipeline::network(&cfg)?;
    let risk = pipeline::line_risk(&cfg, &net)?;
    let set = pipeline::scenarios(&cfg, &net, risk.as_deref())?;
    let mut out = Output::create(&cfg.out)?;
    if let Some(r) = &risk {
        out.json("line_risk.json", r)?;
    }
    out.json("scenarios.json", &set)?;
    let sol = pipeline::day_ahead(&cfg, &net, &set)?;
    pipeline::write_day_ahead(&mut out, Path::new(""), &net, &set, &cfg.budget, &sol)?;
    if with_rt {
        let (rt_risk, demand) = pipeline::rt_inputs(&cfg, &net, risk.as_deref(), &set)?;
        let report = pipeline::simulate(&cfg, &net, &sol.plan, &rt_risk, &demand, 0)?;
        pipeline::write_rt(&mut out, Path::new(""), &report)?;
    }
    manifest::write(&out, command, cfg.seed, &hash)
}

fn simulate_rt(common: &Common, plan: Option<&Path>, onset: Option<psps_core::rt::OnsetMode>) -> Result<(), CliError> {
    let (mut cfg, hash) = prepare(common)?;
    if let Some(o) = onset {
        cfg.rt.onset = o;
    }
    let plan_path = match plan.map(Path::to_path_buf).or(cfg.plan.clone()) {
        Some(p) => p,
        None => return Err(CliError::config("simulate-rt needs --plan or `plan` in the config")),
    };
    if !plan_path.is_file() {
        return Err(CliError::missing_input(Stage::RtEvaluator, &plan_path));
    }
    let net = pipeline::network(&cfg)?;
    let plan = load_plan(&plan_path).map_err(CliError::at(Stage::RtEvaluator))?;
    let risk = pipeline::line_risk(&cfg, &net)?;
    let set = pipeline::scenarios(&cfg, &net, risk.as_deref())?;
    let (rt_risk, demand) = pipeline::rt_inputs(&cfg, &net, risk.as_deref(), &set)?;
    let report = pipeline::simulate(&cfg, &net, &plan, &rt_risk, &demand, 0)?;
    let mut out = Output::create(&cfg.out)?;
    pipeline::write_rt(&mut out, Path::new(""), &report)?;
    manifest::write(&out, "simulate-rt", cfg.seed, &hash)
}

fn sweep(common: &Common) -> Result<(), CliError> {
    let (cfg, hash) = prepare(common)?;
    let net = pipeline::network(&cfg)?;
    let risk = pipeline::line_risk(&cfg, &net)?;
    let set = pipeline::scenarios(&cfg, &net, risk.as_deref())?;
    let mut out = Output::create(&cfg.out)?;
    pipeline::sweep(&cfg, &net, risk.as_deref(), &set, &mut out)?;
    manifest::write(&out, "sweep", cfg.seed, &hash)
}

fn risk_build(common: &Common) -> Result<(), CliError> {
    let (cfg, hash) = prepare(common)?;
    if cfg.raster.is_none() && cfg.line_risk.is_none() {
        return Err(CliError::config("risk build needs `raster` in the config"));
    }
    let net = pipeline::network(&cfg)?;
    let risk = pipeline::line_risk(&cfg, &net)?.unwrap_or_default();
    let mut out = Output::create(&cfg.out)?;
    out.json("line_risk.json", &risk)?;
    let mut text = String::from("line,pi,metric_value,cells\n");
    for r in &risk {
        let pi = r.pi.iter().copied().fold(0.0, f64::max);
        text.push_str(&format!("{},{},{},{}\n", r.line_id, pi, r.metric_value, r.cells.len()));
    }
    out.text("line_risk.csv", &text)?;
    manifest::write(&out, "risk build", cfg.seed, &hash)
}

fn vss(common: &Common, beta: Option<f64>, epsilon: Option<f64>) -> Result<(), CliError> {
    let (cfg, hash) = prepare(common)?;
    let mut cvar = cfg.cvar.unwrap_or(CvarConfig::new(0.0, 0.95));
    if let Some(b) = beta {
        cvar.beta = b;
    }
    if let Some(e) = epsilon {
        cvar.epsilon = e;
    }
    let net = pipeline::network(&cfg)?;
    let risk = pipeline::line_risk(&cfg, &net)?;
    let set = pipeline::scenarios(&cfg, &net, risk.as_deref())?;
    let report = pipeline::vss(&cfg, &net, &set, cvar)?;
    let mut out = Output::create(&cfg.out)?;
    out.json("vss.json", &report)?;
    let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let text = format!(
        "beta,epsilon,ev,mrws,mrrp,mrev,mrvpi,mrvss\n{},{},{},{},{},{},{},{}\n",
        report.beta,
        report.epsilon,
        cell(report.ev),
        cell(report.mrws),
        cell(report.mrrp),
        cell(report.mrev),
        cell(report.mrvpi),
        cell(report.mrvss)
    );
    out.text("vss.csv", &text)?;
    manifest::write(&out, "analyze vss", cfg.seed, &hash)
}

fn read_series(path: &Path) -> Result<Vec<(usize, Vec<f64>)>, CliError> {
    let bad = |m: String| CliError {
        stage: Stage::Analytics,
        kind: "ParseError".into(),
        message: format!("{}: {m}", path.display()),
        exit_code: error::exit::CONFIG,
    };
    if !path.is_file() {
        return Err(CliError::missing_input(Stage::Analytics, path));
    }
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let nums = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad(format!("bad number `{s}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        let Some((&id, rest)) = nums.split_first() else {
            continue;
        };
        rows.push((id as usize, rest.to_vec()));
    }
    Ok(rows)
}

#[derive(Serialize)]
struct MaeRow {
    bus: usize,
    cluster: usize,
    mae: f64,
    mae_second: Option<f64>,
    improvement_pct: Option<f64>,
}

fn mae(wip: &Path, wip_second: Option<&Path>, owip: &Path, assignment: &Path, out: &Path) -> Result<(), CliError> {
    let at = CliError::at(Stage::Analytics);
    let first = read_series(wip)?;
    let assign_rows = read_series(assignment)?;
    let owip_rows = read_series(owip)?;
    let cluster_of = |bus: usize| -> Result<usize, CliError> {
        assign_rows
            .iter()
            .find(|r| r.0 == bus)
            .and_then(|r| r.1.first())
            .map(|&c| c as usize)
            .ok_or_else(|| CliError::config(format!("bus {bus} has no cluster assignment")))
    };
    // clusters are numbered as in the OWIP file
    let owip_ids: Vec<usize> = owip_rows.iter().map(|r| r.0).collect();
    let owip_series: Vec<Vec<f64>> = owip_rows.iter().map(|r| r.1.clone()).collect();
    let index_of = |c: usize| -> Result<usize, CliError> {
        owip_ids
            .iter()
            .position(|&x| x == c)
            .ok_or_else(|| CliError::config(format!("cluster {c} has no OWIP series")))
    };
    let clusters: Vec<usize> = first.iter().map(|r| cluster_of(r.0)).collect::<Result<_, _>>()?;
    let idx: Vec<usize> = clusters.iter().map(|&c| index_of(c)).collect::<Result<_, _>>()?;
    let series: Vec<Vec<f64>> = first.iter().map(|r| r.1.clone()).collect();
    let m1 = mae_by_bus(&series, &owip_series, &idx).map_err(&at)?;
    let m2 = match wip_second {
        Some(p) => {
            let second = read_series(p)?;
            let s2: Vec<Vec<f64>> = first
                .iter()
                .map(|r| {
                    second
                        .iter()
                        .find(|x| x.0 == r.0)
                        .map(|x| x.1.clone())
                        .ok_or_else(|| CliError::config(format!("bus {} missing from {}", r.0, p.display())))
                })
                .collect::<Result<_, _>>()?;
            Some(mae_by_bus(&s2, &owip_series, &idx).map_err(&at)?)
        }
        None => None,
    };
    let rows: Vec<MaeRow> = first
        .iter()
        .enumerate()
        .map(|(i, r)| MaeRow {
            bus: r.0,
            cluster: clusters[i],
            mae: m1[i],
            mae_second: m2.as_ref().map(|m| m[i]),
            improvement_pct: m2.as_ref().map(|m| mae_improvement(m1[i], m[i])),
        })
        .collect();
    let mut o = Output::create(out)?;
    o.json("mae.json", &rows)?;
    let mut text = String::from("bus,cluster,mae,mae_second,improvement_pct\n");
    let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in &rows {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            r.bus,
            r.cluster,
            r.mae,
            cell(r.mae_second),
            cell(r.improvement_pct)
        ));
    }
    o.text("mae.csv", &text)?;
    let hash = pipeline::sha256_hex(format!("mae/{}/{:?}/{}/{}", wip.display(), wip_second, owip.display(), assignment.display()).as_bytes());
    manifest::write(&o, "analyze mae", 0, &hash)
}

#[derive(Serialize)]
struct ClusterReport {
    k: usize,
    seed: u64,
    years: usize,
    centroids: Vec<(f64, f64)>,
    hull_area_km2: Vec<f64>,
    owip: Vec<[f64; 12]>,
}

fn clusters(fires: &Path, k: usize, seed: u64, years: usize, out: &Path) -> Result<(), CliError> {
    let at = CliError::at(Stage::Analytics);
    if !fires.is_file() {
        return Err(CliError::missing_input(Stage::Analytics, fires));
    }
    let mut rdr = csv::Reader::from_path(fires).map_err(|e| CliError::io(fires, e))?;
    let records: Vec<FireRecord> = rdr
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError {
            stage: Stage::Analytics,
            kind: "ParseError".into(),
            message: format!("{}: {e}", fires.display()),
            exit_code: error::exit::CONFIG,
        })?;
    let c = kmeans_regions(&records, k, seed).map_err(&at)?;
    let mut owip = Vec::with_capacity(k);
    for (j, &area) in c.hull_area_km2.iter().enumerate() {
        let members: Vec<FireRecord> = records
            .iter()
            .zip(&c.assignment)
            .filter(|(_, &a)| a == j)
            .map(|(r, _)| r.clone())
            .collect();
        owip.push(owip_histogram(&members, area, years).map_err(&at)?);
    }
    let mut o = Output::create(out)?;
    let mut text = String::from("date,latitude,longitude,cluster\n");
    for (r, a) in records.iter().zip(&c.assignment) {
        text.push_str(&format!("{},{},{},{}\n", r.date, r.latitude, r.longitude, a));
    }
    o.text("assignment.csv", &text)?;
    let mut text = String::from("cluster,m1,m2,m3,m4,m5,m6,m7,m8,m9,m10,m11,m12\n");
    for (j, row) in owip.iter().enumerate() {
        let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text.push_str(&format!("{j},{}\n", vals.join(",")));
    }
    o.text("owip.csv", &text)?;
    o.json(
        "clusters.json",
        &ClusterReport {
            k,
            seed,
            years,
            centroids: c.centroids,
            hull_area_km2: c.hull_area_km2,
            owip,
        },
    )?;
    let hash = pipeline::sha256_hex(format!("clusters/{}/{k}/{years}", fires.display()).as_bytes());
    manifest::write(&o, "analyze clusters", seed, &hash)
}
