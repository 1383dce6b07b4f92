//! Output files: trace CSVs, summaries, manifests, sweep tables and
//! long-format plot data.
//!
//! Everything written here is a pure function of the configuration, except
//! files with `timing` in their name, which hold wall-clock measurements.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::baselines::run_algorithm;
use crate::config::{Algorithm, ExperimentConfig};
use crate::error::{Error, Result};
use crate::simulator::{diagnostics, Diagnostics, Environment, MetricsTrace, RunStatus, RunSummary};

pub const ARTIFACT_VERSION: &str = concat!("ceps ", env!("CARGO_PKG_VERSION"));

pub const TRACE_HEADER: &str = "algorithm,tick,comm_round,objective,consensus_residual,dtv_bits_ideal,\
dtv_bits_framed,eps_total,delta_total_raw,delta_total_capped,decode_failures,clip_count,e_inf_proxy";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub config_path: Option<String>,
    pub config_hash: String,
    pub seed: u64,
    pub output_dir: String,
    pub version: String,
}

impl RunManifest {
    pub fn new(cfg: &ExperimentConfig, config_path: Option<&Path>, output_dir: &Path) -> Self {
        RunManifest {
            config_path: config_path.map(|p| p.display().to_string()),
            config_hash: cfg.config_hash(),
            seed: cfg.seed,
            output_dir: output_dir.display().to_string(),
            version: ARTIFACT_VERSION.to_string(),
        }
    }
}

pub fn trace_csv(trace: &MetricsTrace) -> String {
    let mut out = String::with_capacity(96 * (trace.rows.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            trace.label,
            r.tick,
            r.comm_round,
            r.objective,
            r.consensus_residual,
            r.dtv_bits_ideal,
            r.dtv_bits_framed,
            r.eps_total,
            r.delta_total_raw,
            r.delta_total_capped,
            r.decode_failures,
            r.clip_count,
            r.e_inf_proxy
        )
        .unwrap();
    }
    out
}

pub fn timing_csv(trace: &MetricsTrace) -> String {
    let mut out = String::from("algorithm,tick,wall_ms\n");
    for (r, ms) in trace.rows.iter().zip(&trace.wall_ms) {
        writeln!(out, "{},{},{ms:.3}", trace.label, r.tick).unwrap();
    }
    out
}

/// Applies a run label to a base configuration. Accepts bare algorithm
/// tags (`ceps`, `dpsgd-pc`, ...), CEPS variants
/// (`ceps-{dp,nodp}-{1bcs,perf}`) and baselines with a privacy suffix
/// (`dfedavgm-nodp`).
pub fn configure_variant(base: &ExperimentConfig, label: &str) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    if let Ok(a) = label.parse::<Algorithm>() {
        cfg.algorithm = a;
        return Ok(cfg);
    }
    if let Some(rest) = label.strip_prefix("ceps-") {
        let (dp, comm) = rest
            .split_once('-')
            .ok_or_else(|| Error::Config(format!("unknown variant `{label}`")))?;
        cfg.algorithm = Algorithm::Ceps;
        cfg.privacy.enabled = parse_dp(dp, label)?;
        cfg.codec.perfect_comm = match comm {
            "1bcs" => false,
            "perf" => true,
            _ => return Err(Error::Config(format!("unknown variant `{label}`"))),
        };
        return Ok(cfg);
    }
    let (tag, dp) = label
        .rsplit_once('-')
        .ok_or_else(|| Error::Config(format!("unknown variant `{label}`")))?;
    cfg.algorithm = tag.parse()?;
    cfg.privacy.enabled = parse_dp(dp, label)?;
    Ok(cfg)
}

fn parse_dp(s: &str, label: &str) -> Result<bool> {
    match s {
        "dp" => Ok(true),
        "nodp" => Ok(false),
        _ => Err(Error::Config(format!("unknown variant `{label}`"))),
    }
}

/// The four CEPS variants compared in the self-comparison tables.
pub const CEPS_VARIANTS: [&str; 4] = ["ceps-dp-1bcs", "ceps-nodp-1bcs", "ceps-dp-perf", "ceps-nodp-perf"];

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub summary: RunSummary,
    pub diagnostics: Option<Diagnostics>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub manifest: RunManifest,
    pub traces: Vec<MetricsTrace>,
    pub records: Vec<RunRecord>,
}

impl ExperimentOutcome {
    pub fn all_converged(&self) -> bool {
        self.traces.iter().all(MetricsTrace::converged)
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Runs every labelled variant on one shared environment and writes
/// `manifest.json`, `summary.json`, `trace.csv` (all runs, long format),
/// `timing.csv` and the plot-data files into `out_dir`.
pub fn run_experiment(
    base: &ExperimentConfig,
    variants: &[String],
    config_path: Option<&Path>,
    out_dir: &Path,
) -> Result<ExperimentOutcome> {
    base.validate()?;
    create_dir(out_dir)?;
    let manifest = RunManifest::new(base, config_path, out_dir);
    let env = Environment::build(base)?;
    let labels: Vec<String> = if variants.is_empty() {
        vec![base.algorithm.tag().to_string()]
    } else {
        variants.to_vec()
    };
    let mut traces = Vec::new();
    let mut records = Vec::new();
    for label in &labels {
        let cfg = configure_variant(base, label)?;
        log::info!("running {label}");
        let trace = run_algorithm(&cfg, &env)?;
        records.push(RunRecord {
            summary: trace.summary(&env),
            diagnostics: diagnostics(&trace, &env, &cfg).ok(),
            config: cfg,
        });
        traces.push(trace);
    }

    let mut all = String::from(TRACE_HEADER);
    all.push('\n');
    let mut timing = String::from("algorithm,tick,wall_ms\n");
    for t in &traces {
        all.push_str(trace_csv(t).split_once('\n').unwrap().1);
        timing.push_str(timing_csv(t).split_once('\n').unwrap().1);
    }
    write(&out_dir.join("trace.csv"), &all)?;
    write(&out_dir.join("timing.csv"), &timing)?;
    write(&out_dir.join("manifest.json"), &json(&manifest)?)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        manifest: &'a RunManifest,
        runs: &'a [RunRecord],
    }
    write(
        &out_dir.join("summary.json"),
        &json(&Summary {
            manifest: &manifest,
            runs: &records,
        })?,
    )?;
    export_plot_data(&traces, out_dir)?;
    Ok(ExperimentOutcome {
        manifest,
        traces,
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    M,
    Epsilon,
    R,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::M => "m",
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::R => "r",
        }
    }

    pub fn apply(self, cfg: &mut ExperimentConfig, value: f64) -> Result<()> {
        match self {
            SweepAxis::M => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::Config(format!("m = {value} is not a positive integer")));
                }
                cfg.problem.m = value as usize;
            }
            SweepAxis::Epsilon => cfg.privacy.epsilon = value,
            SweepAxis::R => cfg.topology.r = value,
        }
        cfg.validate()
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m" => Ok(SweepAxis::M),
            "epsilon" | "eps" => Ok(SweepAxis::Epsilon),
            "r" => Ok(SweepAxis::R),
            other => Err(Error::Config(format!("unknown sweep axis `{other}` (use m, epsilon or r)"))),
        }
    }
}

/// Parses `AXIS=v1,v2,...`.
pub fn parse_sweep(arg: &str) -> Result<(SweepAxis, Vec<f64>)> {
    let (axis, values) = arg
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("sweep `{arg}` is not AXIS=v1,v2,...")))?;
    let values = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("sweep value `{v}` is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    Ok((axis.trim().parse()?, values))
}

/// One (value, variant) cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub axis: SweepAxis,
    pub value: f64,
    pub label: String,
    pub status: Option<RunStatus>,
    pub objective: f64,
    pub ticks: u64,
    pub comm_rounds: u64,
    pub dtv_bytes_ideal: f64,
    pub dtv_bytes_framed: f64,
    pub eps_total: f64,
    pub wall_ms: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub cells: Vec<SweepCell>,
}

impl SweepTable {
    pub fn cell(&self, value: f64, label: &str) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.value == value && c.label == label)
    }

    /// Deterministic columns only.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "axis,value,algorithm,status,objective,iterations,comm_rounds,dtv_bytes_ideal,dtv_bytes_framed,eps_total,error\n",
        );
        for c in &self.cells {
            let status = c.status.map_or("error".to_string(), |s| {
                serde_json::to_value(s).unwrap().as_str().unwrap().to_string()
            });
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                self.axis.name(),
                c.value,
                c.label,
                status,
                c.objective,
                c.ticks,
                c.comm_rounds,
                c.dtv_bytes_ideal,
                c.dtv_bytes_framed,
                c.eps_total,
                c.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
            )
            .unwrap();
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("axis,value,algorithm,time_s\n");
        for c in &self.cells {
            writeln!(out, "{},{},{},{:.3}", self.axis.name(), c.value, c.label, c.wall_ms / 1e3).unwrap();
        }
        out
    }

    pub fn all_converged(&self) -> bool {
        self.cells.iter().all(|c| c.status == Some(RunStatus::Converged))
    }
}

/// Runs every variant at every axis value. A failing cell is recorded with
/// its error and the sweep moves on. Environments are shared between
/// cells whenever the axis does not change the problem.
pub fn sweep(
    base: &ExperimentConfig,
    variants: &[String],
    axis: SweepAxis,
    values: &[f64],
    out_dir: Option<&Path>,
) -> Result<SweepTable> {
    let labels: Vec<String> = if variants.is_empty() {
        vec![base.algorithm.tag().to_string()]
    } else {
        variants.to_vec()
    };
    let mut envs: BTreeMap<usize, Environment> = BTreeMap::new();
    let mut cells = Vec::new();
    for &value in values {
        for label in &labels {
            let cell_result = (|| -> Result<(MetricsTrace, RunSummary)> {
                let mut cfg = configure_variant(base, label)?;
                axis.apply(&mut cfg, value)?;
                let key = cfg.problem.m;
                if !envs.contains_key(&key) {
                    envs.insert(key, Environment::build(&cfg)?);
                }
                let env = &envs[&key];
                let trace = run_algorithm(&cfg, env)?;
                let summary = trace.summary(env);
                Ok((trace, summary))
            })();
            let cell = match cell_result {
                Ok((trace, s)) => {
                    if let Some(dir) = out_dir {
                        let cell_dir = dir.join(format!("{}_{}_{}", axis.name(), value, label));
                        create_dir(&cell_dir)?;
                        write(&cell_dir.join("trace.csv"), &trace_csv(&trace))?;
                        write(&cell_dir.join("timing.csv"), &timing_csv(&trace))?;
                    }
                    SweepCell {
                        axis,
                        value,
                        label: label.clone(),
                        status: Some(s.status),
                        objective: s.final_objective,
                        ticks: s.ticks,
                        comm_rounds: s.comm_rounds,
                        dtv_bytes_ideal: s.dtv_bits_ideal as f64 / 8.0,
                        dtv_bytes_framed: s.dtv_bits_framed as f64 / 8.0,
                        eps_total: s.eps_total,
                        wall_ms: trace.wall_ms.last().copied().unwrap_or(0.0),
                        error: None,
                    }
                }
                Err(e) => {
                    log::warn!("sweep cell {}={value} {label} failed: {e}", axis.name());
                    SweepCell {
                        axis,
                        value,
                        label: label.clone(),
                        status: None,
                        objective: f64::NAN,
                        ticks: 0,
                        comm_rounds: 0,
                        dtv_bytes_ideal: f64::NAN,
                        dtv_bytes_framed: f64::NAN,
                        eps_total: f64::NAN,
                        wall_ms: 0.0,
                        error: Some(e.to_string()),
                    }
                }
            };
            cells.push(cell);
        }
    }
    let table = SweepTable { axis, cells };
    if let Some(dir) = out_dir {
        create_dir(dir)?;
        write(&dir.join("sweep.csv"), &table.to_csv())?;
        write(&dir.join("sweep_timing.csv"), &table.timing_csv())?;
        export_sweep_plot_data(&table, dir)?;
    }
    Ok(table)
}

fn long_header() -> String {
    "algorithm,x_metric,x,y_metric,y\n".to_string()
}

/// `objective_vs_round.csv`: one row per recorded tick and trace.
pub fn objective_vs_round(traces: &[MetricsTrace]) -> String {
    let mut out = long_header();
    for t in traces {
        for r in &t.rows {
            writeln!(out, "{},tick,{},objective,{}", t.label, r.tick, r.objective).unwrap();
        }
    }
    out
}

pub fn export_plot_data(traces: &[MetricsTrace], dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let path = dir.join("objective_vs_round.csv");
    write(&path, &objective_vs_round(traces))?;
    Ok(vec![path])
}

/// `cr_vs_<axis>.csv`, `dtv_vs_<axis>.csv` and `time_vs_<axis>.csv` (the
/// last one holds wall-clock times).
pub fn export_sweep_plot_data(table: &SweepTable, dir: &Path) -> Result<Vec<PathBuf>> {
    let axis = table.axis.name();
    let mut cr = long_header();
    let mut dtv = long_header();
    let mut time = long_header();
    for c in table.cells.iter().filter(|c| c.error.is_none()) {
        writeln!(cr, "{},{axis},{},comm_rounds,{}", c.label, c.value, c.comm_rounds).unwrap();
        writeln!(dtv, "{},{axis},{},dtv_bytes,{}", c.label, c.value, c.dtv_bytes_ideal).unwrap();
        writeln!(time, "{},{axis},{},time_s,{:.3}", c.label, c.value, c.wall_ms / 1e3).unwrap();
    }
    let files = [
        (dir.join(format!("cr_vs_{axis}.csv")), cr),
        (dir.join(format!("dtv_vs_{axis}.csv")), dtv),
        (dir.join(format!("time_vs_{axis}.csv")), time),
    ];
    let mut out = Vec::new();
    for (path, contents) in files {
        write(&path, &contents)?;
        out.push(path);
    }
    Ok(out)
}
