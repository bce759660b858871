//! Executing cells and writing `summary.csv`, per-cell CCDFs, records and
//! checkpoints, and `manifest.json`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context};
use serde::Serialize;

use vecrisk::agent::write_checkpoint;
use vecrisk::engine::{run_with, RunOptions, RunResult, Scenario};
use vecrisk::metrics::{ccdf, summarize, RiskSummary};

use crate::config::{Cell, ExperimentConfig};

pub const SUMMARY_HEADER: [&str; 10] = [
    "scheme",
    "rho",
    "V",
    "mean_s",
    "std_s",
    "variance_s2",
    "skewness",
    "entropic_risk_s",
    "n_samples",
    "seed",
];

/// Shortest decimal string that parses back to the same double.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Creates `dir` and proves it writable before any simulation starts.
pub fn preflight(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    let probe = dir.join(".vecrisk-preflight");
    File::create(&probe)
        .and_then(|mut f| f.write_all(b"ok"))
        .with_context(|| format!("output directory {} is not writable", dir.display()))?;
    fs::remove_file(&probe).with_context(|| format!("cleaning {}", probe.display()))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct CellReport {
    pub scheme: String,
    pub rho: f64,
    #[serde(rename = "V")]
    pub vues: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub files: Vec<String>,
    #[serde(skip)]
    pub summary: Option<RiskSummary>,
}

#[derive(Debug, Default)]
pub struct Report {
    pub cells: Vec<CellReport>,
}

impl Report {
    pub fn failures(&self) -> impl Iterator<Item = &CellReport> {
        self.cells.iter().filter(|c| c.error.is_some())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Extras {
    /// Per-iteration records dump.
    pub records: bool,
    /// Final agent tables.
    pub checkpoint: bool,
}

/// Runs every cell, continuing past failures, then writes the summary and
/// manifest. The config must already be validated and the directory
/// preflighted.
pub fn execute(config: &ExperimentConfig, extras: Extras) -> anyhow::Result<Report> {
    let dir = &config.output_dir;
    let mut report = Report::default();
    for cell in config.cells() {
        eprintln!("cell {}", cell.tag());
        let mut files = Vec::new();
        let outcome = run_cell(config, cell, extras, &mut files);
        if let Err(e) = &outcome {
            eprintln!("cell {} failed: {e:#}", cell.tag());
        }
        report.cells.push(CellReport {
            scheme: cell.scheme.name().to_owned(),
            rho: cell.rho,
            vues: cell.vues,
            error: outcome.as_ref().err().map(|e| format!("{e:#}")),
            files,
            summary: outcome.ok(),
        });
    }
    if !report.cells.is_empty() {
        write_summary(&dir.join("summary.csv"), config.seed, &report)?;
    }
    write_manifest(&dir.join("manifest.json"), config, &report)?;
    Ok(report)
}

fn run_cell(
    config: &ExperimentConfig,
    cell: Cell,
    extras: Extras,
    files: &mut Vec<String>,
) -> anyhow::Result<RiskSummary> {
    let scenario = Scenario::new(&config.scenario, cell.vues, cell.rho)?;
    let options = RunOptions {
        thinning_stride: config.thinning_stride,
    };
    let result = run_with(&scenario, cell.scheme, config.iterations, config.seed, options)?;
    let delays = result.tail_delays(config.window);
    let summary = summarize(&delays, cell.rho)?;
    let dir = &config.output_dir;
    let tag = cell.tag();

    if config.write_ccdf {
        let name = format!("ccdf_{tag}.csv");
        let mut w = csv::Writer::from_path(dir.join(&name))?;
        w.write_record(["threshold_s", "exceedance"])?;
        for &(x, p) in ccdf(&delays)?.points() {
            w.write_record([fmt_f64(x), fmt_f64(p)])?;
        }
        w.flush()?;
        files.push(name);
    }
    if extras.records || config.write_records {
        let name = format!("records_{tag}.csv");
        write_records(&dir.join(&name), &result)?;
        files.push(name);
    }
    if extras.checkpoint {
        let name = format!("checkpoint_{tag}.csv");
        write_checkpoint(BufWriter::new(File::create(dir.join(&name))?), &result.tables)?;
        files.push(name);
    }
    Ok(summary)
}

fn write_records(path: &Path, result: &RunResult) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "t",
        "vue",
        "state",
        "action",
        "power_w",
        "fetch_s",
        "local_compute_s",
        "server_compute_s",
        "downlink_s",
        "e2e_s",
        "utility",
    ])?;
    for rec in &result.records {
        for (v, r) in rec.vues.iter().enumerate() {
            let d = r.delay;
            w.write_record([
                rec.t.to_string(),
                v.to_string(),
                r.state.0.to_string(),
                r.action.index().to_string(),
                fmt_f64(r.power_w),
                fmt_f64(d.fetch_s),
                fmt_f64(d.local_compute_s),
                fmt_f64(d.server_compute_s),
                fmt_f64(d.downlink_s),
                fmt_f64(d.e2e_s),
                fmt_f64(r.utility),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_summary(path: &Path, seed: u64, report: &Report) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for c in &report.cells {
        let Some(s) = &c.summary else { continue };
        w.write_record([
            c.scheme.clone(),
            fmt_f64(c.rho),
            c.vues.to_string(),
            fmt_f64(s.mean_s),
            fmt_f64(s.std_s),
            fmt_f64(s.variance_s2),
            s.skewness.map(fmt_f64).unwrap_or_default(),
            fmt_f64(s.entropic_risk_s),
            s.samples.to_string(),
            seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: Tool,
    config: &'a ExperimentConfig,
    cells: &'a [CellReport],
}

#[derive(Serialize)]
struct Tool {
    name: &'static str,
    version: &'static str,
    core_version: &'static str,
    git_revision: &'static str,
}

fn write_manifest(path: &Path, config: &ExperimentConfig, report: &Report) -> anyhow::Result<()> {
    let manifest = Manifest {
        tool: Tool {
            name: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            core_version: vecrisk::VERSION,
            git_revision: env!("VECRISK_GIT_REVISION"),
        },
        config,
        cells: &report.cells,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Validates, preflights, then executes. Validation problems come back as
/// one error listing every violation.
pub fn prepare_and_execute(config: &ExperimentConfig, extras: Extras) -> anyhow::Result<Report> {
    let violations = config.validate();
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
        bail!("invalid config:\n  {}", list.join("\n  "));
    }
    preflight(&config.output_dir)?;
    execute(config, extras)
}
