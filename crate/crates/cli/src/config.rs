//! Experiment configuration: one TOML file per sweep.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use vecrisk::channel::{MAX_DISTANCE_M, MIN_DISTANCE_M};
use vecrisk::engine::{ScenarioConfig, SchemeKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed shared by every cell, so schemes face the same channels.
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub schemes: Vec<SchemeKind>,
    #[serde(default)]
    pub rho: Vec<f64>,
    #[serde(default)]
    pub vues: Vec<usize>,
    #[serde(default = "default_iterations")]
    pub iterations: u64,
    /// Trailing iterations pooled into the statistics.
    #[serde(default = "default_window")]
    pub window: u64,
    #[serde(default = "default_stride")]
    pub thinning_stride: u64,
    #[serde(default = "default_true")]
    pub write_ccdf: bool,
    #[serde(default)]
    pub write_records: bool,
    #[serde(default)]
    pub scenario: ScenarioConfig,
}

fn default_iterations() -> u64 {
    10_000
}

fn default_window() -> u64 {
    5_000
}

fn default_stride() -> u64 {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.reason)
    }
}

/// One (scheme, ρ, V) point of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub scheme: SchemeKind,
    pub rho: f64,
    pub vues: usize,
}

impl Cell {
    /// `<scheme>_<rho>_<V>`, used in per-cell file names.
    pub fn tag(&self) -> String {
        format!("{}_{}_{}", self.scheme, self.rho, self.vues)
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> Result<String, toml::ser::Error> {
        toml::to_string(self)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| anyhow::anyhow!("parsing {}: {e}", path.display()))
    }

    /// Every violation in the config; empty when it is usable.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut bad = |path: String, reason: String| out.push(Violation { path, reason });

        for (i, &r) in self.rho.iter().enumerate() {
            if !(r.is_finite() && r > 0.0) {
                bad(format!("rho[{i}]"), format!("{r} must be positive and finite"));
            }
        }
        for (i, &v) in self.vues.iter().enumerate() {
            if v == 0 {
                bad(format!("vues[{i}]"), "need at least one VUE".into());
            }
        }
        if self.window < 2 {
            bad(
                "window".into(),
                format!("{} is too small for a variance (need >= 2)", self.window),
            );
        }
        if self.window > self.iterations {
            bad(
                "window".into(),
                format!("{} exceeds iterations = {}", self.window, self.iterations),
            );
        }
        if self.thinning_stride == 0 {
            bad("thinning_stride".into(), "must be at least 1".into());
        }

        let sc = &self.scenario;
        if sc.physical.cameras == 0 {
            bad("scenario.physical.cameras".into(), "need at least one camera".into());
        }
        for name in sc.physical.non_positive_fields() {
            if name != "cameras" {
                bad(
                    format!("scenario.physical.{name}"),
                    "must be positive and finite".into(),
                );
            }
        }
        let ch = &sc.channel;
        if !(ch.min_distance_m >= MIN_DISTANCE_M) {
            bad(
                "scenario.channel.min_distance_m".into(),
                format!("{} below the {MIN_DISTANCE_M} m model range", ch.min_distance_m),
            );
        }
        if !(ch.max_distance_m <= MAX_DISTANCE_M) {
            bad(
                "scenario.channel.max_distance_m".into(),
                format!("{} above the {MAX_DISTANCE_M} m model range", ch.max_distance_m),
            );
        }
        if !(ch.min_distance_m < ch.max_distance_m) {
            bad(
                "scenario.channel.max_distance_m".into(),
                "must exceed min_distance_m".into(),
            );
        }
        let q = &ch.quantizer;
        if !(q.threshold.is_finite() && q.threshold > 0.0) {
            bad(
                "scenario.channel.quantizer.threshold".into(),
                format!("{} must be positive", q.threshold),
            );
        }
        if !(q.low_multiplier > 0.0 && q.low_multiplier < q.high_multiplier && q.high_multiplier.is_finite()) {
            bad(
                "scenario.channel.quantizer".into(),
                "need 0 < low_multiplier < high_multiplier".into(),
            );
        }
        if let Some(g) = &ch.geometry {
            if let Err(e) = g.validate() {
                bad("scenario.channel.geometry".into(), e.to_string());
            }
            if g.cameras() != sc.physical.cameras {
                bad(
                    "scenario.channel.geometry".into(),
                    format!(
                        "{} cameras per VUE, physical.cameras = {}",
                        g.cameras(),
                        sc.physical.cameras
                    ),
                );
            }
            if let Some(&v) = self.vues.iter().max() {
                if v > g.vues() {
                    bad(
                        "scenario.channel.geometry".into(),
                        format!("pins {} VUEs but vues asks for {v}", g.vues()),
                    );
                }
            }
        }
        if !(sc.learning.xi.is_finite() && sc.learning.xi > 0.0) {
            bad(
                "scenario.learning.xi".into(),
                format!("{} must be positive", sc.learning.xi),
            );
        }
        for reason in sc.learning.rates.violations() {
            bad("scenario.learning.rates".into(), reason);
        }
        out
    }

    /// Cells in output order: scheme name, then ρ, then V.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells: Vec<Cell> = self
            .schemes
            .iter()
            .flat_map(|&scheme| {
                self.rho
                    .iter()
                    .flat_map(move |&rho| self.vues.iter().map(move |&vues| Cell { scheme, rho, vues }))
            })
            .collect();
        cells.sort_by(|a, b| {
            a.scheme
                .name()
                .cmp(b.scheme.name())
                .then(a.rho.total_cmp(&b.rho))
                .then(a.vues.cmp(&b.vues))
        });
        cells.dedup();
        cells
    }
}
