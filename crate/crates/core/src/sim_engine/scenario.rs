//! Scenario file: what to simulate and with which configuration.
//!
//! ```json
//! {
//!   "name": "s2",
//!   "topology": "s2_topology.json",
//!   "trace": { "diurnal": { "days": 14, "peak_utilization": 0.7, "trough_utilization": 0.2, "peak_hour": 20 } },
//!   "mode": "a1",
//!   "seed": 7
//! }
//! ```
//!
//! Relative paths resolve against the scenario file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::es_rapp::{EsConfig, NotificationMode, ScriptedCommand};
use crate::ran_model::Topology;
use crate::traffic::{load_trace, synth_diurnal, DiurnalConfig, TrafficTrace};
use crate::ts_xapp::XappConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSource {
    File(PathBuf),
    Diurnal(DiurnalConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UeConfig {
    pub demand_prb: u32,
    /// Share of coverage-layer arrivals that are voice users.
    pub voice_fraction: f64,
    pub min_distance_m: f64,
    pub max_distance_m: f64,
}

impl Default for UeConfig {
    fn default() -> Self {
        Self {
            demand_prb: 5,
            voice_fraction: 0.3,
            min_distance_m: 30.0,
            max_distance_m: 400.0,
        }
    }
}

fn default_settle_budget() -> usize {
    16
}

fn default_true() -> bool {
    true
}

/// On-disk form of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub topology: PathBuf,
    pub trace: TraceSource,
    #[serde(default)]
    pub xapp: XappConfig,
    #[serde(default)]
    pub rapp: EsConfig,
    #[serde(default)]
    pub mode: NotificationMode,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to the whole trace.
    #[serde(default)]
    pub duration_intervals: Option<usize>,
    #[serde(default = "default_true")]
    pub es_enabled: bool,
    #[serde(default)]
    pub ue: UeConfig,
    #[serde(default = "default_settle_budget")]
    pub settle_budget: usize,
    #[serde(default)]
    pub commands: Vec<ScriptedCommand>,
}

/// A scenario with its topology and trace loaded.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub topology: Topology,
    pub trace: TrafficTrace,
    pub xapp: XappConfig,
    pub rapp: EsConfig,
    pub mode: NotificationMode,
    pub seed: u64,
    pub duration_intervals: usize,
    pub es_enabled: bool,
    pub ue: UeConfig,
    pub settle_budget: usize,
    pub commands: Vec<ScriptedCommand>,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Scenario, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        let file: ScenarioFile =
            serde_json::from_str(&text).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Scenario::resolve(file, base)
    }

    pub fn resolve(file: ScenarioFile, base: &Path) -> Result<Scenario, SimError> {
        let topology = Topology::load(base.join(&file.topology))?;
        let trace = match &file.trace {
            TraceSource::File(p) => load_trace(base.join(p), &topology)?,
            TraceSource::Diurnal(cfg) => synth_diurnal(&topology, cfg)?,
        };
        Scenario::new(file, topology, trace)
    }

    /// Builds a scenario from already loaded inputs; file paths in `file`
    /// are ignored.
    pub fn new(file: ScenarioFile, topology: Topology, trace: TrafficTrace) -> Result<Scenario, SimError> {
        let duration = file.duration_intervals.unwrap_or(trace.len());
        let sc = Scenario {
            name: file.name,
            topology,
            trace,
            xapp: file.xapp,
            rapp: file.rapp,
            mode: file.mode,
            seed: file.seed,
            duration_intervals: duration,
            es_enabled: file.es_enabled,
            ue: file.ue,
            settle_budget: file.settle_budget,
            commands: file.commands,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.topology.validate()?;
        if self.duration_intervals == 0 || self.duration_intervals > self.trace.len() {
            return Err(SimError::Config(format!(
                "duration {} must be in 1..={} (trace length)",
                self.duration_intervals,
                self.trace.len()
            )));
        }
        let known = self.topology.cell_ids();
        if let Some(cell) = self.trace.cells().find(|c| known.binary_search(c).is_err()) {
            return Err(SimError::Config(format!("trace references unknown cell {cell}")));
        }
        let u = &self.ue;
        let ue_ok = u.demand_prb > 0
            && (0.0..=1.0).contains(&u.voice_fraction)
            && 0.0 < u.min_distance_m
            && u.min_distance_m <= u.max_distance_m
            && u.max_distance_m.is_finite();
        if !ue_ok {
            return Err(SimError::Config(format!("invalid UE config: {u:?}")));
        }
        if self.settle_budget == 0 {
            return Err(SimError::Config("settle_budget must be >= 1".into()));
        }
        self.rapp.validate(self.trace.granularity_s())?;
        Ok(())
    }

    pub fn with_mode(mut self, mode: NotificationMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}
