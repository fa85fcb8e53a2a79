//! Per-cell PRB-utilization time series and their conversion into UE
//! arrivals and departures.
//!
//! Trace CSV format, one row per cell and interval:
//!
//! ```text
//! site,sector,band,timestamp,prb_util
//! 0,0,1,0,0.1
//! 0,0,1,900,0.2
//! ```
//!
//! `timestamp` is integer seconds since the scenario epoch. Every cell must
//! share the same evenly spaced timestamp grid.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ran_model::{Cell, CellId, Topology};

pub const DEFAULT_GRANULARITY_S: u64 = 900;
pub const INTERVALS_PER_DAY: usize = 96;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: irregular timestamp grid: {message}")]
    Grid { line: u64, message: String },
    #[error("line {line}: prb_util {value} outside [0, 1]")]
    Range { line: u64, value: f64 },
    #[error("line {line}: cell {cell} is not in the topology")]
    UnknownCell { line: u64, cell: CellId },
    #[error("trace is empty")]
    Empty,
    #[error("invalid trace: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(String),
}

/// Utilization series for a set of cells on a shared timestamp grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficTrace {
    granularity_s: u64,
    timestamps: Vec<u64>,
    series: BTreeMap<CellId, Vec<f64>>,
}

impl TrafficTrace {
    /// Builds a trace starting at `start_ts`, checking every invariant.
    pub fn new(granularity_s: u64, start_ts: u64, series: BTreeMap<CellId, Vec<f64>>) -> Result<Self, TraceError> {
        if granularity_s == 0 {
            return Err(TraceError::Invalid("granularity must be positive".into()));
        }
        let len = series.values().next().map(Vec::len).ok_or(TraceError::Empty)?;
        if len == 0 {
            return Err(TraceError::Empty);
        }
        for (cell, values) in &series {
            if values.len() != len {
                return Err(TraceError::Grid {
                    line: 0,
                    message: format!("cell {cell} has {} samples, expected {len}", values.len()),
                });
            }
            if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(TraceError::Range { line: 0, value: *v });
            }
        }
        let timestamps = (0..len as u64).map(|i| start_ts + i * granularity_s).collect();
        Ok(Self {
            granularity_s,
            timestamps,
            series,
        })
    }

    pub fn granularity_s(&self) -> u64 {
        self.granularity_s
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[u64] {
        &self.timestamps
    }

    pub fn timestamp(&self, index: usize) -> Option<u64> {
        self.timestamps.get(index).copied()
    }

    pub fn cells(&self) -> impl Iterator<Item = &CellId> {
        self.series.keys()
    }

    pub fn series(&self, cell: &CellId) -> Option<&[f64]> {
        self.series.get(cell).map(Vec::as_slice)
    }

    pub fn utilization(&self, cell: &CellId, index: usize) -> Option<f64> {
        self.series.get(cell)?.get(index).copied()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("site,sector,band,timestamp,prb_util\n");
        for (cell, values) in &self.series {
            for (ts, v) in self.timestamps.iter().zip(values) {
                out.push_str(&format!("{},{},{},{},{}\n", cell.site, cell.sector, cell.band, ts, v));
            }
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), TraceError> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| TraceError::Io(e.to_string()))
    }
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    site: u32,
    sector: u32,
    band: u32,
    timestamp: u64,
    prb_util: f64,
}

/// Loads a trace CSV, rejecting cells unknown to `topology`.
pub fn load_trace(path: impl AsRef<Path>, topology: &Topology) -> Result<TrafficTrace, TraceError> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| TraceError::Io(e.to_string()))?;
    let known: BTreeSet<CellId> = topology.cell_ids().into_iter().collect();
    parse_trace(file, Some(&known))
}

/// Parses trace CSV from any reader. With `known`, rows for other cells are
/// rejected.
pub fn parse_trace(reader: impl Read, known: Option<&BTreeSet<CellId>>) -> Result<TrafficTrace, TraceError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| TraceError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let expected = ["site", "sector", "band", "timestamp", "prb_util"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(TraceError::Parse {
            line: 1,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }

    let mut rows: BTreeMap<CellId, Vec<(u64, f64, u64)>> = BTreeMap::new();
    for result in rdr.records() {
        let record = result.map_err(|e| TraceError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row: TraceRow = record.deserialize(Some(&headers)).map_err(|e| TraceError::Parse {
            line,
            message: e.to_string(),
        })?;
        let cell = CellId::new(row.site, row.sector, row.band);
        if let Some(known) = known {
            if !known.contains(&cell) {
                return Err(TraceError::UnknownCell { line, cell });
            }
        }
        if !(0.0..=1.0).contains(&row.prb_util) {
            return Err(TraceError::Range {
                line,
                value: row.prb_util,
            });
        }
        let entry = rows.entry(cell).or_default();
        if let Some((prev, _, _)) = entry.last() {
            if row.timestamp <= *prev {
                return Err(TraceError::Grid {
                    line,
                    message: format!("cell {cell}: timestamp {} not after {prev}", row.timestamp),
                });
            }
        }
        entry.push((row.timestamp, row.prb_util, line));
    }

    let (_, first) = rows.iter().next().ok_or(TraceError::Empty)?;
    let grid: Vec<u64> = first.iter().map(|(ts, _, _)| *ts).collect();
    let granularity = if grid.len() > 1 {
        grid[1] - grid[0]
    } else {
        DEFAULT_GRANULARITY_S
    };
    for (i, pair) in first.windows(2).enumerate() {
        if pair[1].0 - pair[0].0 != granularity {
            return Err(TraceError::Grid {
                line: pair[1].2,
                message: format!("spacing at sample {} differs from {granularity} s", i + 1),
            });
        }
    }
    let mut series = BTreeMap::new();
    for (cell, samples) in rows {
        if samples.len() != grid.len() {
            let line = samples.last().map(|s| s.2).unwrap_or(0);
            return Err(TraceError::Grid {
                line,
                message: format!("cell {cell} has {} samples, expected {}", samples.len(), grid.len()),
            });
        }
        for ((ts, _, line), expected) in samples.iter().zip(&grid) {
            if ts != expected {
                return Err(TraceError::Grid {
                    line: *line,
                    message: format!("cell {cell}: timestamp {ts}, expected {expected}"),
                });
            }
        }
        series.insert(cell, samples.into_iter().map(|(_, v, _)| v).collect());
    }
    TrafficTrace::new(granularity, grid[0], series)
}

/// Parameters of the synthetic daily load profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiurnalConfig {
    pub days: u32,
    pub peak_utilization: f64,
    pub trough_utilization: f64,
    pub peak_hour: f64,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
    /// Multiplier per band index; bands beyond the list use 1.0.
    #[serde(default)]
    pub per_band_scale: Vec<f64>,
}

impl Default for DiurnalConfig {
    fn default() -> Self {
        Self {
            days: 14,
            peak_utilization: 0.7,
            trough_utilization: 0.2,
            peak_hour: 20.0,
            noise_std: 0.02,
            seed: 1,
            per_band_scale: vec![1.0, 1.0, 0.9, 0.8, 0.7],
        }
    }
}

impl DiurnalConfig {
    pub fn validate(&self) -> Result<(), TraceError> {
        let ok = 0.0 <= self.trough_utilization
            && self.trough_utilization <= self.peak_utilization
            && self.peak_utilization <= 1.0
            && self.noise_std >= 0.0
            && self.noise_std.is_finite()
            && self.peak_hour.is_finite()
            && self.days > 0
            && self.per_band_scale.iter().all(|s| s.is_finite() && *s >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(TraceError::Invalid(format!("invalid diurnal config: {self:?}")))
        }
    }

    fn band_scale(&self, band: u32) -> f64 {
        self.per_band_scale.get(band as usize).copied().unwrap_or(1.0)
    }

    /// Noise-free utilization of `band` at interval `index`.
    pub fn mean_utilization(&self, band: u32, index: usize) -> f64 {
        let secs = (index as u64 * DEFAULT_GRANULARITY_S) % 86_400;
        let hour = secs as f64 / 3600.0;
        let shape = 0.5 * (1.0 + (2.0 * PI * (hour - self.peak_hour) / 24.0).cos());
        let v = self.trough_utilization + (self.peak_utilization - self.trough_utilization) * shape;
        (v * self.band_scale(band)).clamp(0.0, 1.0)
    }
}

// splitmix64 finalizer; decorrelates per-cell streams.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn stream_seed(seed: u64, a: u64, b: u64) -> u64 {
    mix(mix(seed ^ mix(a)) ^ b)
}

/// Raised-cosine daily profile with white noise, clamped to [0, 1].
pub fn synth_diurnal(topology: &Topology, cfg: &DiurnalConfig) -> Result<TrafficTrace, TraceError> {
    cfg.validate()?;
    let len = cfg.days as usize * INTERVALS_PER_DAY;
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| TraceError::Invalid(e.to_string()))?;
    let mut series = BTreeMap::new();
    for cell in topology.cell_ids() {
        let key = (u64::from(cell.site) << 40) | (u64::from(cell.sector) << 20) | u64::from(cell.band);
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, key, 0));
        let values = (0..len)
            .map(|i| {
                let base = cfg.mean_utilization(cell.band, i);
                let eps = if cfg.noise_std > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                (base + eps).clamp(0.0, 1.0)
            })
            .collect();
        series.insert(cell, values);
    }
    TrafficTrace::new(DEFAULT_GRANULARITY_S, 0, series)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrafficEvent {
    Arrival { camped: CellId },
    Departure { camped: CellId },
}

/// Number of UEs of `demand_prb` that realize `utilization` on `cell`.
pub fn target_population(utilization: f64, cell: &Cell, demand_prb: u32) -> usize {
    (utilization * f64::from(cell.prb_capacity) / f64::from(demand_prb.max(1))).round() as usize
}

/// Arrivals or departures that move the cell's offered population from
/// `current` to the trace target at `index`.
pub fn ue_events(
    trace: &TrafficTrace,
    index: usize,
    cell: &Cell,
    current: usize,
    demand_prb: u32,
) -> Vec<TrafficEvent> {
    let util = trace.utilization(&cell.id, index).unwrap_or(0.0);
    let target = target_population(util, cell, demand_prb);
    let camped = cell.id;
    if target >= current {
        vec![TrafficEvent::Arrival { camped }; target - current]
    } else {
        vec![TrafficEvent::Departure { camped }; current - target]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ran_model::{CellRole, Position, PowerModel};

    fn csv(rows: &str) -> Result<TrafficTrace, TraceError> {
        parse_trace(format!("site,sector,band,timestamp,prb_util\n{rows}").as_bytes(), None)
    }

    #[test]
    fn parses_single_cell() {
        let t = csv("0,0,1,0,0.1\n0,0,1,900,0.2\n0,0,1,1800,0.3\n0,0,1,2700,0.4\n").unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t.granularity_s(), 900);
        assert_eq!(t.series(&CellId::new(0, 0, 1)).unwrap(), &[0.1, 0.2, 0.3, 0.4]);
    }

    #[test]
    fn range_error_names_line() {
        let err = csv("0,0,1,0,0.1\n0,0,1,900,1.3\n").unwrap_err();
        assert_eq!(err, TraceError::Range { line: 3, value: 1.3 });
    }

    #[test]
    fn mismatched_grids() {
        let err = csv("0,0,1,0,0.1\n0,0,1,900,0.1\n0,0,2,0,0.1\n0,0,2,1800,0.1\n").unwrap_err();
        assert!(matches!(err, TraceError::Grid { .. }), "{err:?}");
    }

    #[test]
    fn irregular_spacing() {
        let err = csv("0,0,1,0,0.1\n0,0,1,900,0.1\n0,0,1,2000,0.1\n").unwrap_err();
        assert!(matches!(err, TraceError::Grid { line: 4, .. }), "{err:?}");
    }

    #[test]
    fn non_increasing_timestamps() {
        let err = csv("0,0,1,900,0.1\n0,0,1,0,0.1\n").unwrap_err();
        assert!(matches!(err, TraceError::Grid { .. }));
    }

    #[test]
    fn malformed_row() {
        let err = csv("0,0,1,0,0.1\n0,0,x,900,0.1\n").unwrap_err();
        assert!(matches!(err, TraceError::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn wrong_header() {
        let err = parse_trace("a,b,c\n1,2,3\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, TraceError::Parse { line: 1, .. }));
    }

    #[test]
    fn unknown_cell_rejected() {
        let known: BTreeSet<CellId> = [CellId::new(0, 0, 0)].into_iter().collect();
        let text = "site,sector,band,timestamp,prb_util\n99,0,0,0,0.5\n";
        let err = parse_trace(text.as_bytes(), Some(&known)).unwrap_err();
        assert!(matches!(err, TraceError::UnknownCell { line: 2, .. }));
    }

    #[test]
    fn csv_round_trip() {
        let topo = Topology::generate(2, 3, 3).unwrap();
        let cfg = DiurnalConfig {
            days: 1,
            noise_std: 0.05,
            ..DiurnalConfig::default()
        };
        let trace = synth_diurnal(&topo, &cfg).unwrap();
        let back = parse_trace(trace.to_csv_string().as_bytes(), None).unwrap();
        assert_eq!(trace, back);
    }

    #[test]
    fn two_weeks_at_fifteen_minutes() {
        let topo = Topology::generate(13, 41, 5).unwrap();
        let trace = synth_diurnal(&topo, &DiurnalConfig::default()).unwrap();
        assert_eq!(trace.len(), 1344);
        assert_eq!(trace.granularity_s(), 900);
    }

    #[test]
    fn flat_profile_without_noise() {
        let topo = Topology::generate(1, 1, 2).unwrap();
        let cfg = DiurnalConfig {
            days: 2,
            peak_utilization: 0.5,
            trough_utilization: 0.5,
            noise_std: 0.0,
            per_band_scale: vec![],
            ..DiurnalConfig::default()
        };
        let trace = synth_diurnal(&topo, &cfg).unwrap();
        for cell in trace.cells() {
            assert!(trace.series(cell).unwrap().iter().all(|v| *v == 0.5));
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let topo = Topology::generate(3, 9, 5).unwrap();
        let cfg = DiurnalConfig::default();
        let a = synth_diurnal(&topo, &cfg).unwrap().to_csv_string();
        let b = synth_diurnal(&topo, &cfg).unwrap().to_csv_string();
        assert_eq!(a, b);
        let c = synth_diurnal(&topo, &DiurnalConfig { seed: 2, ..cfg })
            .unwrap()
            .to_csv_string();
        assert_ne!(a, c);
    }

    #[test]
    fn peak_hour_mean_matches_config() {
        let topo = Topology::generate(1, 1, 1).unwrap();
        let cfg = DiurnalConfig {
            days: 14,
            noise_std: 0.03,
            per_band_scale: vec![1.0],
            ..DiurnalConfig::default()
        };
        let trace = synth_diurnal(&topo, &cfg).unwrap();
        let series = trace.series(&CellId::new(0, 0, 0)).unwrap();
        let peak_idx = (cfg.peak_hour * 4.0) as usize;
        let at_peak: Vec<f64> = (0..14).map(|d| series[d * 96 + peak_idx]).collect();
        let mean = at_peak.iter().sum::<f64>() / at_peak.len() as f64;
        // 3 standard errors of a 14-sample mean.
        assert!((mean - cfg.peak_utilization).abs() <= 3.0 * cfg.noise_std / 14f64.sqrt());
    }

    #[test]
    fn band_scaling_applied() {
        let cfg = DiurnalConfig {
            per_band_scale: vec![1.0, 0.5],
            ..DiurnalConfig::default()
        };
        let peak_idx = 80;
        assert!((cfg.mean_utilization(1, peak_idx) - 0.5 * cfg.mean_utilization(0, peak_idx)).abs() < 1e-12);
    }

    fn cell(capacity: u32) -> Cell {
        Cell::new(
            CellId::new(0, 0, 1),
            CellRole::Capacity,
            Position::new(0.0, 0.0),
            0.0,
            capacity,
            0.0,
            PowerModel {
                p_active_w: 100.0,
                p_per_prb_w: 1.0,
                p_sleep_w: 5.0,
            },
        )
    }

    fn one_cell_trace(values: Vec<f64>) -> TrafficTrace {
        TrafficTrace::new(900, 0, [(CellId::new(0, 0, 1), values)].into_iter().collect()).unwrap()
    }

    #[test]
    fn events_reach_target_population() {
        let trace = one_cell_trace(vec![0.5, 0.0, 0.0]);
        let c = cell(100);
        let up = ue_events(&trace, 0, &c, 0, 10);
        assert_eq!(up.len(), 5);
        assert!(up.iter().all(|e| matches!(e, TrafficEvent::Arrival { .. })));
        let down = ue_events(&trace, 1, &c, 5, 10);
        assert_eq!(down.len(), 5);
        assert!(down.iter().all(|e| matches!(e, TrafficEvent::Departure { .. })));
        assert!(ue_events(&trace, 2, &c, 0, 10).is_empty());
    }

    #[test]
    fn population_rounding() {
        let c = cell(100);
        assert_eq!(target_population(0.5, &c, 10), 5);
        assert_eq!(target_population(0.33, &c, 5), 7);
        assert_eq!(target_population(0.0, &c, 5), 0);
    }
}
