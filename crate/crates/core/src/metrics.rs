//! KPIs computed from an event log alone.
//!
//! `metrics.json` schema (all energies in joules):
//!
//! | field | meaning |
//! |---|---|
//! | `energy_baseline_j`, `energy_actual_j` | all cells, always-awake shadow run vs actual |
//! | `capacity_baseline_j`, `capacity_actual_j` | capacity-layer cells only |
//! | `savings_capacity_pct` | `100 * (1 - capacity_actual / capacity_baseline)` |
//! | `attempts`, `admitted`, `blocked` | UE arrival admission attempts |
//! | `accessibility` | `admitted / attempts`, 1 when there were no attempts |
//! | `handovers_attempted`, `handovers_succeeded` | handover controls submitted / executed |
//! | `transitions` | settled sleep or wake changes of any cell |
//! | `es_mode_timeline` | per sector `"site/sector"`: `(ts, awake_capacity_count)` points |
//! | `per_cell_rrc_timeline` | per cell `"site/sector/band"`: RRC count at every change |
//! | `sector_series` | per interval and sector: load, prediction, awake capacity count |

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::es_rapp::NotificationMode;
use crate::messages::Message;
use crate::ran_model::{CellId, EnergyState};
use crate::sim_engine::{Event, EventLog, Record, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModePoint {
    pub ts: u64,
    pub awake_capacity_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrcPoint {
    pub ts: u64,
    pub rrc_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorPoint {
    pub ts: u64,
    pub sector: String,
    pub load: f64,
    pub predicted: Option<f64>,
    pub awake_capacity_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub mode: NotificationMode,
    pub seed: u64,
    pub intervals: usize,
    pub energy_baseline_j: f64,
    pub energy_actual_j: f64,
    pub capacity_baseline_j: f64,
    pub capacity_actual_j: f64,
    pub savings_capacity_pct: f64,
    pub attempts: u64,
    pub admitted: u64,
    pub blocked: u64,
    pub accessibility: f64,
    pub handovers_attempted: u64,
    pub handovers_succeeded: u64,
    pub transitions: u64,
    pub drain_timeouts: u64,
    pub es_mode_timeline: BTreeMap<String, Vec<ModePoint>>,
    pub per_cell_rrc_timeline: BTreeMap<String, Vec<RrcPoint>>,
    pub sector_series: Vec<SectorPoint>,
}

fn corrupt(message: impl Into<String>) -> SimError {
    SimError::CorruptLog {
        line: 0,
        message: message.into(),
    }
}

/// Every counter is derived from the records; nothing else is consulted.
pub fn compute_metrics(log: &EventLog) -> Result<MetricsReport, SimError> {
    let mut report = match log.records.first() {
        Some(Record::Event(Event::RunStart {
            scenario,
            mode,
            seed,
            intervals,
            ..
        })) => MetricsReport {
            scenario: scenario.clone(),
            mode: *mode,
            seed: *seed,
            intervals: *intervals,
            energy_baseline_j: 0.0,
            energy_actual_j: 0.0,
            capacity_baseline_j: 0.0,
            capacity_actual_j: 0.0,
            savings_capacity_pct: 0.0,
            attempts: 0,
            admitted: 0,
            blocked: 0,
            accessibility: 1.0,
            handovers_attempted: 0,
            handovers_succeeded: 0,
            transitions: 0,
            drain_timeouts: 0,
            es_mode_timeline: BTreeMap::new(),
            per_cell_rrc_timeline: BTreeMap::new(),
            sector_series: Vec::new(),
        },
        _ => return Err(corrupt("log does not start with run_start")),
    };
    if !matches!(log.records.last(), Some(Record::Event(Event::RunEnd { .. }))) {
        return Err(corrupt("log does not end with run_end"));
    }
    let mut settled: BTreeMap<CellId, EnergyState> = BTreeMap::new();
    for record in &log.records {
        match record {
            Record::Message(Message::CccIndication(ind)) => {
                let s = ind.energy_state;
                if matches!(s, EnergyState::IsEnergySaving | EnergyState::IsNotEnergySaving) {
                    let prev = settled.insert(ind.cell, s).unwrap_or(EnergyState::IsNotEnergySaving);
                    if prev != s {
                        report.transitions += 1;
                    }
                }
            }
            Record::Message(_) => {}
            Record::Event(e) => match e {
                Event::UeArrival { admitted, .. } => {
                    report.attempts += 1;
                    if *admitted {
                        report.admitted += 1;
                    } else {
                        report.blocked += 1;
                    }
                }
                Event::Audit(a) => {
                    report.handovers_attempted += 1;
                    if a.outcome.is_success() {
                        report.handovers_succeeded += 1;
                    }
                }
                Event::EsMode {
                    ts,
                    sector,
                    awake_capacity_count,
                    ..
                } => report
                    .es_mode_timeline
                    .entry(sector.to_string())
                    .or_default()
                    .push(ModePoint {
                        ts: *ts,
                        awake_capacity_count: *awake_capacity_count,
                    }),
                Event::SectorLoad {
                    ts,
                    sector,
                    load,
                    predicted,
                    awake_capacity_count,
                } => report.sector_series.push(SectorPoint {
                    ts: *ts,
                    sector: sector.to_string(),
                    load: *load,
                    predicted: *predicted,
                    awake_capacity_count: *awake_capacity_count,
                }),
                Event::DrainTimeout { .. } => report.drain_timeouts += 1,
                Event::Energy {
                    capacity_j,
                    coverage_j,
                    baseline_capacity_j,
                    baseline_coverage_j,
                    ..
                } => {
                    report.capacity_actual_j += capacity_j;
                    report.capacity_baseline_j += baseline_capacity_j;
                    report.energy_actual_j += capacity_j + coverage_j;
                    report.energy_baseline_j += baseline_capacity_j + baseline_coverage_j;
                }
                Event::Snapshot { ts, cells } => {
                    for rc in cells {
                        report
                            .per_cell_rrc_timeline
                            .entry(rc.cell.to_string())
                            .or_default()
                            .push(RrcPoint {
                                ts: *ts,
                                rrc_count: rc.rrc_count,
                            });
                    }
                }
                Event::RunStart { .. } | Event::UeDeparture { .. } | Event::Rejected { .. } | Event::RunEnd { .. } => {}
            },
        }
    }
    if report.attempts > 0 {
        report.accessibility = report.admitted as f64 / report.attempts as f64;
    }
    if report.capacity_baseline_j > 0.0 {
        report.savings_capacity_pct = 100.0 * (1.0 - report.capacity_actual_j / report.capacity_baseline_j);
    }
    Ok(report)
}

impl MetricsReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Scalar fields as `metric,value` rows.
    pub fn write_summary_csv(&self, w: impl Write) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["metric", "value"])?;
        let rows: [(&str, String); 17] = [
            ("scenario", self.scenario.clone()),
            ("mode", self.mode.to_string()),
            ("seed", self.seed.to_string()),
            ("intervals", self.intervals.to_string()),
            ("energy_baseline_j", self.energy_baseline_j.to_string()),
            ("energy_actual_j", self.energy_actual_j.to_string()),
            ("capacity_baseline_j", self.capacity_baseline_j.to_string()),
            ("capacity_actual_j", self.capacity_actual_j.to_string()),
            ("savings_capacity_pct", self.savings_capacity_pct.to_string()),
            ("attempts", self.attempts.to_string()),
            ("admitted", self.admitted.to_string()),
            ("blocked", self.blocked.to_string()),
            ("accessibility", self.accessibility.to_string()),
            ("handovers_attempted", self.handovers_attempted.to_string()),
            ("handovers_succeeded", self.handovers_succeeded.to_string()),
            ("transitions", self.transitions.to_string()),
            ("drain_timeouts", self.drain_timeouts.to_string()),
        ];
        for (k, v) in rows {
            out.write_record([k, v.as_str()])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Load, prediction and awake capacity count per sector over time.
    pub fn write_plot_data(&self, w: impl Write) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["timestamp", "sector", "load", "predicted", "awake_capacity_count"])?;
        for p in &self.sector_series {
            out.write_record([
                p.ts.to_string(),
                p.sector.clone(),
                p.load.to_string(),
                p.predicted.map(|v| v.to_string()).unwrap_or_default(),
                p.awake_capacity_count.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ran_model::SectorId;

    fn log_with(events: Vec<Event>) -> EventLog {
        let mut log = EventLog::default();
        log.push(Event::RunStart {
            ts: 0,
            scenario: "t".into(),
            mode: NotificationMode::A1,
            seed: 0,
            es_enabled: true,
            intervals: 1,
            granularity_s: 900,
        });
        for e in events {
            log.push(e);
        }
        log.push(Event::RunEnd { ts: 0 });
        log
    }

    fn arrival(ue: u64, admitted: bool) -> Event {
        Event::UeArrival {
            ts: 0,
            ue,
            camped: CellId::new(0, 0, 0),
            cell: admitted.then_some(CellId::new(0, 0, 0)),
            admitted,
        }
    }

    #[test]
    fn accessibility_ratio() {
        let mut events: Vec<Event> = (0..100_000).map(|i| arrival(i, true)).collect();
        if let Event::UeArrival { admitted, cell, .. } = &mut events[5] {
            *admitted = false;
            *cell = None;
        }
        let m = compute_metrics(&log_with(events)).unwrap();
        assert_eq!(m.attempts, 100_000);
        assert_eq!(m.blocked, 1);
        assert_eq!(m.accessibility, 99_999.0 / 100_000.0);
        assert!((m.accessibility - 0.99999).abs() < 1e-12);
    }

    #[test]
    fn injected_block_lowers_accessibility() {
        let base: Vec<Event> = (0..7).map(|i| arrival(i, i != 3)).collect();
        let before = compute_metrics(&log_with(base.clone())).unwrap();
        let mut more = base;
        more.push(arrival(99, false));
        let after = compute_metrics(&log_with(more)).unwrap();
        assert_eq!(before.accessibility, 6.0 / 7.0);
        assert_eq!(after.accessibility, 6.0 / 8.0);
        assert!(after.accessibility < before.accessibility);
    }

    #[test]
    fn savings_over_capacity_only() {
        let e = |cap: f64, cov: f64, bcap: f64, bcov: f64| Event::Energy {
            ts: 0,
            capacity_j: cap,
            coverage_j: cov,
            baseline_capacity_j: bcap,
            baseline_coverage_j: bcov,
        };
        let m = compute_metrics(&log_with(vec![e(30.0, 500.0, 40.0, 100.0), e(45.0, 0.0, 60.0, 0.0)])).unwrap();
        assert_eq!(m.capacity_actual_j, 75.0);
        assert_eq!(m.capacity_baseline_j, 100.0);
        assert_eq!(m.savings_capacity_pct, 25.0);
        assert_eq!(m.energy_actual_j, 575.0);
    }

    #[test]
    fn no_attempts_is_fully_accessible() {
        let m = compute_metrics(&log_with(vec![])).unwrap();
        assert_eq!(m.accessibility, 1.0);
        assert_eq!(m.savings_capacity_pct, 0.0);
    }

    #[test]
    fn missing_run_end_is_corrupt() {
        let mut log = log_with(vec![]);
        log.records.pop();
        assert!(matches!(compute_metrics(&log), Err(SimError::CorruptLog { .. })));
    }

    #[test]
    fn plot_data_header() {
        let mut m = compute_metrics(&log_with(vec![Event::SectorLoad {
            ts: 900,
            sector: SectorId { site: 0, sector: 1 },
            load: 0.25,
            predicted: None,
            awake_capacity_count: 3,
        }]))
        .unwrap();
        let mut buf = Vec::new();
        m.write_plot_data(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "timestamp,sector,load,predicted,awake_capacity_count\n900,0/1,0.25,,3\n"
        );
        m.sector_series.clear();
        let mut buf = Vec::new();
        m.write_summary_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("metric,value\nscenario,t\n"));
    }
}
