//! Fixture loading and log checkers shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use ests_core::messages::{O1Attribute, Preference};
use ests_core::{CellId, EnergyState, Event, EventLog, Message, Record, Scenario, SectorId};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn s1() -> Scenario {
    Scenario::load(fixture("s1_scenario.json")).expect("S1 fixture loads")
}

pub fn s2() -> Scenario {
    Scenario::load(fixture("s2_scenario.json")).expect("S2 fixture loads")
}

/// Walks the log in record order, tracking what the platform had made
/// visible so far, and reports every unsafe action.
pub fn guard_violations(log: &EventLog) -> Vec<String> {
    let mut state: BTreeMap<CellId, EnergyState> = BTreeMap::new();
    let mut forbidden: BTreeSet<CellId> = BTreeSet::new();
    let mut last_rrc: BTreeMap<CellId, u32> = BTreeMap::new();
    let mut out = Vec::new();
    let awake = |state: &BTreeMap<CellId, EnergyState>, c: &CellId| {
        state.get(c).copied().unwrap_or(EnergyState::IsNotEnergySaving) == EnergyState::IsNotEnergySaving
    };
    for r in &log.records {
        match r {
            Record::Message(Message::CccIndication(ind)) => {
                state.insert(ind.cell, ind.energy_state);
            }
            Record::Message(Message::PolicyChange(pc)) => {
                forbidden = pc
                    .policies
                    .iter()
                    .filter(|p| p.preference == Preference::Forbid)
                    .flat_map(|p| p.scope_cells.iter().copied())
                    .collect();
            }
            Record::Message(Message::KpmReport(k)) => {
                last_rrc.insert(k.cell, k.rrc_count);
            }
            Record::Message(Message::O1Write(w)) => {
                if w.attribute == O1Attribute::EnergySavingState(EnergyState::IsEnergySaving) {
                    let seen = last_rrc.get(&w.cell).copied();
                    if seen != Some(0) {
                        out.push(format!(
                            "ts {}: O1 sleep write on {} with last rrc_count {:?}",
                            w.ts, w.cell, seen
                        ));
                    }
                }
            }
            Record::Event(Event::Audit(a)) if a.outcome.is_success() => {
                let t = a.command.target;
                if forbidden.contains(&t) {
                    out.push(format!(
                        "ts {}: handover of UE {} into forbidden {t}",
                        a.ts, a.command.ue
                    ));
                }
                if !awake(&state, &t) {
                    out.push(format!(
                        "ts {}: handover of UE {} into non-awake {t}",
                        a.ts, a.command.ue
                    ));
                }
            }
            Record::Event(Event::UeArrival {
                ts,
                ue,
                cell: Some(c),
                admitted: true,
                ..
            }) if !awake(&state, c) => {
                out.push(format!("ts {ts}: UE {ue} admitted into non-awake {c}"));
            }
            _ => {}
        }
    }
    out
}

/// Consecutive es_mode changes of one sector closer than `min_dwell_s`.
/// Drain-timeout restores are exempt.
pub fn dwell_violations(log: &EventLog, min_dwell_s: u64) -> Vec<String> {
    let mut last: BTreeMap<SectorId, (u64, usize)> = BTreeMap::new();
    let mut out = Vec::new();
    for e in log.events() {
        if let Event::EsMode {
            ts,
            sector,
            awake_capacity_count,
            reason,
        } = e
        {
            if let Some(&(prev_ts, prev_k)) = last.get(sector) {
                let decided = matches!(reason, ests_core::sim_engine::ModeReason::Decision);
                if decided && prev_k != *awake_capacity_count && ts - prev_ts < min_dwell_s {
                    out.push(format!(
                        "sector {sector}: change at {ts} only {}s after {prev_ts}",
                        ts - prev_ts
                    ));
                }
            }
            last.insert(*sector, (*ts, *awake_capacity_count));
        }
    }
    out
}

/// Per-sector (ts, awake count) sequence from the log's es_mode events.
pub fn mode_timeline(log: &EventLog) -> BTreeMap<SectorId, Vec<(u64, usize)>> {
    let mut out: BTreeMap<SectorId, Vec<(u64, usize)>> = BTreeMap::new();
    for e in log.events() {
        if let Event::EsMode {
            ts,
            sector,
            awake_capacity_count,
            ..
        } = e
        {
            out.entry(*sector).or_default().push((*ts, *awake_capacity_count));
        }
    }
    out
}
