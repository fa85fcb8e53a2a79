//! Energy Saving rApp: predicts per-sector load, picks how many capacity
//! carriers stay awake, and switches carriers off and on through A1 FORBID
//! policies plus O1 writes (mode A) or E2SM-CCC controls (mode B).

mod predictor;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use predictor::{Persistence, PredictError, Predictor, PredictorKind, SeasonalEwma};

use crate::messages::{
    A1PolicyDelete, A1PolicyPut, CccControl, CccIndication, KpmReport, Message, O1Attribute, O1Write, TspPolicy,
};
use crate::ran_model::{CellId, EnergyControl, EnergyState, SectorId, Topology};
use crate::sim_engine::{Event, ModeReason};
use crate::traffic::INTERVALS_PER_DAY;

/// How the rApp tells the TS xApp which cells to empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotificationMode {
    /// A1 FORBID policy, then an O1 state write once the cell is empty.
    #[default]
    A1,
    /// E2SM-CCC `energySavingControl`; the node finalizes the switch-off.
    Ccc,
}

impl fmt::Display for NotificationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NotificationMode::A1 => "a1",
            NotificationMode::Ccc => "ccc",
        })
    }
}

impl std::str::FromStr for NotificationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "a1" | "A" => Ok(NotificationMode::A1),
            "ccc" | "B" => Ok(NotificationMode::Ccc),
            other => Err(format!("unknown mode {other:?} (expected a1 or ccc)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedAction {
    Sleep,
    Wake,
}

/// Operator-forced switch of one carrier at the start of an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedCommand {
    pub interval: usize,
    pub action: ScriptedAction,
    pub cell: CellId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EsConfig {
    pub theta_off: f64,
    pub theta_on: f64,
    pub min_dwell_s: u64,
    pub horizon_intervals: usize,
    /// Intervals a switch-off may wait for its cell to empty.
    pub drain_timeout_epochs: usize,
    pub predictor: PredictorKind,
    /// Load-driven decisions; off when only scripted commands should act.
    pub auto: bool,
    pub history_days: usize,
}

impl Default for EsConfig {
    fn default() -> Self {
        Self {
            theta_off: 0.5,
            theta_on: 0.8,
            min_dwell_s: 1800,
            horizon_intervals: 1,
            drain_timeout_epochs: 8,
            predictor: PredictorKind::SeasonalEwma,
            auto: true,
            history_days: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EsError {
    #[error("invalid rApp config: {0}")]
    Config(String),
    #[error("history for cell {cell} is not gap-free: expected ts {expected}, got {got}")]
    HistoryGap { cell: CellId, expected: u64, got: u64 },
}

impl EsConfig {
    pub fn validate(&self, granularity_s: u64) -> Result<(), EsError> {
        let bad = |m: String| Err(EsError::Config(m));
        if !(0.0 < self.theta_off && self.theta_off < self.theta_on && self.theta_on <= 1.0) {
            return bad(format!(
                "need 0 < theta_off < theta_on <= 1, got {} / {}",
                self.theta_off, self.theta_on
            ));
        }
        if self.min_dwell_s < granularity_s {
            return bad(format!(
                "min_dwell_s {} below trace granularity {granularity_s}",
                self.min_dwell_s
            ));
        }
        if self.horizon_intervals == 0 || self.horizon_intervals > INTERVALS_PER_DAY {
            return bad(format!("horizon_intervals {} outside 1..=96", self.horizon_intervals));
        }
        if self.drain_timeout_epochs == 0 {
            return bad("drain_timeout_epochs must be >= 1".into());
        }
        if self.history_days < 7 {
            return bad("history_days must be >= 7".into());
        }
        Ok(())
    }
}

/// Per-cell ring buffer of interval utilization samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadHistory {
    granularity_s: u64,
    capacity: usize,
    series: BTreeMap<CellId, VecDeque<(u64, f64)>>,
}

impl LoadHistory {
    pub fn new(granularity_s: u64, capacity: usize) -> Self {
        Self {
            granularity_s,
            capacity,
            series: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, cell: CellId, ts: u64, utilization: f64) -> Result<(), EsError> {
        let buf = self.series.entry(cell).or_default();
        if let Some((last, _)) = buf.back() {
            let expected = last + self.granularity_s;
            if ts != expected {
                return Err(EsError::HistoryGap {
                    cell,
                    expected,
                    got: ts,
                });
            }
        }
        if buf.len() == self.capacity {
            buf.pop_front();
        }
        buf.push_back((ts, utilization));
        Ok(())
    }

    pub fn len(&self, cell: &CellId) -> usize {
        self.series.get(cell).map_or(0, VecDeque::len)
    }

    pub fn is_empty(&self) -> bool {
        self.series.values().all(VecDeque::is_empty)
    }

    /// Utilization values of `cell`, oldest first.
    pub fn values(&self, cell: &CellId) -> Vec<f64> {
        self.series
            .get(cell)
            .map(|b| b.iter().map(|(_, v)| *v).collect())
            .unwrap_or_default()
    }

    pub fn last(&self, cell: &CellId) -> Option<(u64, f64)> {
        self.series.get(cell).and_then(|b| b.back().copied())
    }
}

/// Utilization expected `1..=horizon` intervals ahead (the maximum over the
/// window) for each cell with enough history.
pub fn predict(
    history: &LoadHistory,
    cells: &[CellId],
    horizon: usize,
    predictor: &dyn Predictor,
) -> Result<BTreeMap<CellId, f64>, PredictError> {
    let mut out = BTreeMap::new();
    for cell in cells {
        let values = history.values(cell);
        let mut best = 0.0f64;
        for h in 1..=horizon {
            best = best.max(predictor.predict(&values, h)?);
        }
        out.insert(*cell, best);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EsMode {
    pub sector: SectorId,
    pub awake_capacity_count: usize,
}

/// Cells of one sector with their PRB budgets; capacity carriers in wake
/// order (lowest band first). Sleep order is the reverse.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorPlan {
    pub sector: SectorId,
    pub coverage: (CellId, u32),
    pub capacity: Vec<(CellId, u32)>,
}

impl SectorPlan {
    pub fn from_topology(topology: &Topology) -> Vec<SectorPlan> {
        let cap = |id: &CellId| topology.band(id.band).map_or(0, |b| b.prb_capacity);
        topology
            .sectors()
            .into_iter()
            .map(|l| SectorPlan {
                sector: l.sector,
                coverage: (l.coverage, cap(&l.coverage)),
                capacity: l.capacity.iter().map(|c| (*c, cap(c))).collect(),
            })
            .collect()
    }

    pub fn cells(&self) -> Vec<CellId> {
        std::iter::once(self.coverage.0)
            .chain(self.capacity.iter().map(|c| c.0))
            .collect()
    }

    /// PRB budget with the coverage cell and the first `k` capacity carriers.
    pub fn capacity_with(&self, k: usize) -> f64 {
        f64::from(self.coverage.1) + self.capacity.iter().take(k).map(|c| f64::from(c.1)).sum::<f64>()
    }

    pub fn total_capacity(&self) -> f64 {
        self.capacity_with(self.capacity.len())
    }

    /// Σ utilization · capacity over the sector's cells.
    pub fn demand(&self, util: &BTreeMap<CellId, f64>) -> f64 {
        std::iter::once(self.coverage)
            .chain(self.capacity.iter().copied())
            .map(|(c, cap)| util.get(&c).copied().unwrap_or(0.0) * f64::from(cap))
            .sum()
    }
}

/// Number of capacity carriers to keep awake.
///
/// `k_min` is the smallest count whose projected utilization is at most
/// `theta_off`. The sector grows to `k_min` only when the current count is
/// projected above `theta_on`, and shrinks to `k_min` whenever that is lower.
/// Nothing changes within `min_dwell_s` of the previous change.
pub fn decide_mode(
    plan: &SectorPlan,
    predictions: &BTreeMap<CellId, f64>,
    current: EsMode,
    last_change: Option<u64>,
    now: u64,
    cfg: &EsConfig,
) -> EsMode {
    if last_change.is_some_and(|t| now < t + cfg.min_dwell_s) {
        return current;
    }
    let demand = plan.demand(predictions);
    let n = plan.capacity.len();
    let k_min = (0..=n)
        .find(|k| demand / plan.capacity_with(*k) <= cfg.theta_off)
        .unwrap_or(n);
    let k = current.awake_capacity_count.min(n);
    let target = if demand / plan.capacity_with(k) > cfg.theta_on || k_min < k {
        k_min
    } else {
        k
    };
    EsMode {
        sector: current.sector,
        awake_capacity_count: target,
    }
}

pub fn forbid_policy_id(cell: CellId) -> String {
    format!("es-forbid-{}-{}-{}", cell.site, cell.sector, cell.band)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    /// A1: FORBID put sent, waiting for the broker.
    PutSent,
    /// A1: policy live, waiting for the cell to empty.
    Draining,
    O1SleepSent,
    O1WakeSent,
    /// A1: policy delete after a wake or an aborted switch-off.
    DeleteSent,
    /// CCC: switch-off requested, waiting for `isEnergySaving`.
    CccSleep,
    /// CCC: switch-on requested (or switch-off aborted).
    CccWake,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pending {
    sector: SectorId,
    phase: Phase,
    started: usize,
}

#[derive(Debug, Clone)]
struct SectorState {
    plan: SectorPlan,
    last_change: Option<u64>,
}

/// Result of an rApp request that the platform answered synchronously.
pub type RequestResult = Result<(), String>;

pub struct EsRapp {
    cfg: EsConfig,
    mode: NotificationMode,
    enabled: bool,
    predictor: Box<dyn Predictor + Send + Sync>,
    history: LoadHistory,
    sectors: BTreeMap<SectorId, SectorState>,
    /// Intended state of every capacity carrier (true = awake).
    awake: BTreeMap<CellId, bool>,
    last_kpm: BTreeMap<CellId, KpmReport>,
    pending: BTreeMap<CellId, Pending>,
    commands: Vec<ScriptedCommand>,
    events: Vec<Event>,
}

impl fmt::Debug for EsRapp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EsRapp")
            .field("mode", &self.mode)
            .field("enabled", &self.enabled)
            .field("pending", &self.pending)
            .finish_non_exhaustive()
    }
}

impl EsRapp {
    pub fn new(
        cfg: EsConfig,
        mode: NotificationMode,
        enabled: bool,
        granularity_s: u64,
        plans: Vec<SectorPlan>,
        commands: Vec<ScriptedCommand>,
    ) -> Result<Self, EsError> {
        cfg.validate(granularity_s)?;
        let mut awake = BTreeMap::new();
        for plan in &plans {
            for (c, _) in &plan.capacity {
                awake.insert(*c, true);
            }
        }
        for cmd in &commands {
            if !awake.contains_key(&cmd.cell) {
                return Err(EsError::Config(format!(
                    "scripted command targets {} which is not a capacity carrier",
                    cmd.cell
                )));
            }
        }
        let capacity = cfg.history_days * INTERVALS_PER_DAY;
        Ok(Self {
            predictor: cfg.predictor.build(),
            cfg,
            mode,
            enabled,
            history: LoadHistory::new(granularity_s, capacity),
            sectors: plans
                .into_iter()
                .map(|p| {
                    (
                        p.sector,
                        SectorState {
                            plan: p,
                            last_change: None,
                        },
                    )
                })
                .collect(),
            awake,
            last_kpm: BTreeMap::new(),
            pending: BTreeMap::new(),
            commands,
            events: Vec::new(),
        })
    }

    pub fn mode(&self) -> NotificationMode {
        self.mode
    }

    pub fn history(&self) -> &LoadHistory {
        &self.history
    }

    pub fn has_pending(&self) -> bool {
        !self.pending.is_empty()
    }

    /// Log records produced since the last call.
    pub fn take_events(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.events)
    }

    pub fn awake_count(&self, sector: &SectorId) -> usize {
        self.sectors[sector]
            .plan
            .capacity
            .iter()
            .filter(|(c, _)| self.awake[c])
            .count()
    }

    /// Records the starting mode of every sector.
    pub fn start(&mut self, ts: u64) {
        let ids: Vec<SectorId> = self.sectors.keys().copied().collect();
        for sector in ids {
            self.log_mode(ts, sector, ModeReason::Initial);
        }
    }

    fn log_mode(&mut self, ts: u64, sector: SectorId, reason: ModeReason) {
        let awake_capacity_count = self.awake_count(&sector);
        self.events.push(Event::EsMode {
            ts,
            sector,
            awake_capacity_count,
            reason,
        });
    }

    /// Consumes one routed indication.
    pub fn handle(&mut self, msg: &Message) -> Vec<Message> {
        match msg {
            Message::KpmReport(k) => self.on_kpm(k),
            Message::CccIndication(ind) => {
                self.on_ccc_indication(ind);
                Vec::new()
            }
            _ => Vec::new(),
        }
    }

    fn on_kpm(&mut self, k: &KpmReport) -> Vec<Message> {
        self.last_kpm.insert(k.cell, k.clone());
        match self.pending.get_mut(&k.cell) {
            Some(p) if p.phase == Phase::Draining && k.rrc_count == 0 => {
                p.phase = Phase::O1SleepSent;
                vec![o1_state(k.ts, k.cell, EnergyState::IsEnergySaving)]
            }
            _ => Vec::new(),
        }
    }

    fn on_ccc_indication(&mut self, ind: &CccIndication) {
        let Some(p) = self.pending.get(&ind.cell) else {
            return;
        };
        let done = matches!(
            (p.phase, ind.energy_state),
            (Phase::CccSleep, EnergyState::IsEnergySaving) | (Phase::CccWake, EnergyState::IsNotEnergySaving)
        );
        if done {
            self.pending.remove(&ind.cell);
        }
    }

    /// Answer to an A1, O1 or CCC request this rApp sent.
    pub fn on_result(&mut self, sent: &Message, result: RequestResult) -> Vec<Message> {
        let (cell, ts) = match sent {
            Message::A1PolicyPut(m) => (m.policy.scope_cells.first().copied(), m.ts),
            Message::A1PolicyDelete(m) => (self.cell_of_policy(&m.policy_id), m.ts),
            Message::O1Write(m) => (Some(m.cell), m.ts),
            Message::CccControl(m) => (Some(m.cell), m.ts),
            _ => (None, 0),
        };
        let Some(cell) = cell else {
            return Vec::new();
        };
        let Some(p) = self.pending.get(&cell).copied() else {
            return Vec::new();
        };
        if let Err(detail) = &result {
            self.events.push(Event::Rejected {
                ts,
                source: "es_rapp".into(),
                detail: format!("{}: {detail}", cell),
            });
        }
        let mut out = Vec::new();
        let next = match (p.phase, result.is_ok()) {
            (Phase::PutSent, true) => {
                if self.last_kpm.get(&cell).is_some_and(|k| k.rrc_count == 0) {
                    out.push(o1_state(ts, cell, EnergyState::IsEnergySaving));
                    Some(Phase::O1SleepSent)
                } else {
                    Some(Phase::Draining)
                }
            }
            (Phase::PutSent, false) => {
                self.restore(cell, p.sector, ts, ModeReason::Rejected);
                None
            }
            (Phase::O1SleepSent, true) => None,
            // Retried on the next empty-cell report.
            (Phase::O1SleepSent, false) => Some(Phase::Draining),
            (Phase::O1WakeSent, true) => {
                out.push(
                    A1PolicyDelete {
                        ts,
                        policy_id: forbid_policy_id(cell),
                    }
                    .into(),
                );
                Some(Phase::DeleteSent)
            }
            (Phase::O1WakeSent, false) | (Phase::DeleteSent, _) => None,
            (Phase::CccSleep, false) => {
                self.restore(cell, p.sector, ts, ModeReason::Rejected);
                None
            }
            (Phase::CccWake, false) => None,
            (phase, true) => Some(phase),
            (Phase::Draining, false) => Some(Phase::Draining),
        };
        match next {
            Some(phase) => {
                self.pending.insert(cell, Pending { phase, ..p });
            }
            None => {
                self.pending.remove(&cell);
            }
        }
        out
    }

    fn cell_of_policy(&self, id: &str) -> Option<CellId> {
        self.awake.keys().copied().find(|c| forbid_policy_id(*c) == id)
    }

    fn restore(&mut self, cell: CellId, sector: SectorId, ts: u64, reason: ModeReason) {
        self.awake.insert(cell, true);
        if let Some(s) = self.sectors.get_mut(&sector) {
            s.last_change = Some(ts);
        }
        self.log_mode(ts, sector, reason);
    }

    /// Interval step: records the latest load sample of every cell, aborts
    /// stuck switch-offs, runs scripted commands and the load-driven
    /// controller.
    pub fn step(&mut self, ts: u64, interval: usize) -> Result<Vec<Message>, EsError> {
        let cells: Vec<CellId> = self.sectors.values().flat_map(|s| s.plan.cells()).collect();
        for cell in cells {
            let util = self.last_kpm.get(&cell).map_or(0.0, |k| k.prb_utilization);
            self.history.push(cell, ts, util)?;
        }
        let mut out = Vec::new();
        self.check_timeouts(ts, interval, &mut out);
        let due: Vec<ScriptedCommand> = self
            .commands
            .iter()
            .filter(|c| c.interval == interval)
            .copied()
            .collect();
        for cmd in due {
            if !self.enabled || self.pending.contains_key(&cmd.cell) {
                continue;
            }
            let wanted = cmd.action == ScriptedAction::Wake;
            if self.awake[&cmd.cell] == wanted {
                continue;
            }
            let sector = cmd.cell.sector_id();
            if wanted {
                self.wake(cmd.cell, sector, ts, interval, &mut out);
            } else {
                self.sleep(cmd.cell, sector, ts, interval, &mut out);
            }
            self.sectors.get_mut(&sector).expect("known sector").last_change = Some(ts);
            self.log_mode(ts, sector, ModeReason::Scripted);
        }
        let ids: Vec<SectorId> = self.sectors.keys().copied().collect();
        for sector in ids {
            self.decide_sector(sector, ts, interval, &mut out);
        }
        Ok(out)
    }

    fn check_timeouts(&mut self, ts: u64, interval: usize, out: &mut Vec<Message>) {
        let expired: Vec<(CellId, Pending)> = self
            .pending
            .iter()
            .filter(|(_, p)| matches!(p.phase, Phase::Draining | Phase::CccSleep))
            .filter(|(_, p)| interval >= p.started + self.cfg.drain_timeout_epochs)
            .map(|(c, p)| (*c, *p))
            .collect();
        for (cell, p) in expired {
            self.events.push(Event::DrainTimeout { ts, cell });
            let phase = match p.phase {
                Phase::Draining => {
                    out.push(
                        A1PolicyDelete {
                            ts,
                            policy_id: forbid_policy_id(cell),
                        }
                        .into(),
                    );
                    Phase::DeleteSent
                }
                _ => {
                    out.push(ccc(ts, cell, EnergyControl::ToBeNotEnergySaving));
                    Phase::CccWake
                }
            };
            self.pending.insert(
                cell,
                Pending {
                    phase,
                    started: interval,
                    ..p
                },
            );
            self.restore(cell, p.sector, ts, ModeReason::DrainTimeout);
        }
    }

    fn decide_sector(&mut self, sector: SectorId, ts: u64, interval: usize, out: &mut Vec<Message>) {
        let state = &self.sectors[&sector];
        let cells = state.plan.cells();
        let observed: BTreeMap<CellId, f64> = cells
            .iter()
            .map(|c| (*c, self.history.last(c).map_or(0.0, |(_, v)| v)))
            .collect();
        let total = state.plan.total_capacity();
        let load = state.plan.demand(&observed) / total;
        let predictions = predict(
            &self.history,
            &cells,
            self.cfg.horizon_intervals,
            self.predictor.as_ref(),
        )
        .ok();
        let busy = cells.iter().any(|c| self.pending.contains_key(c));
        if let (Some(pred), true, true, false) = (&predictions, self.enabled, self.cfg.auto, busy) {
            let plan = state.plan.clone();
            let current = EsMode {
                sector,
                awake_capacity_count: self.awake_count(&sector),
            };
            let target = decide_mode(&plan, pred, current, state.last_change, ts, &self.cfg);
            if target != current {
                let k = target.awake_capacity_count;
                for (i, (cell, _)) in plan.capacity.iter().enumerate().rev() {
                    let want = i < k;
                    if self.awake[cell] != want {
                        if want {
                            self.wake(*cell, sector, ts, interval, out);
                        } else {
                            self.sleep(*cell, sector, ts, interval, out);
                        }
                    }
                }
                self.sectors.get_mut(&sector).expect("known sector").last_change = Some(ts);
                self.log_mode(ts, sector, ModeReason::Decision);
            }
        }
        let predicted = predictions.map(|p| self.sectors[&sector].plan.demand(&p) / total);
        let awake_capacity_count = self.awake_count(&sector);
        self.events.push(Event::SectorLoad {
            ts,
            sector,
            load,
            predicted,
            awake_capacity_count,
        });
    }

    fn sleep(&mut self, cell: CellId, sector: SectorId, ts: u64, interval: usize, out: &mut Vec<Message>) {
        self.awake.insert(cell, false);
        let phase = match self.mode {
            NotificationMode::A1 => {
                out.push(
                    A1PolicyPut {
                        ts,
                        policy: TspPolicy::forbid(forbid_policy_id(cell), vec![cell]),
                    }
                    .into(),
                );
                Phase::PutSent
            }
            NotificationMode::Ccc => {
                out.push(ccc(ts, cell, EnergyControl::ToBeEnergySaving));
                Phase::CccSleep
            }
        };
        self.pending.insert(
            cell,
            Pending {
                sector,
                phase,
                started: interval,
            },
        );
    }

    fn wake(&mut self, cell: CellId, sector: SectorId, ts: u64, interval: usize, out: &mut Vec<Message>) {
        self.awake.insert(cell, true);
        let phase = match self.mode {
            NotificationMode::A1 => {
                out.push(o1_state(ts, cell, EnergyState::IsNotEnergySaving));
                Phase::O1WakeSent
            }
            NotificationMode::Ccc => {
                out.push(ccc(ts, cell, EnergyControl::ToBeNotEnergySaving));
                Phase::CccWake
            }
        };
        self.pending.insert(
            cell,
            Pending {
                sector,
                phase,
                started: interval,
            },
        );
    }
}

fn o1_state(ts: u64, cell: CellId, state: EnergyState) -> Message {
    O1Write {
        ts,
        cell,
        attribute: O1Attribute::EnergySavingState(state),
    }
    .into()
}

fn ccc(ts: u64, cell: CellId, control: EnergyControl) -> Message {
    CccControl { ts, cell, control }.into()
}
