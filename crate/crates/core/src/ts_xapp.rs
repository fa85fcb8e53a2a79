//! Traffic Steering xApp. Keeps a radio/load picture built only from the
//! messages it receives, drains cells that are forbidden by policy or about
//! to sleep, and picks targets for arrivals and offloads.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::messages::{
    forbidden_cells, CccIndication, HandoverCommand, KpmReport, Message, NodeCellInfo, PolicyChange, RcReportKind,
    UeEvent,
};
use crate::near_rt_ric::ControlOutcome;
use crate::ran_model::{CellId, CellRole, EnergyState, QosClass, UeId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct XappConfig {
    /// Voice UEs take the best coverage cell if it is within this margin of
    /// the overall best candidate.
    pub voice_margin_db: f64,
    /// Minimum spacing between drain passes over the same cell.
    pub retry_epoch_s: u64,
}

impl Default for XappConfig {
    fn default() -> Self {
        Self {
            voice_margin_db: 6.0,
            retry_epoch_s: 900,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellView {
    pub info: NodeCellInfo,
    pub state: EnergyState,
    pub last_kpm: Option<KpmReport>,
    /// Demand of UEs reported attached here.
    pub load_prb: u32,
    /// Demand of in-flight handovers into this cell.
    pub reserved_prb: u32,
}

impl CellView {
    fn committed(&self) -> u32 {
        self.load_prb + self.reserved_prb
    }

    pub fn utilization(&self) -> f64 {
        if self.info.prb_capacity == 0 {
            return 1.0;
        }
        f64::from(self.committed()) / f64::from(self.info.prb_capacity)
    }

    pub fn has_headroom(&self, demand: u32) -> bool {
        self.committed() + demand <= self.info.prb_capacity
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UeView {
    pub serving: Option<CellId>,
    pub camped: Option<CellId>,
    pub demand_prb: u32,
    pub qos: QosClass,
    pub rsrp: BTreeMap<CellId, f64>,
    /// Target of an in-flight handover command.
    pub pending: Option<CellId>,
}

/// Everything the xApp knows, derived from received messages only.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TsWorldView {
    pub cells: BTreeMap<CellId, CellView>,
    pub ues: BTreeMap<UeId, UeView>,
    pub forbidden: BTreeSet<CellId>,
}

impl TsWorldView {
    /// Forbidden cells plus cells last reported `ToBeEnergySaving`.
    pub fn draining(&self) -> BTreeSet<CellId> {
        let mut set = self.forbidden.clone();
        set.extend(
            self.cells
                .iter()
                .filter(|(_, c)| c.state == EnergyState::ToBeEnergySaving)
                .map(|(id, _)| *id),
        );
        set
    }

    pub fn is_draining(&self, cell: &CellId) -> bool {
        self.forbidden.contains(cell)
            || self
                .cells
                .get(cell)
                .is_some_and(|c| c.state == EnergyState::ToBeEnergySaving)
    }

    fn selectable(&self, cell: &CellId, demand: u32) -> bool {
        match self.cells.get(cell) {
            Some(c) => c.state == EnergyState::IsNotEnergySaving && !self.is_draining(cell) && c.has_headroom(demand),
            None => false,
        }
    }

    pub fn attached_to(&self, cell: &CellId) -> impl Iterator<Item = (UeId, &UeView)> + '_ {
        let cell = *cell;
        self.ues
            .iter()
            .filter(move |(_, u)| u.serving == Some(cell))
            .map(|(id, u)| (*id, u))
    }
}

/// Best admissible cell for `ue`, never `exclude`.
///
/// Candidates are cells with a known RSRP that are awake, not draining and
/// have headroom for the UE's demand. Highest RSRP wins; ties go to the lower
/// utilization, then the lower `CellId`.
pub fn select_target(ue: &UeView, view: &TsWorldView, exclude: Option<CellId>, cfg: &XappConfig) -> Option<CellId> {
    let candidates: Vec<(CellId, f64, f64)> = ue
        .rsrp
        .iter()
        .filter(|(id, _)| Some(**id) != exclude && view.selectable(id, ue.demand_prb))
        .map(|(id, rsrp)| (*id, *rsrp, view.cells[id].utilization()))
        .collect();
    let better = |a: &(CellId, f64, f64), b: &(CellId, f64, f64)| {
        b.1.total_cmp(&a.1).then(a.2.total_cmp(&b.2)).then(a.0.cmp(&b.0))
    };
    let best = candidates.iter().min_by(|a, b| better(a, b))?;
    if ue.qos == QosClass::Voice {
        let coverage = candidates
            .iter()
            .filter(|c| view.cells[&c.0].info.role == CellRole::Coverage)
            .min_by(|a, b| better(a, b));
        if let Some(cov) = coverage {
            if best.1 - cov.1 <= cfg.voice_margin_db {
                return Some(cov.0);
            }
        }
    }
    Some(best.0)
}

/// One handover per attached UE of `cell` that has a viable target, in UE
/// order. Targets are reserved as commands are planned so that later UEs see
/// the load of earlier ones.
pub fn drain(cell: CellId, view: &mut TsWorldView, cfg: &XappConfig, ts: u64) -> Vec<HandoverCommand> {
    let ues: Vec<UeId> = view
        .attached_to(&cell)
        .filter(|(_, u)| u.pending.is_none())
        .map(|(id, _)| id)
        .collect();
    let mut out = Vec::new();
    for id in ues {
        let Some(target) = select_target(&view.ues[&id], view, Some(cell), cfg) else {
            continue;
        };
        let demand = view.ues[&id].demand_prb;
        reserve(view, id, target, demand);
        out.push(HandoverCommand {
            ts,
            ue: id,
            source: cell,
            target,
        });
    }
    out
}

fn reserve(view: &mut TsWorldView, ue: UeId, target: CellId, demand: u32) {
    if let Some(c) = view.cells.get_mut(&target) {
        c.reserved_prb += demand;
    }
    if let Some(u) = view.ues.get_mut(&ue) {
        u.pending = Some(target);
    }
}

fn unreserve(view: &mut TsWorldView, ue: UeId) {
    let Some(u) = view.ues.get_mut(&ue) else {
        return;
    };
    let (Some(target), demand) = (u.pending.take(), u.demand_prb) else {
        return;
    };
    if let Some(c) = view.cells.get_mut(&target) {
        c.reserved_prb = c.reserved_prb.saturating_sub(demand);
    }
}

#[derive(Debug, Clone, Default)]
pub struct TsXapp {
    cfg: XappConfig,
    view: TsWorldView,
    last_drain: BTreeMap<CellId, u64>,
}

impl TsXapp {
    pub fn new(cfg: XappConfig) -> Self {
        Self { cfg, ..Self::default() }
    }

    pub fn view(&self) -> &TsWorldView {
        &self.view
    }

    pub fn config(&self) -> &XappConfig {
        &self.cfg
    }

    /// Consumes one routed message and returns the controls it triggers.
    pub fn handle(&mut self, msg: &Message) -> Vec<HandoverCommand> {
        match msg {
            Message::KpmReport(k) => self.on_kpm(k),
            Message::RcReport(r) => {
                self.on_rc(&r.report);
                Vec::new()
            }
            Message::CccIndication(ind) => self.on_ccc_indication(ind),
            Message::PolicyChange(pc) => self.on_policy_change(pc),
            _ => Vec::new(),
        }
    }

    fn on_rc(&mut self, report: &RcReportKind) {
        match report {
            RcReportKind::NodeInfo { cells } => {
                for info in cells {
                    let entry = self.view.cells.entry(info.cell).or_insert_with(|| CellView {
                        info: info.clone(),
                        state: EnergyState::IsNotEnergySaving,
                        last_kpm: None,
                        load_prb: 0,
                        reserved_prb: 0,
                    });
                    entry.info = info.clone();
                }
            }
            RcReportKind::MeasurementRsrp { ue, rsrp } => {
                if let Some(u) = self.view.ues.get_mut(ue) {
                    u.rsrp = rsrp.iter().map(|e| (e.cell, e.rsrp_dbm)).collect();
                }
            }
            RcReportKind::UeInfo {
                ue,
                event,
                cell,
                demand_prb,
                qos,
            } => self.on_ue_info(*ue, *event, *cell, *demand_prb, *qos),
        }
    }

    fn on_ue_info(&mut self, ue: UeId, event: UeEvent, cell: Option<CellId>, demand: u32, qos: QosClass) {
        match event {
            UeEvent::Setup => {
                self.view.ues.insert(
                    ue,
                    UeView {
                        serving: None,
                        camped: cell,
                        demand_prb: demand,
                        qos,
                        rsrp: BTreeMap::new(),
                        pending: None,
                    },
                );
            }
            UeEvent::Attached | UeEvent::HandedOver => {
                unreserve(&mut self.view, ue);
                let old = self.view.ues.get_mut(&ue).and_then(|u| {
                    let old = u.serving;
                    u.serving = cell;
                    old
                });
                if let Some(c) = old.and_then(|o| self.view.cells.get_mut(&o)) {
                    c.load_prb = c.load_prb.saturating_sub(demand);
                }
                if let Some(c) = cell.and_then(|n| self.view.cells.get_mut(&n)) {
                    c.load_prb += demand;
                }
            }
            UeEvent::Released => {
                unreserve(&mut self.view, ue);
                if let Some(u) = self.view.ues.remove(&ue) {
                    if let Some(c) = u.serving.and_then(|s| self.view.cells.get_mut(&s)) {
                        c.load_prb = c.load_prb.saturating_sub(u.demand_prb);
                    }
                }
            }
        }
    }

    fn on_kpm(&mut self, k: &KpmReport) -> Vec<HandoverCommand> {
        if let Some(c) = self.view.cells.get_mut(&k.cell) {
            c.last_kpm = Some(k.clone());
        }
        if k.rrc_count == 0 || !self.view.is_draining(&k.cell) {
            return Vec::new();
        }
        let due = self
            .last_drain
            .get(&k.cell)
            .is_none_or(|last| k.ts >= last + self.cfg.retry_epoch_s);
        if due {
            self.drain_cell(k.cell, k.ts)
        } else {
            Vec::new()
        }
    }

    fn drain_cell(&mut self, cell: CellId, ts: u64) -> Vec<HandoverCommand> {
        self.last_drain.insert(cell, ts);
        drain(cell, &mut self.view, &self.cfg, ts)
    }

    /// Recomputes the forbidden set and drains every newly forbidden cell.
    pub fn on_policy_change(&mut self, pc: &PolicyChange) -> Vec<HandoverCommand> {
        let next = forbidden_cells(&pc.policies);
        let added: Vec<CellId> = next.difference(&self.view.forbidden).copied().collect();
        self.view.forbidden = next;
        added
            .into_iter()
            .flat_map(|cell| self.drain_cell(cell, pc.ts))
            .collect()
    }

    pub fn on_ccc_indication(&mut self, ind: &CccIndication) -> Vec<HandoverCommand> {
        let Some(c) = self.view.cells.get_mut(&ind.cell) else {
            return Vec::new();
        };
        let before = c.state;
        c.state = ind.energy_state;
        if before != EnergyState::ToBeEnergySaving && ind.energy_state == EnergyState::ToBeEnergySaving {
            return self.drain_cell(ind.cell, ind.ts);
        }
        Vec::new()
    }

    /// Result of a submitted control. Success is also reported through
    /// UE information, which moves the load; here only the reservation of a
    /// refused command is released.
    pub fn on_outcome(&mut self, cmd: &HandoverCommand, outcome: &ControlOutcome) {
        if !outcome.is_success() {
            unreserve(&mut self.view, cmd.ue);
        }
    }

    /// Cell for a new UE: its camped carrier when admissible, otherwise the
    /// best target.
    pub fn place_arrival(&self, ue: UeId) -> Option<CellId> {
        let u = self.view.ues.get(&ue)?;
        if let Some(camped) = u.camped {
            if u.rsrp.contains_key(&camped) && self.view.selectable(&camped, u.demand_prb) {
                return Some(camped);
            }
        }
        select_target(u, &self.view, None, &self.cfg)
    }
}
