//! Emulated RAN: topology, cells, UEs, radio measurements, admission control,
//! the O-CES energy-state machine and the per-interval power model.

mod cell;
mod radio;
mod topology;

use std::collections::BTreeMap;

use thiserror::Error;

pub use cell::{
    cgi_for, interval_energy, pci_for, Cell, CellId, CellRole, EnergyControl, EnergyState, Position, PowerModel,
    QosClass, RejectReason, SectorId, Ue, UeId,
};
pub use radio::{angle_between_deg, bearing_deg, is_visible, rsrp, rsrp_at, RadioParams};
pub use topology::{BandConfig, CellDirectory, SectorConfig, SectorLayout, SiteConfig, Topology};

use crate::messages::{CccIndication, O1Attribute, O1Write};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RanError {
    #[error("admission rejected: {0}")]
    Rejected(RejectReason),
    #[error("UE {0} is not attached")]
    UnknownUe(UeId),
    #[error("UE {ue} already attached to cell {cell}")]
    AlreadyAttached { ue: UeId, cell: CellId },
    #[error("unknown cell {0}")]
    UnknownCell(CellId),
    #[error("energy saving is disabled on cell {0}")]
    CesDisabled(CellId),
    #[error("illegal energy-state transition on cell {cell}: {from} -> {to}")]
    IllegalTransition {
        cell: CellId,
        from: EnergyState,
        to: EnergyState,
    },
    #[error("cell {cell} still serves {rrc_count} UEs")]
    NotEmpty { cell: CellId, rrc_count: usize },
    #[error("UE {0} is attached to a different cell")]
    WrongSource(UeId),
    #[error("invalid UE: {0}")]
    InvalidUe(String),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
}

/// The E2/O1 node: owns every cell and UE of a scenario.
#[derive(Debug, Clone)]
pub struct Ran {
    cells: BTreeMap<CellId, Cell>,
    ues: BTreeMap<UeId, Ue>,
    radio: RadioParams,
}

impl Ran {
    pub fn new(topology: &Topology) -> Self {
        Self {
            cells: topology.cells().into_iter().map(|c| (c.id, c)).collect(),
            ues: BTreeMap::new(),
            radio: topology.radio,
        }
    }

    pub fn from_cells(cells: impl IntoIterator<Item = Cell>, radio: RadioParams) -> Self {
        Self {
            cells: cells.into_iter().map(|c| (c.id, c)).collect(),
            ues: BTreeMap::new(),
            radio,
        }
    }

    pub fn radio(&self) -> &RadioParams {
        &self.radio
    }

    pub fn cell(&self, id: &CellId) -> Option<&Cell> {
        self.cells.get(id)
    }

    pub fn cells(&self) -> impl Iterator<Item = &Cell> {
        self.cells.values()
    }

    pub fn cell_map(&self) -> &BTreeMap<CellId, Cell> {
        &self.cells
    }

    pub fn ue(&self, id: UeId) -> Option<&Ue> {
        self.ues.get(&id)
    }

    pub fn ues(&self) -> impl Iterator<Item = &Ue> {
        self.ues.values()
    }

    fn cell_mut(&mut self, id: &CellId) -> Result<&mut Cell, RanError> {
        self.cells.get_mut(id).ok_or(RanError::UnknownCell(*id))
    }

    /// Registers a not-yet-attached UE.
    pub fn add_ue(&mut self, mut ue: Ue) -> Result<(), RanError> {
        if ue.demand_prb == 0 {
            return Err(RanError::InvalidUe(format!("UE {} has zero demand", ue.id)));
        }
        if self.ues.contains_key(&ue.id) {
            return Err(RanError::InvalidUe(format!("UE {} already exists", ue.id)));
        }
        ue.serving = None;
        self.ues.insert(ue.id, ue);
        Ok(())
    }

    /// RSRP of every cell the UE can measure, in `CellId` order.
    pub fn measure(&self, ue: UeId) -> Result<Vec<(CellId, f64)>, RanError> {
        let ue = self.ues.get(&ue).ok_or(RanError::UnknownUe(ue))?;
        Ok(self
            .cells
            .values()
            .filter(|c| is_visible(&ue.position, c, &self.radio))
            .map(|c| (c.id, rsrp(ue, c, &self.radio)))
            .collect())
    }

    pub fn attach(&mut self, ue: UeId, cell: CellId) -> Result<(), RanError> {
        let entry = self.ues.get(&ue).ok_or(RanError::UnknownUe(ue))?;
        if let Some(serving) = entry.serving {
            return Err(RanError::AlreadyAttached { ue, cell: serving });
        }
        let demand = entry.demand_prb;
        self.cell_mut(&cell)?.admit(ue, demand)?;
        self.ues.get_mut(&ue).expect("checked").serving = Some(cell);
        Ok(())
    }

    /// Detaches (if attached) and forgets the UE; returns its last serving cell.
    pub fn remove_ue(&mut self, ue: UeId) -> Result<Option<CellId>, RanError> {
        let entry = self.ues.remove(&ue).ok_or(RanError::UnknownUe(ue))?;
        if let Some(serving) = entry.serving {
            self.cell_mut(&serving)?.release(ue)?;
        }
        Ok(entry.serving)
    }

    /// Moves an attached UE; on any failure the UE stays on `source`.
    pub fn handover(&mut self, ue: UeId, source: CellId, target: CellId) -> Result<(), RanError> {
        let entry = self.ues.get(&ue).ok_or(RanError::UnknownUe(ue))?;
        if entry.serving != Some(source) {
            return Err(RanError::WrongSource(ue));
        }
        let demand = entry.demand_prb;
        let target_cell = self.cells.get(&target).ok_or(RanError::UnknownCell(target))?;
        target_cell.check_admit(demand).map_err(RanError::Rejected)?;
        self.cell_mut(&source)?.release(ue)?;
        self.cell_mut(&target)?.admit(ue, demand)?;
        self.ues.get_mut(&ue).expect("checked").serving = Some(target);
        Ok(())
    }

    fn indication(&self, cell: &CellId, control: Option<EnergyControl>, ts: u64) -> CccIndication {
        let c = &self.cells[cell];
        CccIndication {
            ts,
            cell: *cell,
            ces_switch: c.ces_switch,
            energy_state: c.energy_state,
            control,
        }
    }

    /// E2SM-CCC control of `energySavingControl`.
    pub fn apply_energy_control(
        &mut self,
        cell: CellId,
        control: EnergyControl,
        ts: u64,
    ) -> Result<CccIndication, RanError> {
        self.cell_mut(&cell)?.apply_energy_control(control)?;
        Ok(self.indication(&cell, Some(control), ts))
    }

    /// Applies an O1 configuration write. State writes walk the legal path
    /// through the transient state, emitting one indication per change.
    pub fn apply_o1(&mut self, write: &O1Write) -> Result<Vec<CccIndication>, RanError> {
        let ts = write.ts;
        let id = write.cell;
        let cell = self.cell_mut(&id)?;
        // (control that caused the step, state after the step)
        let mut steps: Vec<(Option<EnergyControl>, EnergyState)> = Vec::new();
        match write.attribute {
            O1Attribute::CesSwitch(on) => {
                if cell.set_ces_switch(on)? {
                    steps.push((None, cell.energy_state));
                }
            }
            O1Attribute::EnergySavingState(EnergyState::IsEnergySaving) => {
                if cell.energy_state != EnergyState::IsEnergySaving {
                    if cell.rrc_count() > 0 {
                        return Err(RanError::NotEmpty {
                            cell: id,
                            rrc_count: cell.rrc_count(),
                        });
                    }
                    if cell.energy_state == EnergyState::IsNotEnergySaving {
                        let s = cell.apply_energy_control(EnergyControl::ToBeEnergySaving)?;
                        steps.push((Some(EnergyControl::ToBeEnergySaving), s));
                    }
                    if cell.energy_state != EnergyState::ToBeEnergySaving {
                        return Err(RanError::IllegalTransition {
                            cell: id,
                            from: cell.energy_state,
                            to: EnergyState::IsEnergySaving,
                        });
                    }
                    steps.push((None, cell.finalize_sleep()));
                }
            }
            O1Attribute::EnergySavingState(EnergyState::IsNotEnergySaving) => {
                if cell.energy_state != EnergyState::IsNotEnergySaving {
                    if cell.energy_state != EnergyState::ToBeNotEnergySaving {
                        let s = cell.apply_energy_control(EnergyControl::ToBeNotEnergySaving)?;
                        steps.push((Some(EnergyControl::ToBeNotEnergySaving), s));
                    }
                    steps.push((None, cell.finalize_wake()));
                }
            }
            O1Attribute::EnergySavingState(other) => {
                return Err(RanError::IllegalTransition {
                    cell: id,
                    from: cell.energy_state,
                    to: other,
                });
            }
        }
        let ces_switch = cell.ces_switch;
        let out = steps
            .into_iter()
            .map(|(control, energy_state)| CccIndication {
                ts,
                cell: id,
                ces_switch,
                energy_state,
                control,
            })
            .collect();
        Ok(out)
    }

    /// Node-side completion of transient states: empty `ToBeEnergySaving`
    /// cells go to sleep and `ToBeNotEnergySaving` cells finish waking.
    pub fn progress(&mut self, ts: u64) -> Vec<CccIndication> {
        let mut changed = Vec::new();
        for cell in self.cells.values_mut() {
            let before = cell.energy_state;
            let after = match before {
                EnergyState::ToBeEnergySaving => cell.finalize_sleep(),
                EnergyState::ToBeNotEnergySaving => cell.finalize_wake(),
                other => other,
            };
            if after != before {
                changed.push(cell.id);
            }
        }
        changed.iter().map(|id| self.indication(id, None, ts)).collect()
    }

    /// Energy drawn over one interval, split into (capacity layer, coverage layer).
    pub fn interval_energy(&self, interval_s: f64) -> (f64, f64) {
        let mut capacity = 0.0;
        let mut coverage = 0.0;
        for cell in self.cells.values() {
            let e = cell.interval_energy(interval_s);
            match cell.role {
                CellRole::Capacity => capacity += e,
                CellRole::Coverage => coverage += e,
            }
        }
        (capacity, coverage)
    }
}

impl CellDirectory for Ran {
    fn cell_role(&self, id: &CellId) -> Option<CellRole> {
        self.cells.get(id).map(|c| c.role)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ran() -> Ran {
        let topo = Topology::generate(1, 1, 3).unwrap();
        Ran::new(&topo)
    }

    fn ue(id: UeId, demand: u32) -> Ue {
        Ue {
            id,
            position: Position::new(100.0, 0.0),
            demand_prb: demand,
            serving: None,
            qos: QosClass::Broadband,
            camped: CellId::new(0, 0, 1),
        }
    }

    #[test]
    fn handover_moves_prbs() {
        let mut ran = ran();
        let (a, b) = (CellId::new(0, 0, 0), CellId::new(0, 0, 1));
        ran.add_ue(ue(1, 5)).unwrap();
        ran.attach(1, a).unwrap();
        ran.handover(1, a, b).unwrap();
        assert_eq!(ran.cell(&a).unwrap().prb_used(), 0);
        assert_eq!(ran.cell(&b).unwrap().prb_used(), 5);
        assert_eq!(ran.ue(1).unwrap().serving, Some(b));
    }

    #[test]
    fn failed_handover_leaves_ue_at_source() {
        let mut ran = ran();
        let (a, b) = (CellId::new(0, 0, 0), CellId::new(0, 0, 1));
        ran.add_ue(ue(1, 5)).unwrap();
        ran.attach(1, a).unwrap();
        ran.apply_energy_control(b, EnergyControl::ToBeEnergySaving, 0).unwrap();
        assert!(ran.handover(1, a, b).is_err());
        assert_eq!(ran.ue(1).unwrap().serving, Some(a));
        assert_eq!(ran.cell(&a).unwrap().prb_used(), 5);
        assert!(matches!(ran.handover(1, b, a), Err(RanError::WrongSource(1))));
    }

    #[test]
    fn zero_demand_ue_rejected() {
        let mut ran = ran();
        assert!(ran.add_ue(ue(1, 0)).is_err());
    }

    #[test]
    fn o1_sleep_walks_transient_state() {
        let mut ran = ran();
        let cell = CellId::new(0, 0, 2);
        let write = O1Write {
            ts: 5,
            cell,
            attribute: O1Attribute::EnergySavingState(EnergyState::IsEnergySaving),
        };
        let inds = ran.apply_o1(&write).unwrap();
        let states: Vec<_> = inds.iter().map(|i| i.energy_state).collect();
        assert_eq!(states, vec![EnergyState::ToBeEnergySaving, EnergyState::IsEnergySaving]);
        assert!(ran.apply_o1(&write).unwrap().is_empty());

        let wake = O1Write {
            attribute: O1Attribute::EnergySavingState(EnergyState::IsNotEnergySaving),
            ..write
        };
        let states: Vec<_> = ran.apply_o1(&wake).unwrap().iter().map(|i| i.energy_state).collect();
        assert_eq!(
            states,
            vec![EnergyState::ToBeNotEnergySaving, EnergyState::IsNotEnergySaving]
        );
    }

    #[test]
    fn o1_sleep_refused_with_users() {
        let mut ran = ran();
        let cell = CellId::new(0, 0, 2);
        ran.add_ue(ue(1, 5)).unwrap();
        ran.attach(1, cell).unwrap();
        let write = O1Write {
            ts: 0,
            cell,
            attribute: O1Attribute::EnergySavingState(EnergyState::IsEnergySaving),
        };
        assert!(matches!(ran.apply_o1(&write), Err(RanError::NotEmpty { .. })));
        assert_eq!(ran.cell(&cell).unwrap().energy_state, EnergyState::IsNotEnergySaving);
    }

    #[test]
    fn o1_ces_switch_only_reports_changes() {
        let mut ran = ran();
        let cell = CellId::new(0, 0, 1);
        let write = |on| O1Write {
            ts: 0,
            cell,
            attribute: O1Attribute::CesSwitch(on),
        };
        assert!(ran.apply_o1(&write(true)).unwrap().is_empty());
        let inds = ran.apply_o1(&write(false)).unwrap();
        assert_eq!(inds.len(), 1);
        assert!(!inds[0].ces_switch);
        assert_eq!(inds[0].energy_state, EnergyState::IsNotEnergySaving);
        assert!(matches!(
            ran.apply_energy_control(cell, EnergyControl::ToBeEnergySaving, 0),
            Err(RanError::CesDisabled(_))
        ));
    }

    #[test]
    fn progress_finalizes_transients() {
        let mut ran = ran();
        let cell = CellId::new(0, 0, 1);
        ran.add_ue(ue(1, 5)).unwrap();
        ran.attach(1, cell).unwrap();
        ran.apply_energy_control(cell, EnergyControl::ToBeEnergySaving, 0)
            .unwrap();
        assert!(ran.progress(0).is_empty());
        ran.remove_ue(1).unwrap();
        let inds = ran.progress(1);
        assert_eq!(inds.len(), 1);
        assert_eq!(inds[0].energy_state, EnergyState::IsEnergySaving);
        ran.apply_energy_control(cell, EnergyControl::ToBeNotEnergySaving, 2)
            .unwrap();
        let inds = ran.progress(2);
        assert_eq!(inds[0].energy_state, EnergyState::IsNotEnergySaving);
    }

    #[test]
    fn sleeping_saves_energy() {
        let mut ran = ran();
        let (awake_cap, _) = ran.interval_energy(900.0);
        let cell = CellId::new(0, 0, 2);
        ran.apply_energy_control(cell, EnergyControl::ToBeEnergySaving, 0)
            .unwrap();
        ran.progress(0);
        let (slept_cap, _) = ran.interval_energy(900.0);
        assert!(slept_cap < awake_cap);
    }
}
