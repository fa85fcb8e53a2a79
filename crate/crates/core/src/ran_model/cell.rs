use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::RanError;

pub type UeId = u64;

/// One carrier instance at one sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId {
    pub site: u32,
    pub sector: u32,
    pub band: u32,
}

impl CellId {
    pub const fn new(site: u32, sector: u32, band: u32) -> Self {
        Self { site, sector, band }
    }

    pub fn sector_id(&self) -> SectorId {
        SectorId {
            site: self.site,
            sector: self.sector,
        }
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.site, self.sector, self.band)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SectorId {
    pub site: u32,
    pub sector: u32,
}

impl fmt::Display for SectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.site, self.sector)
    }
}

/// The O-CES `energySavingState` attribute, including the two transient states
/// driven by `energySavingControl`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EnergyState {
    IsNotEnergySaving,
    ToBeEnergySaving,
    IsEnergySaving,
    ToBeNotEnergySaving,
}

impl EnergyState {
    /// Edges of the legal-transition graph.
    ///
    /// `ToBeEnergySaving -> ToBeNotEnergySaving` is the abort edge used when a
    /// drain has to be cancelled.
    pub fn can_transition_to(self, next: EnergyState) -> bool {
        use EnergyState::*;
        matches!(
            (self, next),
            (IsNotEnergySaving, ToBeEnergySaving)
                | (ToBeEnergySaving, IsEnergySaving)
                | (ToBeEnergySaving, ToBeNotEnergySaving)
                | (IsEnergySaving, ToBeNotEnergySaving)
                | (ToBeNotEnergySaving, IsNotEnergySaving)
        )
    }

    /// Only a fully awake cell serves new users.
    pub fn is_awake(self) -> bool {
        self == EnergyState::IsNotEnergySaving
    }
}

impl fmt::Display for EnergyState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EnergyState::IsNotEnergySaving => "isNotEnergySaving",
            EnergyState::ToBeEnergySaving => "toBeEnergySaving",
            EnergyState::IsEnergySaving => "isEnergySaving",
            EnergyState::ToBeNotEnergySaving => "toBeNotEnergySaving",
        };
        f.write_str(s)
    }
}

/// The O-CES `energySavingControl` attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EnergyControl {
    ToBeEnergySaving,
    ToBeNotEnergySaving,
}

impl EnergyControl {
    pub fn target_state(self) -> EnergyState {
        match self {
            EnergyControl::ToBeEnergySaving => EnergyState::ToBeEnergySaving,
            EnergyControl::ToBeNotEnergySaving => EnergyState::ToBeNotEnergySaving,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellRole {
    Coverage,
    Capacity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Affine per-cell power draw: fixed cost while awake plus a per-PRB term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    pub p_active_w: f64,
    pub p_per_prb_w: f64,
    pub p_sleep_w: f64,
}

impl PowerModel {
    pub fn validate(&self) -> Result<(), String> {
        let all = [self.p_active_w, self.p_per_prb_w, self.p_sleep_w];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err("power model values must be finite and >= 0".into());
        }
        if self.p_sleep_w >= self.p_active_w {
            return Err(format!(
                "p_sleep_w ({}) must be below p_active_w ({})",
                self.p_sleep_w, self.p_active_w
            ));
        }
        Ok(())
    }

    /// Average power in watts for a cell in `state` carrying `prb_used` PRBs.
    pub fn power_w(&self, state: EnergyState, prb_used: u32) -> f64 {
        match state {
            EnergyState::IsEnergySaving => self.p_sleep_w,
            _ => self.p_active_w + self.p_per_prb_w * f64::from(prb_used),
        }
    }
}

/// Energy in joules drawn by `cell` over one interval under `model`.
pub fn interval_energy(cell: &Cell, model: &PowerModel, interval_s: f64) -> f64 {
    debug_assert!(interval_s > 0.0);
    model.power_w(cell.energy_state, cell.prb_used) * interval_s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    EnergySaving,
    NoCapacity,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::EnergySaving => f.write_str("cell is not awake"),
            RejectReason::NoCapacity => f.write_str("PRB budget exceeded"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub id: CellId,
    pub cgi: String,
    pub pci: u16,
    pub role: CellRole,
    pub position: Position,
    pub azimuth_deg: f64,
    pub prb_capacity: u32,
    /// Path-loss offset of this carrier's band, in dB.
    pub band_offset_db: f64,
    pub power: PowerModel,
    pub ces_switch: bool,
    pub energy_state: EnergyState,
    /// Attached UEs with their PRB demand.
    rrc_connected: BTreeMap<UeId, u32>,
    prb_used: u32,
}

impl Cell {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: CellId,
        role: CellRole,
        position: Position,
        azimuth_deg: f64,
        prb_capacity: u32,
        band_offset_db: f64,
        power: PowerModel,
    ) -> Self {
        Self {
            id,
            cgi: cgi_for(id),
            pci: pci_for(id),
            role,
            position,
            azimuth_deg,
            prb_capacity,
            band_offset_db,
            power,
            ces_switch: role == CellRole::Capacity,
            energy_state: EnergyState::IsNotEnergySaving,
            rrc_connected: BTreeMap::new(),
            prb_used: 0,
        }
    }

    pub fn prb_used(&self) -> u32 {
        self.prb_used
    }

    pub fn rrc_count(&self) -> usize {
        self.rrc_connected.len()
    }

    pub fn attached(&self) -> impl Iterator<Item = UeId> + '_ {
        self.rrc_connected.keys().copied()
    }

    pub fn is_attached(&self, ue: UeId) -> bool {
        self.rrc_connected.contains_key(&ue)
    }

    pub fn utilization(&self) -> f64 {
        if self.prb_capacity == 0 {
            return 0.0;
        }
        f64::from(self.prb_used) / f64::from(self.prb_capacity)
    }

    pub fn has_headroom(&self, demand_prb: u32) -> bool {
        self.prb_used + demand_prb <= self.prb_capacity
    }

    /// Checks admission without mutating the cell.
    pub fn check_admit(&self, demand_prb: u32) -> Result<(), RejectReason> {
        if !self.energy_state.is_awake() {
            return Err(RejectReason::EnergySaving);
        }
        if !self.has_headroom(demand_prb) {
            return Err(RejectReason::NoCapacity);
        }
        Ok(())
    }

    pub fn admit(&mut self, ue: UeId, demand_prb: u32) -> Result<(), RanError> {
        if self.rrc_connected.contains_key(&ue) {
            return Err(RanError::AlreadyAttached { ue, cell: self.id });
        }
        self.check_admit(demand_prb).map_err(RanError::Rejected)?;
        self.rrc_connected.insert(ue, demand_prb);
        self.prb_used += demand_prb;
        Ok(())
    }

    /// Detaches `ue` and returns the PRB demand it held.
    pub fn release(&mut self, ue: UeId) -> Result<u32, RanError> {
        let demand = self.rrc_connected.remove(&ue).ok_or(RanError::UnknownUe(ue))?;
        self.prb_used = self.prb_used.saturating_sub(demand);
        Ok(demand)
    }

    fn transition(&mut self, next: EnergyState) -> Result<EnergyState, RanError> {
        if !self.energy_state.can_transition_to(next) {
            return Err(RanError::IllegalTransition {
                cell: self.id,
                from: self.energy_state,
                to: next,
            });
        }
        self.energy_state = next;
        Ok(next)
    }

    pub fn apply_energy_control(&mut self, control: EnergyControl) -> Result<EnergyState, RanError> {
        if !self.ces_switch {
            return Err(RanError::CesDisabled(self.id));
        }
        self.transition(control.target_state())
    }

    /// Completes a pending switch-off once the last user has left.
    pub fn finalize_sleep(&mut self) -> EnergyState {
        if self.energy_state == EnergyState::ToBeEnergySaving && self.rrc_connected.is_empty() {
            self.energy_state = EnergyState::IsEnergySaving;
        }
        self.energy_state
    }

    /// Completes a pending switch-on; the node needs no precondition for it.
    pub fn finalize_wake(&mut self) -> EnergyState {
        if self.energy_state == EnergyState::ToBeNotEnergySaving {
            self.energy_state = EnergyState::IsNotEnergySaving;
        }
        self.energy_state
    }

    pub fn set_ces_switch(&mut self, on: bool) -> Result<bool, RanError> {
        if self.role == CellRole::Coverage && on {
            return Err(RanError::CesDisabled(self.id));
        }
        if !on && self.energy_state != EnergyState::IsNotEnergySaving {
            return Err(RanError::IllegalTransition {
                cell: self.id,
                from: self.energy_state,
                to: self.energy_state,
            });
        }
        let changed = self.ces_switch != on;
        self.ces_switch = on;
        Ok(changed)
    }

    pub fn interval_energy(&self, interval_s: f64) -> f64 {
        interval_energy(self, &self.power, interval_s)
    }

    /// Sum of per-UE demand, recomputed from scratch.
    pub fn demand_sum(&self) -> u32 {
        self.rrc_connected.values().sum()
    }
}

pub fn pci_for(id: CellId) -> u16 {
    ((u64::from(id.site) * 3 + u64::from(id.sector) + u64::from(id.band) * 64) % 1008) as u16
}

pub fn cgi_for(id: CellId) -> String {
    format!("00101-{:05}{:02}{:02}", id.site, id.sector, id.band)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QosClass {
    Broadband,
    Voice,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ue {
    pub id: UeId,
    pub position: Position,
    pub demand_prb: u32,
    pub serving: Option<CellId>,
    pub qos: QosClass,
    /// Carrier the UE camps on when it attempts access; its demand is drawn
    /// from this cell's traffic series.
    pub camped: CellId,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power() -> PowerModel {
        PowerModel {
            p_active_w: 100.0,
            p_per_prb_w: 1.0,
            p_sleep_w: 5.0,
        }
    }

    fn capacity_cell(capacity: u32) -> Cell {
        Cell::new(
            CellId::new(0, 0, 1),
            CellRole::Capacity,
            Position::new(0.0, 0.0),
            0.0,
            capacity,
            0.0,
            power(),
        )
    }

    #[test]
    fn admit_into_empty_awake_cell() {
        let mut cell = capacity_cell(100);
        cell.admit(1, 10).unwrap();
        assert_eq!(cell.prb_used(), 10);
        assert_eq!(cell.rrc_count(), 1);
    }

    #[test]
    fn admit_rejected_while_energy_saving() {
        let mut cell = capacity_cell(100);
        cell.apply_energy_control(EnergyControl::ToBeEnergySaving).unwrap();
        assert!(matches!(
            cell.admit(1, 10),
            Err(RanError::Rejected(RejectReason::EnergySaving))
        ));
        cell.finalize_sleep();
        assert_eq!(cell.energy_state, EnergyState::IsEnergySaving);
        assert!(matches!(
            cell.admit(1, 10),
            Err(RanError::Rejected(RejectReason::EnergySaving))
        ));
    }

    #[test]
    fn admit_rejected_without_capacity() {
        let mut cell = capacity_cell(100);
        for ue in 0..19 {
            cell.admit(ue, 5).unwrap();
        }
        assert_eq!(cell.prb_used(), 95);
        assert!(matches!(
            cell.admit(99, 10),
            Err(RanError::Rejected(RejectReason::NoCapacity))
        ));
        assert_eq!(cell.prb_used(), 95);
    }

    #[test]
    fn admit_twice_is_an_error() {
        let mut cell = capacity_cell(100);
        cell.admit(1, 5).unwrap();
        assert!(matches!(cell.admit(1, 5), Err(RanError::AlreadyAttached { .. })));
    }

    #[test]
    fn attach_release_restores_cell() {
        let mut cell = capacity_cell(100);
        cell.admit(1, 7).unwrap();
        let before = cell.clone();
        cell.admit(2, 10).unwrap();
        assert_eq!(cell.release(2).unwrap(), 10);
        assert_eq!(cell, before);
        cell.release(1).unwrap();
        assert_eq!(cell.rrc_count(), 0);
        assert_eq!(cell.prb_used(), 0);
        assert!(matches!(cell.release(42), Err(RanError::UnknownUe(42))));
    }

    #[test]
    fn control_transitions() {
        let mut cell = capacity_cell(100);
        assert_eq!(
            cell.apply_energy_control(EnergyControl::ToBeEnergySaving).unwrap(),
            EnergyState::ToBeEnergySaving
        );
        cell.finalize_sleep();
        assert!(matches!(
            cell.apply_energy_control(EnergyControl::ToBeEnergySaving),
            Err(RanError::IllegalTransition { .. })
        ));
        assert_eq!(
            cell.apply_energy_control(EnergyControl::ToBeNotEnergySaving).unwrap(),
            EnergyState::ToBeNotEnergySaving
        );
        assert_eq!(cell.finalize_wake(), EnergyState::IsNotEnergySaving);
    }

    #[test]
    fn abort_during_drain() {
        let mut cell = capacity_cell(100);
        cell.admit(1, 5).unwrap();
        cell.apply_energy_control(EnergyControl::ToBeEnergySaving).unwrap();
        cell.apply_energy_control(EnergyControl::ToBeNotEnergySaving).unwrap();
        assert_eq!(cell.finalize_wake(), EnergyState::IsNotEnergySaving);
        assert_eq!(cell.rrc_count(), 1);
    }

    #[test]
    fn coverage_cell_rejects_controls() {
        let mut cell = Cell::new(
            CellId::new(0, 0, 0),
            CellRole::Coverage,
            Position::new(0.0, 0.0),
            0.0,
            100,
            0.0,
            power(),
        );
        assert!(!cell.ces_switch);
        for control in [EnergyControl::ToBeEnergySaving, EnergyControl::ToBeNotEnergySaving] {
            assert!(matches!(
                cell.apply_energy_control(control),
                Err(RanError::CesDisabled(_))
            ));
        }
        assert!(cell.set_ces_switch(true).is_err());
    }

    #[test]
    fn finalize_sleep_waits_for_empty_cell() {
        let mut cell = capacity_cell(100);
        for ue in 0..3 {
            cell.admit(ue, 5).unwrap();
        }
        assert_eq!(cell.finalize_sleep(), EnergyState::IsNotEnergySaving);
        cell.apply_energy_control(EnergyControl::ToBeEnergySaving).unwrap();
        assert_eq!(cell.finalize_sleep(), EnergyState::ToBeEnergySaving);
        for ue in 0..3 {
            cell.release(ue).unwrap();
        }
        assert_eq!(cell.finalize_sleep(), EnergyState::IsEnergySaving);
    }

    #[test]
    fn interval_energy_values() {
        let model = PowerModel {
            p_active_w: 100.0,
            p_per_prb_w: 1.0,
            p_sleep_w: 5.0,
        };
        let mut cell = capacity_cell(100);
        assert_eq!(interval_energy(&cell, &model, 900.0), 90_000.0);
        cell.apply_energy_control(EnergyControl::ToBeEnergySaving).unwrap();
        cell.finalize_sleep();
        assert_eq!(interval_energy(&cell, &model, 900.0), 4_500.0);
        assert_eq!(90_000.0 - 4_500.0, (model.p_active_w - model.p_sleep_w) * 900.0);
    }

    #[test]
    fn power_model_validation() {
        assert!(power().validate().is_ok());
        let bad = PowerModel {
            p_sleep_w: 200.0,
            ..power()
        };
        assert!(bad.validate().is_err());
        let negative = PowerModel {
            p_per_prb_w: -1.0,
            ..power()
        };
        assert!(negative.validate().is_err());
    }

    #[test]
    fn pci_is_deterministic_and_in_range() {
        assert_eq!(pci_for(CellId::new(2, 1, 3)), 2 * 3 + 1 + 3 * 64);
        assert_eq!(
            pci_for(CellId::new(400, 2, 15)),
            ((400 * 3 + 2 + 15 * 64) % 1008) as u16
        );
        assert!(pci_for(CellId::new(u32::MAX, 2, 4)) < 1008);
    }

    #[test]
    fn energy_state_wire_names() {
        let json = serde_json::to_string(&EnergyState::ToBeNotEnergySaving).unwrap();
        assert_eq!(json, "\"toBeNotEnergySaving\"");
    }
}
