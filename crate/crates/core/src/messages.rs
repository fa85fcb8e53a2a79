//! Semantic message schemas for every inter-component exchange and their
//! JSON-lines wire envelope.
//!
//! Every message is one JSON object on one line with a `type` discriminator
//! and an integer `ts` (seconds since scenario epoch):
//!
//! ```text
//! {"type":"ccc_indication","ts":900,"cell":{"site":0,"sector":0,"band":2},"cesSwitch":true,"energySavingState":"toBeEnergySaving","energySavingControl":"toBeEnergySaving"}
//! ```
//!
//! O-CES attribute names are kept verbatim on the wire.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ran_model::{CellDirectory, CellId, CellRole, EnergyControl, EnergyState, QosClass, UeId};

/// E2SM-KPM cell load report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpmReport {
    pub ts: u64,
    pub cell: CellId,
    pub prb_utilization: f64,
    pub rrc_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RsrpEntry {
    pub cell: CellId,
    pub rsrp_dbm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeCellInfo {
    pub cell: CellId,
    pub cgi: String,
    pub pci: u16,
    pub role: CellRole,
    pub prb_capacity: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UeEvent {
    /// New UE context; `cell` is the carrier it camps on.
    Setup,
    Attached,
    HandedOver,
    Released,
}

/// E2SM-RC REPORT payloads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "style", rename_all = "snake_case")]
pub enum RcReportKind {
    /// Style 1, message copy of a measurement report.
    MeasurementRsrp { ue: UeId, rsrp: Vec<RsrpEntry> },
    /// Style 3, E2 node information change.
    NodeInfo { cells: Vec<NodeCellInfo> },
    /// Style 4, UE information change.
    UeInfo {
        ue: UeId,
        event: UeEvent,
        cell: Option<CellId>,
        demand_prb: u32,
        qos: QosClass,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcReport {
    pub ts: u64,
    pub report: RcReportKind,
}

/// E2SM-RC CONTROL style 3, connected mode mobility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandoverCommand {
    pub ts: u64,
    pub ue: UeId,
    pub source: CellId,
    pub target: CellId,
}

/// E2SM-CCC indication on an O-CES attribute change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CccIndication {
    pub ts: u64,
    pub cell: CellId,
    #[serde(rename = "cesSwitch")]
    pub ces_switch: bool,
    #[serde(rename = "energySavingState")]
    pub energy_state: EnergyState,
    #[serde(rename = "energySavingControl")]
    pub control: Option<EnergyControl>,
}

/// Write of the `energySavingControl` attribute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CccControl {
    pub ts: u64,
    pub cell: CellId,
    #[serde(rename = "energySavingControl")]
    pub control: EnergyControl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Preference {
    Forbid,
    Avoid,
    Prefer,
    Shall,
}

/// A1 traffic-steering-preference policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TspPolicy {
    pub policy_id: String,
    pub preference: Preference,
    pub scope_cells: Vec<CellId>,
}

impl TspPolicy {
    pub fn forbid(policy_id: impl Into<String>, cells: Vec<CellId>) -> Self {
        Self {
            policy_id: policy_id.into(),
            preference: Preference::Forbid,
            scope_cells: cells,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A1PolicyPut {
    pub ts: u64,
    pub policy: TspPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A1PolicyDelete {
    pub ts: u64,
    pub policy_id: String,
}

/// Broker notification carrying every live policy after a change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyChange {
    pub ts: u64,
    pub policies: Vec<TspPolicy>,
}

/// Value type is tied to the attribute by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "attribute", content = "value")]
pub enum O1Attribute {
    #[serde(rename = "energySavingState")]
    EnergySavingState(EnergyState),
    #[serde(rename = "cesSwitch")]
    CesSwitch(bool),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct O1Write {
    pub ts: u64,
    pub cell: CellId,
    #[serde(flatten)]
    pub attribute: O1Attribute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    KpmReport(KpmReport),
    RcReport(RcReport),
    HandoverCommand(HandoverCommand),
    CccIndication(CccIndication),
    CccControl(CccControl),
    A1PolicyPut(A1PolicyPut),
    A1PolicyDelete(A1PolicyDelete),
    PolicyChange(PolicyChange),
    O1Write(O1Write),
}

impl Message {
    pub fn ts(&self) -> u64 {
        match self {
            Message::KpmReport(m) => m.ts,
            Message::RcReport(m) => m.ts,
            Message::HandoverCommand(m) => m.ts,
            Message::CccIndication(m) => m.ts,
            Message::CccControl(m) => m.ts,
            Message::A1PolicyPut(m) => m.ts,
            Message::A1PolicyDelete(m) => m.ts,
            Message::PolicyChange(m) => m.ts,
            Message::O1Write(m) => m.ts,
        }
    }

    /// Checks the type invariants that serde cannot express.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Message::KpmReport(m) => {
                if !(0.0..=1.0).contains(&m.prb_utilization) {
                    return Err(format!("prb_utilization {} outside [0, 1]", m.prb_utilization));
                }
            }
            Message::RcReport(RcReport {
                report: RcReportKind::MeasurementRsrp { rsrp, .. },
                ..
            }) => {
                if rsrp.is_empty() {
                    return Err("report.rsrp: empty measurement".into());
                }
                if rsrp.iter().any(|e| !e.rsrp_dbm.is_finite()) {
                    return Err("report.rsrp: non-finite value".into());
                }
            }
            Message::RcReport(RcReport {
                report: RcReportKind::UeInfo { demand_prb, .. },
                ..
            }) => {
                if *demand_prb == 0 {
                    return Err("report.demand_prb: must be >= 1".into());
                }
            }
            Message::RcReport(_) => {}
            Message::HandoverCommand(m) => {
                if m.source == m.target {
                    return Err("target: equals source".into());
                }
            }
            Message::A1PolicyPut(m) => validate_policy_shape(&m.policy)?,
            Message::PolicyChange(m) => {
                for p in &m.policies {
                    validate_policy_shape(p)?;
                }
            }
            Message::CccIndication(_) | Message::CccControl(_) | Message::A1PolicyDelete(_) | Message::O1Write(_) => {}
        }
        Ok(())
    }
}

fn validate_policy_shape(p: &TspPolicy) -> Result<(), String> {
    if p.scope_cells.is_empty() {
        return Err(format!("policy.scope_cells: empty scope in policy {}", p.policy_id));
    }
    if p.policy_id.is_empty() {
        return Err("policy.policy_id: empty".into());
    }
    Ok(())
}

macro_rules! impl_from_message {
    ($($variant:ident),*) => {
        $(impl From<$variant> for Message {
            fn from(m: $variant) -> Self {
                Message::$variant(m)
            }
        })*
    };
}

impl_from_message!(
    KpmReport,
    RcReport,
    HandoverCommand,
    CccIndication,
    CccControl,
    A1PolicyPut,
    A1PolicyDelete,
    PolicyChange,
    O1Write
);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("invalid message: {0}")]
    Invalid(String),
    #[error("decode error at `{path}`: {message}")]
    Decode { path: String, message: String },
}

/// Serializes one message as a JSON line (trailing newline included).
pub fn encode(msg: &Message) -> Result<Vec<u8>, CodecError> {
    msg.validate().map_err(CodecError::Invalid)?;
    let mut out = serde_json::to_vec(msg).map_err(|e| CodecError::Invalid(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Parses one JSON line back into a message.
pub fn decode(bytes: &[u8]) -> Result<Message, CodecError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let msg: Message = serde_path_to_error::deserialize(&mut de).map_err(|e| CodecError::Decode {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    de.end().map_err(|e| CodecError::Decode {
        path: ".".into(),
        message: e.to_string(),
    })?;
    msg.validate().map_err(|m| {
        let (path, message) = m.split_once(": ").unwrap_or((".", m.as_str()));
        CodecError::Decode {
            path: path.to_string(),
            message: message.to_string(),
        }
    })?;
    Ok(msg)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("policy {0}: empty scope")]
    EmptyScope(String),
    #[error("policy scope references unknown cell {0}")]
    UnknownCell(CellId),
    #[error("policy would forbid coverage cell {0}")]
    CoverageForbidden(CellId),
    #[error("policy id {0} already live")]
    DuplicateId(String),
    #[error("no live policy with id {0}")]
    UnknownId(String),
}

/// Accepts a policy iff every scoped cell exists and none is on the coverage
/// layer.
pub fn validate_policy(p: &TspPolicy, cells: &impl CellDirectory) -> Result<(), PolicyError> {
    if p.scope_cells.is_empty() {
        return Err(PolicyError::EmptyScope(p.policy_id.clone()));
    }
    for cell in &p.scope_cells {
        match cells.cell_role(cell) {
            None => return Err(PolicyError::UnknownCell(*cell)),
            Some(CellRole::Coverage) if p.preference == Preference::Forbid => {
                return Err(PolicyError::CoverageForbidden(*cell))
            }
            Some(_) => {}
        }
    }
    Ok(())
}

/// Cells barred by the FORBID policies in `policies`.
pub fn forbidden_cells<'a>(policies: impl IntoIterator<Item = &'a TspPolicy>) -> BTreeSet<CellId> {
    policies
        .into_iter()
        .filter(|p| p.preference == Preference::Forbid)
        .flat_map(|p| p.scope_cells.iter().copied())
        .collect()
}
