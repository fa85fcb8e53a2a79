//! Broker between the E2 node and the apps: subscription routing, the A1
//! policy store and a deny-based conflict guard on handover controls.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::messages::{
    forbidden_cells, validate_policy, HandoverCommand, Message, PolicyChange, PolicyError, RcReportKind, TspPolicy,
};
use crate::ran_model::{CellId, Ran, RanError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AppId(pub u16);

impl AppId {
    pub const TS_XAPP: AppId = AppId(1);
    pub const ES_RAPP: AppId = AppId(2);
}

impl fmt::Display for AppId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            AppId::TS_XAPP => f.write_str("ts-xapp"),
            AppId::ES_RAPP => f.write_str("es-rapp"),
            AppId(n) => write!(f, "app-{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    KpmReport,
    RcMeasurement,
    RcNodeInfo,
    RcUeInfo,
    CccIndication,
    PolicyChange,
}

impl MessageKind {
    pub fn of(msg: &Message) -> Option<MessageKind> {
        Some(match msg {
            Message::KpmReport(_) => MessageKind::KpmReport,
            Message::RcReport(r) => match r.report {
                RcReportKind::MeasurementRsrp { .. } => MessageKind::RcMeasurement,
                RcReportKind::NodeInfo { .. } => MessageKind::RcNodeInfo,
                RcReportKind::UeInfo { .. } => MessageKind::RcUeInfo,
            },
            Message::CccIndication(_) => MessageKind::CccIndication,
            Message::PolicyChange(_) => MessageKind::PolicyChange,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subscription {
    pub subscriber: AppId,
    pub kinds: BTreeSet<MessageKind>,
    pub cells: Option<BTreeSet<CellId>>,
}

impl Subscription {
    pub fn new(
        subscriber: AppId,
        kinds: impl IntoIterator<Item = MessageKind>,
        cells: Option<BTreeSet<CellId>>,
    ) -> Result<Self, RicError> {
        let kinds: BTreeSet<_> = kinds.into_iter().collect();
        if kinds.is_empty() {
            return Err(RicError::EmptySubscription(subscriber));
        }
        Ok(Self {
            subscriber,
            kinds,
            cells,
        })
    }

    fn matches(&self, kind: MessageKind, msg: &Message) -> bool {
        if !self.kinds.contains(&kind) {
            return false;
        }
        let Some(filter) = &self.cells else {
            return true;
        };
        let cells: Vec<CellId> = match msg {
            Message::KpmReport(m) => vec![m.cell],
            Message::CccIndication(m) => vec![m.cell],
            Message::RcReport(r) => match &r.report {
                RcReportKind::MeasurementRsrp { rsrp, .. } => rsrp.iter().map(|e| e.cell).collect(),
                RcReportKind::NodeInfo { cells } => cells.iter().map(|c| c.cell).collect(),
                RcReportKind::UeInfo { cell, .. } => cell.iter().copied().collect(),
            },
            _ => Vec::new(),
        };
        // Messages that name no cell are never filtered out.
        cells.is_empty() || cells.iter().any(|c| filter.contains(c))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyStore {
    live: BTreeMap<String, TspPolicy>,
}

impl PolicyStore {
    pub fn forbidden(&self, cell: &CellId) -> bool {
        self.forbidden_set().contains(cell)
    }

    pub fn forbidden_set(&self) -> BTreeSet<CellId> {
        forbidden_cells(self.live.values())
    }

    pub fn get(&self, id: &str) -> Option<&TspPolicy> {
        self.live.get(id)
    }

    pub fn policies(&self) -> impl Iterator<Item = &TspPolicy> {
        self.live.values()
    }

    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenyReason {
    PolicyForbidden,
    EnergyStateConflict,
    NoCapacity,
    UnknownCell,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum ControlOutcome {
    Success,
    Denied { reason: DenyReason },
    ExecutionFailed { error: String },
}

impl ControlOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, ControlOutcome::Success)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub ts: u64,
    pub command: HandoverCommand,
    pub outcome: ControlOutcome,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RicError {
    #[error("subscription for {0} has no message kinds")]
    EmptySubscription(AppId),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, Default)]
pub struct NearRtRic {
    subscriptions: Vec<Subscription>,
    policies: PolicyStore,
    audit: Vec<AuditRecord>,
}

impl NearRtRic {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn subscribe(&mut self, sub: Subscription) {
        self.subscriptions.push(sub);
    }

    pub fn policies(&self) -> &PolicyStore {
        &self.policies
    }

    pub fn audit_log(&self) -> &[AuditRecord] {
        &self.audit
    }

    /// Subscribers that receive `msg`, in app-id order.
    pub fn route(&self, msg: &Message) -> Vec<AppId> {
        let Some(kind) = MessageKind::of(msg) else {
            return Vec::new();
        };
        let apps: BTreeSet<AppId> = self
            .subscriptions
            .iter()
            .filter(|s| s.matches(kind, msg))
            .map(|s| s.subscriber)
            .collect();
        apps.into_iter().collect()
    }

    fn guard(&self, cmd: &HandoverCommand, ran: &Ran) -> Option<DenyReason> {
        if self.policies.forbidden(&cmd.target) {
            return Some(DenyReason::PolicyForbidden);
        }
        let Some(target) = ran.cell(&cmd.target) else {
            return Some(DenyReason::UnknownCell);
        };
        if !target.energy_state.is_awake() {
            return Some(DenyReason::EnergyStateConflict);
        }
        let demand = ran.ue(cmd.ue).map(|u| u.demand_prb).unwrap_or(1);
        if !target.has_headroom(demand) {
            return Some(DenyReason::NoCapacity);
        }
        None
    }

    /// Runs the conflict guard, forwards safe commands to the node and
    /// audits every outcome.
    pub fn submit_control(&mut self, cmd: HandoverCommand, ran: &mut Ran) -> ControlOutcome {
        let outcome = match self.guard(&cmd, ran) {
            Some(reason) => ControlOutcome::Denied { reason },
            None => match ran.handover(cmd.ue, cmd.source, cmd.target) {
                Ok(()) => ControlOutcome::Success,
                Err(e) => ControlOutcome::ExecutionFailed {
                    error: execution_error(&e),
                },
            },
        };
        self.audit.push(AuditRecord {
            ts: cmd.ts,
            command: cmd,
            outcome: outcome.clone(),
        });
        outcome
    }

    pub fn a1_put(&mut self, policy: TspPolicy, ran: &Ran, ts: u64) -> Result<PolicyChange, RicError> {
        validate_policy(&policy, ran)?;
        if self.policies.live.contains_key(&policy.policy_id) {
            return Err(PolicyError::DuplicateId(policy.policy_id).into());
        }
        self.policies.live.insert(policy.policy_id.clone(), policy);
        Ok(self.snapshot(ts))
    }

    pub fn a1_delete(&mut self, policy_id: &str, ts: u64) -> Result<PolicyChange, RicError> {
        if self.policies.live.remove(policy_id).is_none() {
            return Err(PolicyError::UnknownId(policy_id.to_string()).into());
        }
        Ok(self.snapshot(ts))
    }

    fn snapshot(&self, ts: u64) -> PolicyChange {
        PolicyChange {
            ts,
            policies: self.policies.live.values().cloned().collect(),
        }
    }
}

fn execution_error(e: &RanError) -> String {
    e.to_string()
}
