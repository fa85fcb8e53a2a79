//! Discrete-event simulator of an O-RAN energy-saving rApp and a
//! traffic-steering xApp sharing one RAN.
//!
//! The crate is organised bottom-up: [`ran_model`] holds cells, UEs and the
//! energy-state machine, [`traffic`] turns utilization traces into UE
//! arrivals, [`messages`] defines every wire message, [`near_rt_ric`] brokers
//! them, [`ts_xapp`] and [`es_rapp`] are the two control apps,
//! [`sim_engine`] steps everything in time and [`metrics`] reduces an event
//! log to KPIs.

pub mod es_rapp;
pub mod messages;
pub mod metrics;
pub mod near_rt_ric;
pub mod ran_model;
pub mod sim_engine;
pub mod traffic;
pub mod ts_xapp;

pub use es_rapp::{EsConfig, EsMode, EsRapp, NotificationMode, ScriptedAction, ScriptedCommand};
pub use messages::{decode, encode, CodecError, Message};
pub use metrics::{compute_metrics, MetricsReport};
pub use near_rt_ric::{AppId, AuditRecord, ControlOutcome, DenyReason, NearRtRic};
pub use ran_model::{Cell, CellId, CellRole, EnergyControl, EnergyState, Ran, RanError, SectorId, Topology, UeId};
pub use sim_engine::{replay, run, Event, EventLog, Record, RunOutput, Scenario, SimError};
pub use traffic::{DiurnalConfig, TrafficTrace};
pub use ts_xapp::{TsXapp, XappConfig};
