//! Interval-stepped discrete-event engine. Each interval applies traffic,
//! emits load reports, steps the rApp, lets controls settle over bounded
//! sub-epochs, integrates energy and snapshots attachment.

mod log;
mod scenario;

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use log::{Event, EventLog, ModeReason, Record, RrcCount};
pub use scenario::{Scenario, ScenarioFile, TraceSource, UeConfig};

use crate::es_rapp::{EsError, EsRapp, NotificationMode, SectorPlan};
use crate::messages::{KpmReport, Message, NodeCellInfo, RcReport, RcReportKind, RsrpEntry, UeEvent};
use crate::metrics::{compute_metrics, MetricsReport};
use crate::near_rt_ric::{AppId, MessageKind, NearRtRic, Subscription};
use crate::ran_model::{CellId, CellRole, Position, QosClass, Ran, RanError, Ue, UeId};
use crate::traffic::{stream_seed, ue_events, TraceError, TrafficEvent};
use crate::ts_xapp::TsXapp;

/// Strongest cells carried in one measurement report.
pub const MAX_REPORTED_CELLS: usize = 8;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Ran(#[from] RanError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Rapp(#[from] EsError),
    #[error("controls did not settle within {budget} sub-epochs at ts {ts}: {pending} messages queued")]
    NonQuiescence { ts: u64, budget: usize, pending: usize },
    #[error("corrupt log at line {line}: {message}")]
    CorruptLog { line: usize, message: String },
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: EventLog,
    pub metrics: MetricsReport,
    /// Serving cell of every UE still attached at the end of the run.
    pub final_attachment: BTreeMap<UeId, CellId>,
}

/// Sender identity; batches are delivered in (ts, sender) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Endpoint {
    Node,
    Ric,
    App(AppId),
}

struct SectorGeometry {
    origin: Position,
    azimuth_deg: f64,
    half_width_deg: f64,
}

struct Engine<'a> {
    sc: &'a Scenario,
    ran: Ran,
    ric: NearRtRic,
    xapp: TsXapp,
    rapp: EsRapp,
    queue: VecDeque<(Endpoint, Message)>,
    log: Option<EventLog>,
    next_ue: UeId,
    /// Live UEs per originating carrier, oldest first.
    population: BTreeMap<CellId, VecDeque<UeId>>,
    reported: BTreeMap<CellId, (usize, u32)>,
    snapshot: BTreeMap<CellId, usize>,
    geometry: BTreeMap<CellId, SectorGeometry>,
    energy: Vec<(f64, f64)>,
}

impl<'a> Engine<'a> {
    fn new(sc: &'a Scenario, es_enabled: bool, logging: bool) -> Result<Self, SimError> {
        let ran = Ran::new(&sc.topology);
        let mut ric = NearRtRic::new();
        let mut ts_kinds = vec![
            MessageKind::KpmReport,
            MessageKind::RcMeasurement,
            MessageKind::RcNodeInfo,
            MessageKind::RcUeInfo,
            MessageKind::PolicyChange,
        ];
        let mut es_kinds = vec![MessageKind::KpmReport];
        if sc.mode == NotificationMode::Ccc {
            ts_kinds.push(MessageKind::CccIndication);
            es_kinds.push(MessageKind::CccIndication);
        }
        let sub = |app, kinds| Subscription::new(app, kinds, None).expect("non-empty kinds");
        ric.subscribe(sub(AppId::TS_XAPP, ts_kinds));
        ric.subscribe(sub(AppId::ES_RAPP, es_kinds));
        let rapp = EsRapp::new(
            sc.rapp.clone(),
            sc.mode,
            es_enabled,
            sc.trace.granularity_s(),
            SectorPlan::from_topology(&sc.topology),
            sc.commands.clone(),
        )?;
        let mut geometry = BTreeMap::new();
        for (site_idx, site) in sc.topology.sites.iter().enumerate() {
            let n = site.sectors.len() as f64;
            for (sector_idx, sector) in site.sectors.iter().enumerate() {
                let half = (180.0 / n).min(sc.topology.radio.half_beamwidth_deg) * 0.95;
                for band in &sector.bands {
                    geometry.insert(
                        CellId::new(site_idx as u32, sector_idx as u32, *band),
                        SectorGeometry {
                            origin: Position::new(site.x, site.y),
                            azimuth_deg: sector.azimuth_deg,
                            half_width_deg: half,
                        },
                    );
                }
            }
        }
        Ok(Self {
            sc,
            ran,
            ric,
            xapp: TsXapp::new(sc.xapp.clone()),
            rapp,
            queue: VecDeque::new(),
            log: logging.then(EventLog::default),
            next_ue: 0,
            population: BTreeMap::new(),
            reported: BTreeMap::new(),
            snapshot: BTreeMap::new(),
            geometry,
            energy: Vec::new(),
        })
    }

    fn record(&mut self, r: impl Into<Record>) {
        if let Some(log) = &mut self.log {
            log.push(r);
        }
    }

    fn flush_rapp_events(&mut self) {
        for e in self.rapp.take_events() {
            self.record(e);
        }
    }

    fn enqueue(&mut self, from: Endpoint, msg: Message) {
        self.record(msg.clone());
        self.queue.push_back((from, msg));
    }

    fn send_now(&mut self, from: Endpoint, msg: Message) {
        self.record(msg.clone());
        self.dispatch(from, msg);
    }

    fn dispatch(&mut self, _from: Endpoint, msg: Message) {
        let ts = msg.ts();
        match &msg {
            Message::KpmReport(_) | Message::RcReport(_) | Message::CccIndication(_) | Message::PolicyChange(_) => {
                for app in self.ric.route(&msg) {
                    match app {
                        AppId::TS_XAPP => {
                            for cmd in self.xapp.handle(&msg) {
                                self.enqueue(Endpoint::App(app), cmd.into());
                            }
                        }
                        AppId::ES_RAPP => {
                            for out in self.rapp.handle(&msg) {
                                self.enqueue(Endpoint::App(app), out);
                            }
                        }
                        _ => {}
                    }
                }
            }
            Message::HandoverCommand(cmd) => {
                let outcome = self.ric.submit_control(*cmd, &mut self.ran);
                let audit = self.ric.audit_log().last().expect("just audited").clone();
                self.record(Event::Audit(audit));
                if outcome.is_success() {
                    let ue = self.ran.ue(cmd.ue).expect("handed over UE exists");
                    let info = ue_info(ts, ue, UeEvent::HandedOver, Some(cmd.target));
                    self.enqueue(Endpoint::Node, info);
                }
                self.xapp.on_outcome(cmd, &outcome);
            }
            Message::A1PolicyPut(put) => {
                let result = self.ric.a1_put(put.policy.clone(), &self.ran, ts);
                let result = match result {
                    Ok(change) => {
                        self.enqueue(Endpoint::Ric, change.into());
                        Ok(())
                    }
                    Err(e) => Err(e.to_string()),
                };
                self.rapp_result(&msg, result);
            }
            Message::A1PolicyDelete(del) => {
                let result = match self.ric.a1_delete(&del.policy_id, ts) {
                    Ok(change) => {
                        self.enqueue(Endpoint::Ric, change.into());
                        Ok(())
                    }
                    Err(e) => Err(e.to_string()),
                };
                self.rapp_result(&msg, result);
            }
            Message::O1Write(write) => {
                let result = match self.ran.apply_o1(write) {
                    Ok(inds) => {
                        for ind in inds {
                            self.enqueue(Endpoint::Node, ind.into());
                        }
                        Ok(())
                    }
                    Err(e) => Err(e.to_string()),
                };
                self.rapp_result(&msg, result);
            }
            Message::CccControl(ctl) => {
                let result = match self.ran.apply_energy_control(ctl.cell, ctl.control, ts) {
                    Ok(ind) => {
                        self.enqueue(Endpoint::Node, ind.into());
                        Ok(())
                    }
                    Err(e) => Err(e.to_string()),
                };
                self.rapp_result(&msg, result);
            }
        }
        self.flush_rapp_events();
    }

    fn rapp_result(&mut self, sent: &Message, result: Result<(), String>) {
        if let Err(detail) = &result {
            self.record(Event::Rejected {
                ts: sent.ts(),
                source: "platform".into(),
                detail: detail.clone(),
            });
        }
        for out in self.rapp.on_result(sent, result) {
            self.enqueue(Endpoint::App(AppId::ES_RAPP), out);
        }
    }

    fn start(&mut self) {
        let ts = self.sc.trace.timestamp(0).unwrap_or(0);
        self.record(Event::RunStart {
            ts,
            scenario: self.sc.name.clone(),
            mode: self.sc.mode,
            seed: self.sc.seed,
            es_enabled: self.sc.es_enabled,
            intervals: self.sc.duration_intervals,
            granularity_s: self.sc.trace.granularity_s(),
        });
        let cells = self
            .ran
            .cells()
            .map(|c| NodeCellInfo {
                cell: c.id,
                cgi: c.cgi.clone(),
                pci: c.pci,
                role: c.role,
                prb_capacity: c.prb_capacity,
            })
            .collect();
        let info = RcReport {
            ts,
            report: RcReportKind::NodeInfo { cells },
        };
        self.send_now(Endpoint::Node, info.into());
        self.rapp.start(ts);
        self.flush_rapp_events();
    }

    fn interval(&mut self, index: usize) -> Result<(), SimError> {
        let ts = self.sc.trace.timestamp(index).expect("index within trace");
        self.traffic(ts, index)?;
        self.report_all(ts);
        let out = self.rapp.step(ts, index)?;
        self.flush_rapp_events();
        for m in out {
            self.enqueue(Endpoint::App(AppId::ES_RAPP), m);
        }
        self.settle(ts)?;
        let (capacity_j, coverage_j) = self.ran.interval_energy(self.sc.trace.granularity_s() as f64);
        self.energy.push((capacity_j, coverage_j));
        self.take_snapshot(ts);
        Ok(())
    }

    fn traffic(&mut self, ts: u64, index: usize) -> Result<(), SimError> {
        let demand = self.sc.ue.demand_prb;
        let mut arrivals = Vec::new();
        let cell_ids: Vec<CellId> = self.ran.cells().map(|c| c.id).collect();
        for id in &cell_ids {
            let current = self.population.get(id).map_or(0, VecDeque::len);
            let cell = self.ran.cell(id).expect("known cell");
            for ev in ue_events(&self.sc.trace, index, cell, current, demand) {
                match ev {
                    TrafficEvent::Departure { camped } => self.depart(ts, camped)?,
                    TrafficEvent::Arrival { camped } => arrivals.push(camped),
                }
            }
        }
        for camped in arrivals {
            self.arrive(ts, camped)?;
        }
        Ok(())
    }

    fn depart(&mut self, ts: u64, camped: CellId) -> Result<(), SimError> {
        let Some(ue) = self.population.get_mut(&camped).and_then(VecDeque::pop_front) else {
            return Ok(());
        };
        let entry = self.ran.ue(ue).cloned().expect("live UE");
        let serving = self.ran.remove_ue(ue)?;
        self.send_now(Endpoint::Node, ue_info(ts, &entry, UeEvent::Released, serving));
        self.record(Event::UeDeparture { ts, ue, cell: serving });
        Ok(())
    }

    fn arrive(&mut self, ts: u64, camped: CellId) -> Result<(), SimError> {
        let id = self.next_ue;
        self.next_ue += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(self.sc.seed, id, 1));
        let geo = &self.geometry[&camped];
        let bearing = geo.azimuth_deg + rng.random_range(-geo.half_width_deg..=geo.half_width_deg);
        let distance = rng.random_range(self.sc.ue.min_distance_m..=self.sc.ue.max_distance_m);
        let voice_draw: f64 = rng.random();
        let rad = bearing * PI / 180.0;
        let position = Position::new(geo.origin.x + distance * rad.cos(), geo.origin.y + distance * rad.sin());
        let role = self.ran.cell(&camped).expect("known cell").role;
        let qos = if role == CellRole::Coverage && voice_draw < self.sc.ue.voice_fraction {
            QosClass::Voice
        } else {
            QosClass::Broadband
        };
        let ue = Ue {
            id,
            position,
            demand_prb: self.sc.ue.demand_prb,
            serving: None,
            qos,
            camped,
        };
        self.ran.add_ue(ue.clone())?;
        self.send_now(Endpoint::Node, ue_info(ts, &ue, UeEvent::Setup, Some(camped)));
        let rsrp = self.measurement(id, camped)?;
        if !rsrp.is_empty() {
            let report = RcReport {
                ts,
                report: RcReportKind::MeasurementRsrp { ue: id, rsrp },
            };
            self.send_now(Endpoint::Node, report.into());
        }
        let placed = self
            .xapp
            .place_arrival(id)
            .filter(|cell| self.ran.attach(id, *cell).is_ok());
        match placed {
            Some(cell) => {
                self.population.entry(camped).or_default().push_back(id);
                self.send_now(Endpoint::Node, ue_info(ts, &ue, UeEvent::Attached, Some(cell)));
            }
            None => {
                self.ran.remove_ue(id)?;
                self.send_now(Endpoint::Node, ue_info(ts, &ue, UeEvent::Released, None));
            }
        }
        self.record(Event::UeArrival {
            ts,
            ue: id,
            camped,
            cell: placed,
            admitted: placed.is_some(),
        });
        Ok(())
    }

    /// The strongest visible cells, always including the camped carrier.
    fn measurement(&self, ue: UeId, camped: CellId) -> Result<Vec<RsrpEntry>, SimError> {
        let mut all = self.ran.measure(ue)?;
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut keep: Vec<(CellId, f64)> = all.iter().take(MAX_REPORTED_CELLS).copied().collect();
        if !keep.iter().any(|(c, _)| *c == camped) {
            if let Some(e) = all.iter().find(|(c, _)| *c == camped) {
                keep.push(*e);
            }
        }
        keep.sort_by_key(|(c, _)| *c);
        Ok(keep
            .into_iter()
            .map(|(cell, rsrp_dbm)| RsrpEntry { cell, rsrp_dbm })
            .collect())
    }

    fn kpm(&self, ts: u64, cell: CellId) -> KpmReport {
        let c = self.ran.cell(&cell).expect("known cell");
        KpmReport {
            ts,
            cell,
            prb_utilization: c.utilization().min(1.0),
            rrc_count: c.rrc_count() as u32,
        }
    }

    /// Periodic report of every cell, delivered before the rApp step.
    fn report_all(&mut self, ts: u64) {
        let ids: Vec<CellId> = self.ran.cells().map(|c| c.id).collect();
        for id in ids {
            let k = self.kpm(ts, id);
            self.reported.insert(
                id,
                (k.rrc_count as usize, self.ran.cell(&id).expect("known").prb_used()),
            );
            self.send_now(Endpoint::Node, k.into());
        }
    }

    /// Event-triggered reports for cells whose load changed.
    fn report_changes(&mut self, ts: u64) {
        let changed: Vec<CellId> = self
            .ran
            .cells()
            .filter(|c| self.reported.get(&c.id) != Some(&(c.rrc_count(), c.prb_used())))
            .map(|c| c.id)
            .collect();
        for id in changed {
            let c = self.ran.cell(&id).expect("known cell");
            self.reported.insert(id, (c.rrc_count(), c.prb_used()));
            let k = self.kpm(ts, id);
            self.enqueue(Endpoint::Node, k.into());
        }
    }

    fn settle(&mut self, ts: u64) -> Result<(), SimError> {
        for _ in 0..self.sc.settle_budget {
            let mut batch: Vec<(Endpoint, Message)> = self.queue.drain(..).collect();
            batch.sort_by_key(|(from, m)| (m.ts(), *from));
            for (from, msg) in batch {
                self.dispatch(from, msg);
            }
            for ind in self.ran.progress(ts) {
                self.enqueue(Endpoint::Node, ind.into());
            }
            self.report_changes(ts);
            if self.queue.is_empty() {
                return Ok(());
            }
        }
        Err(SimError::NonQuiescence {
            ts,
            budget: self.sc.settle_budget,
            pending: self.queue.len(),
        })
    }

    fn take_snapshot(&mut self, ts: u64) {
        let mut changed = Vec::new();
        for c in self.ran.cells() {
            let prev = self.snapshot.get(&c.id).copied().unwrap_or(0);
            if prev != c.rrc_count() {
                changed.push(RrcCount {
                    cell: c.id,
                    rrc_count: c.rrc_count(),
                });
            }
        }
        for rc in &changed {
            self.snapshot.insert(rc.cell, rc.rrc_count);
        }
        self.record(Event::Snapshot { ts, cells: changed });
    }

    fn final_attachment(&self) -> BTreeMap<UeId, CellId> {
        self.ran.ues().filter_map(|u| u.serving.map(|s| (u.id, s))).collect()
    }
}

fn ue_info(ts: u64, ue: &Ue, event: UeEvent, cell: Option<CellId>) -> Message {
    RcReport {
        ts,
        report: RcReportKind::UeInfo {
            ue: ue.id,
            event,
            cell,
            demand_prb: ue.demand_prb,
            qos: ue.qos,
        },
    }
    .into()
}

/// Per-interval (capacity, coverage) energy of `sc` with energy saving off.
fn shadow_energy(sc: &Scenario) -> Result<Vec<(f64, f64)>, SimError> {
    let mut engine = Engine::new(sc, false, false)?;
    engine.start();
    for i in 0..sc.duration_intervals {
        engine.interval(i)?;
    }
    Ok(engine.energy)
}

/// Runs a scenario end to end. When energy saving is enabled, the same
/// scenario also runs with it disabled to provide the baseline energy.
pub fn run(sc: &Scenario) -> Result<RunOutput, SimError> {
    sc.validate()?;
    let baseline = if sc.es_enabled { Some(shadow_energy(sc)?) } else { None };
    let mut engine = Engine::new(sc, sc.es_enabled, true)?;
    engine.start();
    for i in 0..sc.duration_intervals {
        engine.interval(i)?;
        let ts = sc.trace.timestamp(i).expect("index within trace");
        let (capacity_j, coverage_j) = engine.energy[i];
        let (baseline_capacity_j, baseline_coverage_j) = baseline.as_ref().map_or((capacity_j, coverage_j), |b| b[i]);
        engine.record(Event::Energy {
            ts,
            capacity_j,
            coverage_j,
            baseline_capacity_j,
            baseline_coverage_j,
        });
    }
    let end = sc
        .trace
        .timestamp(sc.duration_intervals - 1)
        .expect("index within trace");
    engine.record(Event::RunEnd { ts: end });
    let final_attachment = engine.final_attachment();
    let log = engine.log.take().expect("logging enabled");
    let metrics = compute_metrics(&log)?;
    Ok(RunOutput {
        log,
        metrics,
        final_attachment,
    })
}

/// Recomputes the metrics of a run from its log alone.
pub fn replay(log: &EventLog) -> Result<MetricsReport, SimError> {
    compute_metrics(log)
}
