//! Event log records: every emitted message plus engine-side events, one
//! JSON object per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::es_rapp::NotificationMode;
use crate::messages::Message;
use crate::near_rt_ric::AuditRecord;
use crate::ran_model::{CellId, SectorId, UeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeReason {
    Initial,
    Decision,
    Scripted,
    DrainTimeout,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RrcCount {
    pub cell: CellId,
    pub rrc_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    RunStart {
        ts: u64,
        scenario: String,
        mode: NotificationMode,
        seed: u64,
        es_enabled: bool,
        intervals: usize,
        granularity_s: u64,
    },
    /// One admission attempt.
    UeArrival {
        ts: u64,
        ue: UeId,
        camped: CellId,
        cell: Option<CellId>,
        admitted: bool,
    },
    UeDeparture {
        ts: u64,
        ue: UeId,
        cell: Option<CellId>,
    },
    Audit(AuditRecord),
    Rejected {
        ts: u64,
        source: String,
        detail: String,
    },
    EsMode {
        ts: u64,
        sector: SectorId,
        awake_capacity_count: usize,
        reason: ModeReason,
    },
    SectorLoad {
        ts: u64,
        sector: SectorId,
        load: f64,
        predicted: Option<f64>,
        awake_capacity_count: usize,
    },
    DrainTimeout {
        ts: u64,
        cell: CellId,
    },
    Energy {
        ts: u64,
        capacity_j: f64,
        coverage_j: f64,
        baseline_capacity_j: f64,
        baseline_coverage_j: f64,
    },
    /// RRC counts that changed since the previous snapshot.
    Snapshot {
        ts: u64,
        cells: Vec<RrcCount>,
    },
    RunEnd {
        ts: u64,
    },
}

impl Event {
    pub fn ts(&self) -> u64 {
        match self {
            Event::Audit(a) => a.ts,
            Event::RunStart { ts, .. }
            | Event::UeArrival { ts, .. }
            | Event::UeDeparture { ts, .. }
            | Event::Rejected { ts, .. }
            | Event::EsMode { ts, .. }
            | Event::SectorLoad { ts, .. }
            | Event::DrainTimeout { ts, .. }
            | Event::Energy { ts, .. }
            | Event::Snapshot { ts, .. }
            | Event::RunEnd { ts } => *ts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Record {
    Message(Message),
    Event(Event),
}

impl Record {
    pub fn ts(&self) -> u64 {
        match self {
            Record::Message(m) => m.ts(),
            Record::Event(e) => e.ts(),
        }
    }

    fn parse(line: &str) -> Result<Record, String> {
        let message_err = match serde_json::from_str::<Message>(line) {
            Ok(m) => {
                m.validate()?;
                return Ok(Record::Message(m));
            }
            Err(e) => e,
        };
        serde_json::from_str::<Event>(line)
            .map(Record::Event)
            .map_err(|e| format!("{e} (as message: {message_err})"))
    }
}

impl From<Message> for Record {
    fn from(m: Message) -> Self {
        Record::Message(m)
    }
}

impl From<Event> for Record {
    fn from(e: Event) -> Self {
        Record::Event(e)
    }
}

/// Ordered records of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub records: Vec<Record>,
}

impl EventLog {
    pub fn push(&mut self, record: impl Into<Record>) {
        self.records.push(record.into());
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.records.iter().filter_map(|r| match r {
            Record::Event(e) => Some(e),
            Record::Message(_) => None,
        })
    }

    pub fn messages(&self) -> impl Iterator<Item = &Message> {
        self.records.iter().filter_map(|r| match r {
            Record::Message(m) => Some(m),
            Record::Event(_) => None,
        })
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    /// Parses a JSON-lines log. The log must end with `run_end` and its
    /// timestamps must never decrease.
    pub fn read_jsonl(r: impl BufRead) -> Result<EventLog, SimError> {
        let mut log = EventLog::default();
        let mut last_ts = 0;
        for (idx, line) in r.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| SimError::CorruptLog {
                line: lineno,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let record = Record::parse(&line).map_err(|message| SimError::CorruptLog { line: lineno, message })?;
            if record.ts() < last_ts {
                return Err(SimError::CorruptLog {
                    line: lineno,
                    message: format!("timestamp {} after {last_ts}", record.ts()),
                });
            }
            last_ts = record.ts();
            log.records.push(record);
        }
        match log.records.last() {
            Some(Record::Event(Event::RunEnd { .. })) => Ok(log),
            _ => Err(SimError::CorruptLog {
                line: log.records.len(),
                message: "log does not end with run_end".into(),
            }),
        }
    }

    pub fn from_jsonl(text: &str) -> Result<EventLog, SimError> {
        Self::read_jsonl(text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::messages::KpmReport;

    fn sample() -> EventLog {
        let mut log = EventLog::default();
        log.push(Event::RunStart {
            ts: 0,
            scenario: "t".into(),
            mode: NotificationMode::A1,
            seed: 1,
            es_enabled: true,
            intervals: 1,
            granularity_s: 900,
        });
        log.push(Message::from(KpmReport {
            ts: 0,
            cell: CellId::new(0, 0, 1),
            prb_utilization: 0.1 + 0.2,
            rrc_count: 3,
        }));
        log.push(Event::SectorLoad {
            ts: 0,
            sector: SectorId { site: 0, sector: 0 },
            load: 1.0 / 3.0,
            predicted: None,
            awake_capacity_count: 2,
        });
        log.push(Event::RunEnd { ts: 0 });
        log
    }

    #[test]
    fn round_trips_exactly() {
        let log = sample();
        let text = log.to_jsonl();
        let back = EventLog::from_jsonl(&text).unwrap();
        assert_eq!(back, log);
        assert_eq!(back.to_jsonl(), text);
    }

    #[test]
    fn truncated_log_is_corrupt() {
        let text = sample().to_jsonl();
        let cut: Vec<&str> = text.lines().take(3).collect();
        assert!(matches!(
            EventLog::from_jsonl(&cut.join("\n")),
            Err(SimError::CorruptLog { .. })
        ));
        let half = &text[..text.len() / 2];
        assert!(matches!(EventLog::from_jsonl(half), Err(SimError::CorruptLog { .. })));
    }

    #[test]
    fn decreasing_timestamps_rejected() {
        let mut log = sample();
        log.records.insert(1, Record::Event(Event::RunEnd { ts: 5 }));
        assert!(EventLog::from_jsonl(&log.to_jsonl()).is_err());
    }
}
