//! Append-only event log: one `key=value` record per line.
//!
//! Every record starts with `slot=`, `source=` and `kind=`; the remaining
//! fields depend on the kind. Values never contain whitespace.

use std::fmt;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecordKind {
    RunStart,
    MonitoringReport,
    DriftAlarm,
    KpiRecovered,
    ActionIssued,
    ActionFailed,
    ModelActivated,
    FallbackOrdered,
    StateTransition,
    RunEnd,
}

impl RecordKind {
    pub const ALL: [RecordKind; 10] = [
        RecordKind::RunStart,
        RecordKind::MonitoringReport,
        RecordKind::DriftAlarm,
        RecordKind::KpiRecovered,
        RecordKind::ActionIssued,
        RecordKind::ActionFailed,
        RecordKind::ModelActivated,
        RecordKind::FallbackOrdered,
        RecordKind::StateTransition,
        RecordKind::RunEnd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::RunStart => "RunStart",
            RecordKind::MonitoringReport => "MonitoringReport",
            RecordKind::DriftAlarm => "DriftAlarm",
            RecordKind::KpiRecovered => "KpiRecovered",
            RecordKind::ActionIssued => "ActionIssued",
            RecordKind::ActionFailed => "ActionFailed",
            RecordKind::ModelActivated => "ModelActivated",
            RecordKind::FallbackOrdered => "FallbackOrdered",
            RecordKind::StateTransition => "StateTransition",
            RecordKind::RunEnd => "RunEnd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub slot: u64,
    /// Emitting module: `monitor`, `controller`, `agent`, `operator` or `sim`.
    pub source: String,
    pub kind: RecordKind,
    pub fields: Vec<(String, String)>,
}

impl EventRecord {
    pub fn new(slot: u64, source: &str, kind: RecordKind) -> Self {
        EventRecord { slot, source: source.to_string(), kind, fields: Vec::new() }
    }

    pub fn with(mut self, key: &str, value: impl fmt::Display) -> Self {
        let v = value.to_string();
        self.fields.push((key.to_string(), if v.is_empty() { "-".into() } else { v.replace(char::is_whitespace, "_") }));
        self
    }

    pub fn field(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn parse(line: &str) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("event record {line:?}: {m}"));
        let mut parts = line.split_whitespace().map(|p| p.split_once('=').ok_or_else(|| bad("field without '='")));
        let mut head = |name: &str| -> Result<String> {
            match parts.next() {
                Some(Ok((k, v))) if k == name => Ok(v.to_string()),
                Some(Err(e)) => Err(e),
                _ => Err(bad(&format!("expected `{name}=`"))),
            }
        };
        let slot = head("slot")?.parse().map_err(|_| bad("bad slot"))?;
        let source = head("source")?;
        let kind = RecordKind::parse(&head("kind")?).ok_or_else(|| bad("unknown kind"))?;
        let fields = parts.map(|p| p.map(|(k, v)| (k.to_string(), v.to_string()))).collect::<Result<_>>()?;
        Ok(EventRecord { slot, source, kind, fields })
    }
}

impl fmt::Display for EventRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "slot={} source={} kind={}", self.slot, self.source, self.kind)?;
        for (k, v) in &self.fields {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub records: Vec<EventRecord>,
}

impl EventLog {
    pub fn push(&mut self, record: EventRecord) {
        debug_assert!(self.records.last().is_none_or(|r| r.slot <= record.slot));
        self.records.push(record);
    }

    pub fn of_kind(&self, kind: RecordKind) -> impl Iterator<Item = &EventRecord> {
        self.records.iter().filter(move |r| r.kind == kind)
    }

    pub fn to_text(&self) -> String {
        self.records.iter().map(|r| format!("{r}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let records = text.lines().filter(|l| !l.trim().is_empty()).map(EventRecord::parse).collect::<Result<_>>()?;
        Ok(EventLog { records })
    }
}
