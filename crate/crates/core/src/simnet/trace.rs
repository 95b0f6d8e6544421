use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use super::SimConfig;
use crate::crypto::PRF_ID;
use crate::replica::Note;
use crate::types::{BlockId, Message, ReplicaId, Round, Tick};

pub const TRACE_VERSION: u32 = 1;

/// One processed event or one of its outcomes, in processing order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum Record {
    Deliver {
        tick: Tick,
        seq: u64,
        from: ReplicaId,
        to: ReplicaId,
        sent: Tick,
        units: u64,
        summary: String,
        msg: Message,
    },
    Timer {
        tick: Tick,
        seq: u64,
        replica: ReplicaId,
        round: Round,
    },
    Commit {
        tick: Tick,
        seq: u64,
        replica: ReplicaId,
        blocks: Vec<BlockId>,
    },
    Note {
        tick: Tick,
        seq: u64,
        replica: ReplicaId,
        note: Note,
    },
}

impl Record {
    pub fn tick(&self) -> Tick {
        match self {
            Record::Deliver { tick, .. }
            | Record::Timer { tick, .. }
            | Record::Commit { tick, .. }
            | Record::Note { tick, .. } => *tick,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: String,
    pub version: u32,
    pub prf: String,
    pub config: SimConfig,
}

impl Header {
    pub fn new(config: SimConfig) -> Self {
        Header { kind: "header".into(), version: TRACE_VERSION, prf: PRF_ID.into(), config }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Footer {
    pub kind: String,
    pub digest: String,
    pub records: usize,
    /// Honest-to-honest deliveries still queued when the horizon was hit.
    pub undelivered: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub header: Header,
    pub records: Vec<Record>,
    pub footer: Footer,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {err}")]
    Parse { line: usize, err: serde_json::Error },
    #[error("malformed trace: {0}")]
    Malformed(String),
}

/// Streams records into a running SHA-256 over their JSON lines.
pub(crate) struct TraceBuilder {
    header: Header,
    records: Vec<Record>,
    hasher: Sha256,
}

impl TraceBuilder {
    pub(crate) fn new(config: SimConfig) -> Self {
        let header = Header::new(config);
        let mut hasher = Sha256::new();
        hash_line(&mut hasher, &header);
        TraceBuilder { header, records: Vec::new(), hasher }
    }

    pub(crate) fn push(&mut self, r: Record) {
        hash_line(&mut self.hasher, &r);
        self.records.push(r);
    }

    pub(crate) fn finish(self, undelivered: usize) -> Trace {
        let digest = hex::encode(self.hasher.finalize());
        let footer = Footer { kind: "footer".into(), digest, records: self.records.len(), undelivered };
        Trace { header: self.header, records: self.records, footer }
    }
}

fn hash_line<T: Serialize>(h: &mut Sha256, v: &T) {
    let line = serde_json::to_vec(v).expect("trace records serialize");
    h.update(&line);
    h.update(b"\n");
}

impl Trace {
    pub fn digest(&self) -> &str {
        &self.footer.digest
    }

    pub fn config(&self) -> &SimConfig {
        &self.header.config
    }

    /// Digest of the header and records as they stand now.
    pub fn recompute_digest(&self) -> String {
        let mut h = Sha256::new();
        hash_line(&mut h, &self.header);
        for r in &self.records {
            hash_line(&mut h, r);
        }
        hex::encode(h.finalize())
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut w, &self.footer)?;
        w.write_all(b"\n")?;
        w.flush()
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Trace, TraceError> {
        let mut lines = r.lines().enumerate().filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
        let parse = |line: usize, s: &str| -> Result<serde_json::Value, TraceError> {
            serde_json::from_str(s).map_err(|err| TraceError::Parse { line: line + 1, err })
        };
        let (i, first) = lines.next().ok_or_else(|| TraceError::Malformed("empty file".into()))?;
        let first = first?;
        let header: Header =
            serde_json::from_value(parse(i, &first)?).map_err(|err| TraceError::Parse { line: i + 1, err })?;
        if header.kind != "header" {
            return Err(TraceError::Malformed("first line is not a header".into()));
        }
        let mut records = Vec::new();
        let mut footer = None;
        for (i, line) in lines {
            let line = line?;
            if footer.is_some() {
                return Err(TraceError::Malformed(format!("line {}: data after footer", i + 1)));
            }
            let v = parse(i, &line)?;
            if v.get("kind").and_then(|k| k.as_str()) == Some("footer") {
                footer = Some(serde_json::from_value(v).map_err(|err| TraceError::Parse { line: i + 1, err })?);
            } else {
                records.push(serde_json::from_value(v).map_err(|err| TraceError::Parse { line: i + 1, err })?);
            }
        }
        let footer: Footer = footer.ok_or_else(|| TraceError::Malformed("missing footer".into()))?;
        Ok(Trace { header, records, footer })
    }

    /// Delivery tick of every recorded message, keyed by send sequence number.
    pub fn delivery_schedule(&self) -> HashMap<u64, Tick> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Record::Deliver { seq, tick, .. } => Some((*seq, *tick)),
                _ => None,
            })
            .collect()
    }
}
