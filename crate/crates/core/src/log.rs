//! Append-only JSON-lines event log.
//!
//! One object per line: `{"seq":N,"ts":"...","kind":"...","payload":{...}}`.
//! Sequence numbers start at 1 and have no gaps; replay refuses anything else.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::auth::ApiKey;
use crate::error::HubError;
use crate::model::{timestamp_serde, FeedId, KeyId, StreamId, Timestamp};
use crate::registry::{ContextRecord, Datastream, EventRecord, Feed, Subscription};

pub const LOG_FILE_NAME: &str = "hub.log";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "kebab-case")]
pub enum LogEvent {
    FeedCreated(Feed),
    StreamCreated {
        feed: FeedId,
        stream: Datastream,
    },
    DatapointAppended {
        feed: FeedId,
        stream: StreamId,
        #[serde(with = "timestamp_serde")]
        at: Timestamp,
        value: String,
    },
    EventRecorded(EventRecord),
    ContextRecorded(ContextRecord),
    KeyIssued(ApiKey),
    KeyRevoked {
        id: KeyId,
    },
    SubscriptionCreated(Subscription),
    SubscriptionRevoked {
        subscriber: KeyId,
        feed: FeedId,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: u64,
    #[serde(with = "timestamp_serde")]
    pub ts: Timestamp,
    #[serde(flatten)]
    pub event: LogEvent,
}

#[derive(Debug)]
enum Sink {
    File { writer: BufWriter<File>, path: PathBuf, sync: bool },
    Memory(Vec<String>),
}

/// Writer side of the log. Not thread-safe on its own; the hub wraps it in
/// a mutex so sequence numbers follow write order.
#[derive(Debug)]
pub struct EventLog {
    next_seq: u64,
    sink: Sink,
}

impl EventLog {
    pub fn in_memory() -> Self {
        EventLog { next_seq: 1, sink: Sink::Memory(Vec::new()) }
    }

    /// Opens (or creates) `hub.log` in `dir` for appending after `last_seq`.
    pub fn open_file(dir: &Path, last_seq: u64, sync: bool) -> Result<Self, HubError> {
        let path = dir.join(LOG_FILE_NAME);
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(EventLog { next_seq: last_seq + 1, sink: Sink::File { writer: BufWriter::new(file), path, sync } })
    }

    /// Continues an in-memory log from previously captured lines.
    pub fn in_memory_from(lines: Vec<String>) -> Self {
        EventLog { next_seq: lines.len() as u64 + 1, sink: Sink::Memory(lines) }
    }

    pub fn last_seq(&self) -> u64 {
        self.next_seq - 1
    }

    /// Persists one record. The sequence number advances only on success.
    pub fn append(&mut self, ts: Timestamp, event: LogEvent) -> Result<LogRecord, HubError> {
        let record = LogRecord { seq: self.next_seq, ts, event };
        let line = serde_json::to_string(&record).map_err(|e| HubError::Storage(e.to_string()))?;
        match &mut self.sink {
            Sink::File { writer, sync, .. } => {
                writer.write_all(line.as_bytes())?;
                writer.write_all(b"\n")?;
                writer.flush()?;
                if *sync {
                    writer.get_ref().sync_data()?;
                }
            }
            Sink::Memory(lines) => lines.push(line),
        }
        self.next_seq += 1;
        Ok(record)
    }

    pub fn flush(&mut self) -> Result<(), HubError> {
        if let Sink::File { writer, .. } = &mut self.sink {
            writer.flush()?;
            writer.get_ref().sync_all()?;
        }
        Ok(())
    }

    /// The lines written so far, for in-memory logs; reads the file otherwise.
    pub fn lines(&mut self) -> Result<Vec<String>, HubError> {
        match &mut self.sink {
            Sink::Memory(lines) => Ok(lines.clone()),
            Sink::File { writer, path, .. } => {
                writer.flush()?;
                let file = File::open(path)?;
                BufReader::new(file).lines().collect::<Result<_, _>>().map_err(HubError::from)
            }
        }
    }
}

/// Parses and sequence-checks log lines.
pub fn parse_records<I, S>(lines: I) -> Result<Vec<LogRecord>, HubError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out = Vec::new();
    for (idx, line) in lines.into_iter().enumerate() {
        let line = line.as_ref();
        let lineno = idx + 1;
        let record: LogRecord = serde_json::from_str(line)
            .map_err(|e| HubError::CorruptLog(format!("line {lineno}: {e}")))?;
        let expected = out.len() as u64 + 1;
        if record.seq != expected {
            return Err(HubError::CorruptLog(format!("line {lineno}: seq {} where {expected} was expected", record.seq)));
        }
        out.push(record);
    }
    Ok(out)
}

/// Reads `hub.log` from `dir`; a missing file is an empty log.
pub fn read_log_file(dir: &Path) -> Result<Vec<LogRecord>, HubError> {
    let path = dir.join(LOG_FILE_NAME);
    let file = match File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>()?;
    parse_records(lines)
}
