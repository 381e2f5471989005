//! Append-only JSON-lines campaign log.
//!
//! Every line is one JSON object tagged by `"record"`: a single `campaign`
//! header first, `layer` records announcing each scanned layer, and one
//! `trial` record per injection. Fields this version does not know are kept
//! in `extra` and written back unchanged.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::classify::{FaultObservation, NominalProfile};
use crate::error::{Error, Result};
use crate::geometry::ProbeCoordinate;
use crate::pulse::PulseParameters;

use super::config::CampaignConfig;
use super::plan::Layer;

pub const LOG_FORMAT: &str = "emfiscan-log/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignHeader {
    pub format: String,
    pub campaign_id: String,
    pub config_hash: String,
    pub config: CampaignConfig,
    pub nominal: NominalProfile,
    pub parameter_points: Vec<PulseParameters>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    #[serde(flatten)]
    pub layer: Layer,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// Position in the log, from 0, counting trials only.
    pub seq: u64,
    pub campaign_id: String,
    pub config_hash: String,
    pub layer: u32,
    pub level: u32,
    pub coordinate_index: u64,
    pub param_index: usize,
    pub trial_index: u32,
    pub trial_seed: u64,
    pub coordinate: ProbeCoordinate,
    pub parameters: PulseParameters,
    pub output_lines: Vec<String>,
    pub responded: bool,
    pub duration_ms: u64,
    pub classification: FaultObservation,
    pub error_count: u64,
    /// Wall-clock time the record was written, ms since the Unix epoch.
    pub timestamp_ms: u64,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LogEntry {
    Campaign(Box<CampaignHeader>),
    Layer(LayerRecord),
    Trial(Box<TrialRecord>),
}

impl LogEntry {
    fn tag(&self) -> &'static str {
        match self {
            LogEntry::Campaign(_) => "campaign",
            LogEntry::Layer(_) => "layer",
            LogEntry::Trial(_) => "trial",
        }
    }

    /// One JSON object, no trailing newline.
    pub fn to_json_line(&self) -> String {
        let value = match self {
            LogEntry::Campaign(h) => serde_json::to_value(h),
            LogEntry::Layer(l) => serde_json::to_value(l),
            LogEntry::Trial(t) => serde_json::to_value(t),
        }
        .expect("log records serialize");
        let Value::Object(fields) = value else { unreachable!("records are objects") };
        let mut tagged = Map::with_capacity(fields.len() + 1);
        tagged.insert("record".into(), Value::String(self.tag().into()));
        tagged.extend(fields);
        serde_json::to_string(&Value::Object(tagged)).expect("json value serializes")
    }

    pub fn parse(line: &str) -> Result<LogEntry> {
        let mut value: Value = serde_json::from_str(line)?;
        let tag = match value.as_object_mut().and_then(|o| o.remove("record")) {
            Some(Value::String(s)) => s,
            _ => return Err(Error::domain("log line has no \"record\" tag")),
        };
        Ok(match tag.as_str() {
            "campaign" => LogEntry::Campaign(Box::new(serde_json::from_value(value)?)),
            "layer" => LogEntry::Layer(serde_json::from_value(value)?),
            "trial" => LogEntry::Trial(Box::new(serde_json::from_value(value)?)),
            other => return Err(Error::domain(format!("unknown record kind {other:?}"))),
        })
    }
}

/// Destination for log entries, in order.
pub trait LogSink {
    fn append(&mut self, entry: &LogEntry) -> io::Result<()>;

    /// Makes everything appended so far durable.
    fn flush(&mut self) -> io::Result<()>;
}

/// Keeps entries in memory.
#[derive(Debug, Default, Clone)]
pub struct MemoryLog {
    pub entries: Vec<LogEntry>,
}

impl MemoryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn trials(&self) -> impl Iterator<Item = &TrialRecord> {
        self.entries.iter().filter_map(|e| match e {
            LogEntry::Trial(t) => Some(t.as_ref()),
            _ => None,
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.to_json_line());
            out.push('\n');
        }
        out
    }
}

impl LogSink for MemoryLog {
    fn append(&mut self, entry: &LogEntry) -> io::Result<()> {
        self.entries.push(entry.clone());
        Ok(())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Writes JSON lines to any writer.
#[derive(Debug)]
pub struct JsonlWriter<W: Write> {
    inner: W,
}

impl<W: Write> JsonlWriter<W> {
    pub fn new(inner: W) -> Self {
        JsonlWriter { inner }
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

impl<W: Write> LogSink for JsonlWriter<W> {
    fn append(&mut self, entry: &LogEntry) -> io::Result<()> {
        let mut line = entry.to_json_line();
        line.push('\n');
        self.inner.write_all(line.as_bytes())
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// Log file that syncs to disk on every flush.
#[derive(Debug)]
pub struct FileLog {
    path: PathBuf,
    writer: BufWriter<File>,
}

impl FileLog {
    /// Creates (or truncates) the log at `path`.
    pub fn create(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new().create(true).write(true).truncate(true).open(&path)?;
        Ok(FileLog { path, writer: BufWriter::new(file) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl LogSink for FileLog {
    fn append(&mut self, entry: &LogEntry) -> io::Result<()> {
        let mut line = entry.to_json_line();
        line.push('\n');
        self.writer.write_all(line.as_bytes())
    }

    fn flush(&mut self) -> io::Result<()> {
        self.writer.flush()?;
        self.writer.get_ref().sync_data()
    }
}
