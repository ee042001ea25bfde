//! Line-delimited JSON traces: one header, stage markers, and one record per
//! agent per tick.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::action::{Action, Hand};
use crate::geometry::Point2;

use super::config::WorldConfig;
use super::world::SentMessage;
use super::SimError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeldItem {
    pub hand: Hand,
    pub object: String,
    pub tag: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub stage: u8,
    pub time: f64,
    pub agent: String,
    /// State after this tick's actions.
    pub position: Point2,
    pub yaw: f64,
    pub place: Option<String>,
    pub vehicle: Option<String>,
    pub cash: f64,
    pub held: Vec<HeldItem>,
    pub triggered: bool,
    pub reaction: Option<String>,
    pub actions: Vec<Action>,
    pub messages: Vec<SentMessage>,
    pub heard: usize,
    pub new_objects: usize,
    pub episodic: usize,
    pub semantic: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<Point2>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceLine {
    Header { scenario: Box<WorldConfig> },
    Stage { stage: u8, start: f64 },
    Tick(Box<TickRecord>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub scenario: WorldConfig,
    /// `(stage, absolute start time)` in order.
    pub stages: Vec<(u8, f64)>,
    pub ticks: Vec<TickRecord>,
}

impl Trace {
    pub fn new(scenario: WorldConfig) -> Self {
        Self {
            scenario,
            stages: Vec::new(),
            ticks: Vec::new(),
        }
    }

    pub fn stage_start(&self, stage: u8) -> Option<f64> {
        self.stages.iter().find(|(s, _)| *s == stage).map(|(_, t)| *t)
    }

    /// The last stage present: stage two when it ran, stage one otherwise.
    pub fn scored_stage(&self) -> Option<(u8, f64)> {
        self.stages.last().copied()
    }

    pub fn stage_ticks(&self, stage: u8) -> impl Iterator<Item = &TickRecord> {
        self.ticks.iter().filter(move |t| t.stage == stage)
    }

    pub fn read(path: &Path) -> Result<Self, SimError> {
        let file = std::fs::File::open(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Self::from_reader(BufReader::new(file))
    }

    pub fn from_reader(reader: impl BufRead) -> Result<Self, SimError> {
        let mut trace: Option<Trace> = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| SimError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TraceLine =
                serde_json::from_str(&line).map_err(|e| SimError::Trace(format!("line {}: {e}", i + 1)))?;
            match (parsed, trace.as_mut()) {
                (TraceLine::Header { scenario }, None) => trace = Some(Trace::new(*scenario)),
                (TraceLine::Header { .. }, Some(_)) => {
                    return Err(SimError::Trace(format!("line {}: second header", i + 1)))
                }
                (_, None) => return Err(SimError::Trace("trace does not start with a header".into())),
                (TraceLine::Stage { stage, start }, Some(t)) => t.stages.push((stage, start)),
                (TraceLine::Tick(r), Some(t)) => t.ticks.push(*r),
            }
        }
        trace.ok_or_else(|| SimError::Trace("empty trace".into()))
    }
}

/// Streaming trace writer.
pub struct TraceWriter<W: Write> {
    out: BufWriter<W>,
}

impl TraceWriter<std::fs::File> {
    pub fn create(path: &Path) -> Result<Self, SimError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| SimError::Io(e.to_string()))?;
        }
        let f = std::fs::File::create(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self::new(f))
    }
}

impl<W: Write> TraceWriter<W> {
    pub fn new(w: W) -> Self {
        Self { out: BufWriter::new(w) }
    }

    pub fn write(&mut self, line: &TraceLine) -> Result<(), SimError> {
        serde_json::to_writer(&mut self.out, line).map_err(|e| SimError::Io(e.to_string()))?;
        self.out.write_all(b"\n").map_err(|e| SimError::Io(e.to_string()))
    }

    pub fn ticks(&mut self, records: &[TickRecord]) -> Result<(), SimError> {
        for r in records {
            self.write(&TraceLine::Tick(Box::new(r.clone())))?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), SimError> {
        self.out.flush().map_err(|e| SimError::Io(e.to_string()))
    }
}
