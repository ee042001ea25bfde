//! Spatiotemporal episodic memory.
//!
//! Events are never deleted. Retrieval scores every stored event on spatial
//! proximity, content relevance and access recency, min-max scales each
//! criterion across the store, averages the three and returns the top `k`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{cosine, Feature};

pub type EventId = u64;
pub type Location = [f64; 3];

#[derive(Debug, Error)]
pub enum EpisodicError {
    #[error("event text must not be empty")]
    EmptyText,
    #[error("query time {query} precedes last access {last_accessed} of event {id}")]
    NonMonotoneClock {
        id: EventId,
        query: f64,
        last_accessed: f64,
    },
    #[error("retrieval config invalid: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed event record on line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub id: EventId,
    pub created_at: f64,
    pub last_accessed: f64,
    pub location: Location,
    pub place: String,
    pub text: String,
    pub text_feature: Feature,
    pub image_feature: Option<Feature>,
}

/// Fields supplied when recording an event.
#[derive(Clone, Debug, PartialEq)]
pub struct NewEvent {
    pub time: f64,
    pub location: Location,
    pub place: String,
    pub text: String,
    pub text_feature: Feature,
    pub image_feature: Option<Feature>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryQuery {
    pub time: f64,
    pub location: Location,
    pub text: String,
    pub text_feature: Feature,
    pub image_feature: Option<Feature>,
    pub k: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    /// Added to the distance in the proximity denominator (m).
    pub epsilon: f64,
    /// Recency decay constant (s).
    pub recency_tau: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            recency_tau: 3600.0,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), EpisodicError> {
        if !(self.epsilon > 0.0) {
            return Err(EpisodicError::Config("epsilon must be positive".into()));
        }
        if !(self.recency_tau > 0.0) {
            return Err(EpisodicError::Config("recency_tau must be positive".into()));
        }
        Ok(())
    }
}

fn dist(a: &Location, b: &Location) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `1 / (|p_e - p_q| + epsilon)`
pub fn proximity(event: &Event, query: &MemoryQuery, cfg: &RetrievalConfig) -> f64 {
    1.0 / (dist(&event.location, &query.location) + cfg.epsilon)
}

/// Mean of text and image cosine; text cosine alone when either side lacks
/// an image feature.
pub fn relevance(event: &Event, query: &MemoryQuery) -> f64 {
    let text = cosine(&event.text_feature, &query.text_feature);
    match (&event.image_feature, &query.image_feature) {
        (Some(ie), Some(iq)) => (text + cosine(ie, iq)) / 2.0,
        _ => text,
    }
}

/// `exp(-(t_q - last_accessed) / tau)`
pub fn recency(event: &Event, query: &MemoryQuery, cfg: &RetrievalConfig) -> Result<f64, EpisodicError> {
    let elapsed = query.time - event.last_accessed;
    if elapsed < 0.0 {
        return Err(EpisodicError::NonMonotoneClock {
            id: event.id,
            query: query.time,
            last_accessed: event.last_accessed,
        });
    }
    Ok((-elapsed / cfg.recency_tau).exp())
}

/// Scale to `[0, 1]`; a constant vector maps to all ones.
pub fn min_max_scale(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return vec![1.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredEvent {
    pub event: Event,
    pub score: f64,
    /// Scaled proximity, relevance and recency.
    pub components: [f64; 3],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodicStore {
    events: Vec<Event>,
}

impl EpisodicStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn get(&self, id: EventId) -> Option<&Event> {
        self.events.get(id as usize)
    }

    /// Store holding exactly `events`, whose ids must be `0..n` in order.
    pub fn from_events(events: Vec<Event>) -> Result<Self, EpisodicError> {
        for (i, e) in events.iter().enumerate() {
            if e.id != i as EventId {
                return Err(EpisodicError::Config(format!("event at position {i} has id {}", e.id)));
            }
        }
        Ok(Self { events })
    }

    pub fn record(&mut self, new: NewEvent) -> Result<EventId, EpisodicError> {
        if new.text.trim().is_empty() {
            return Err(EpisodicError::EmptyText);
        }
        let id = self.events.len() as EventId;
        self.events.push(Event {
            id,
            created_at: new.time,
            last_accessed: new.time,
            location: new.location,
            place: new.place,
            text: new.text,
            text_feature: new.text_feature,
            image_feature: new.image_feature,
        });
        Ok(id)
    }

    /// Score and rank every event without touching access times.
    pub fn rank(&self, query: &MemoryQuery, cfg: &RetrievalConfig) -> Result<Vec<ScoredEvent>, EpisodicError> {
        cfg.validate()?;
        if self.events.is_empty() {
            return Ok(Vec::new());
        }
        let prox: Vec<f64> = self.events.iter().map(|e| proximity(e, query, cfg)).collect();
        let rel: Vec<f64> = self.events.iter().map(|e| relevance(e, query)).collect();
        let rec = self
            .events
            .iter()
            .map(|e| recency(e, query, cfg))
            .collect::<Result<Vec<_>, _>>()?;
        let (prox, rel, rec) = (min_max_scale(&prox), min_max_scale(&rel), min_max_scale(&rec));
        let mut scored: Vec<ScoredEvent> = self
            .events
            .iter()
            .enumerate()
            .map(|(i, e)| ScoredEvent {
                event: e.clone(),
                score: (prox[i] + rel[i] + rec[i]) / 3.0,
                components: [prox[i], rel[i], rec[i]],
            })
            .collect();
        scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.event.id.cmp(&b.event.id)));
        Ok(scored)
    }

    /// Top-`k` retrieval. Access times of the returned events are set to the
    /// query time once the ranking is fixed; the returned copies carry the
    /// pre-retrieval values.
    pub fn retrieve(&mut self, query: &MemoryQuery, cfg: &RetrievalConfig) -> Result<Vec<ScoredEvent>, EpisodicError> {
        let mut ranked = self.rank(query, cfg)?;
        ranked.truncate(query.k.max(1));
        for s in &ranked {
            let e = &mut self.events[s.event.id as usize];
            e.last_accessed = e.last_accessed.max(query.time);
        }
        Ok(ranked)
    }

    /// One JSON record per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), EpisodicError> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, EpisodicError> {
        let mut events = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: Event =
                serde_json::from_str(&line).map_err(|source| EpisodicError::Parse { line: i + 1, source })?;
            events.push(e);
        }
        Ok(Self { events })
    }
}
