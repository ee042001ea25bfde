//! Evaluation metrics, computed from traces alone.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::clock::day_start;

use super::config::{BuildingKind, EvaluationConfig, GroupTask};
use super::trace::{TickRecord, Trace};
use super::SimError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub show_up_rate: Option<f64>,
    pub completion_rate: Option<f64>,
    pub conversation_count: usize,
    /// Agents seen at a party place during the window.
    pub attendance: Vec<String>,
    /// Fulfilled item tags per group.
    pub fulfilled: BTreeMap<String, Vec<String>>,
    pub group_rates: BTreeMap<String, f64>,
}

/// Distinct conversations with at least one message sent by or addressed to
/// one of `agents`.
pub fn conversation_count<'a>(ticks: impl IntoIterator<Item = &'a TickRecord>, agents: &BTreeSet<String>) -> usize {
    let mut ids = BTreeSet::new();
    for t in ticks {
        for m in &t.messages {
            if agents.contains(&t.agent) || m.to.iter().any(|a| agents.contains(a)) {
                ids.insert(m.conversation.clone());
            }
        }
    }
    ids.len()
}

fn span(ticks: &[&TickRecord]) -> Option<(f64, f64)> {
    let lo = ticks.iter().map(|t| t.time).min_by(f64::total_cmp)?;
    let hi = ticks.iter().map(|t| t.time).max_by(f64::total_cmp)?;
    Some((lo, hi))
}

/// Share of all agents present at any party place at any tick within the
/// absolute window `[start, end]`. Each agent counts once.
pub fn score_influence_battle(
    trace: &Trace,
    party_places: &[String],
    window: (f64, f64),
    organizers: &BTreeSet<String>,
) -> Result<EvalResult, SimError> {
    let (stage, _) = trace
        .scored_stage()
        .ok_or_else(|| SimError::Input("trace has no stages".into()))?;
    let ticks: Vec<&TickRecord> = trace.stage_ticks(stage).collect();
    let (lo, hi) = span(&ticks).ok_or_else(|| SimError::Input("trace has no ticks".into()))?;
    if window.0 > window.1 || window.0 < lo || window.1 > hi + 1.0 {
        return Err(SimError::Input(format!(
            "window [{}, {}] lies outside the trace [{lo}, {hi}]",
            window.0, window.1
        )));
    }
    for p in party_places {
        if trace.scenario.building(p).is_none() {
            return Err(SimError::Input(format!("unknown party place {p:?}")));
        }
    }
    let attendees: BTreeSet<String> = ticks
        .iter()
        .filter(|t| t.time >= window.0 && t.time <= window.1)
        .filter(|t| t.place.as_ref().is_some_and(|p| party_places.contains(p)))
        .map(|t| t.agent.clone())
        .collect();
    let total = trace.scenario.agents.len();
    Ok(EvalResult {
        show_up_rate: Some(attendees.len() as f64 / total as f64),
        completion_rate: None,
        conversation_count: conversation_count(ticks.iter().copied(), organizers),
        attendance: attendees.into_iter().collect(),
        ..Default::default()
    })
}

/// Per group, the share of target items some member holds at the group's
/// meeting place strictly before the absolute `deadline`; averaged over groups.
pub fn score_leadership_quest(trace: &Trace, tasks: &[GroupTask], deadline: f64) -> Result<EvalResult, SimError> {
    let cfg = &trace.scenario;
    if tasks.is_empty() {
        return Err(SimError::Config("no group tasks".into()));
    }
    let vocab = cfg.vocabulary();
    let (stage, _) = trace
        .scored_stage()
        .ok_or_else(|| SimError::Input("trace has no stages".into()))?;
    let ticks: Vec<&TickRecord> = trace.stage_ticks(stage).collect();
    let mut involved = BTreeSet::new();
    let mut result = EvalResult::default();
    let mut sum = 0.0;
    for task in tasks {
        let group = cfg
            .group(&task.group)
            .ok_or_else(|| SimError::Config(format!("unknown group {:?}", task.group)))?;
        for item in &task.items {
            if !cfg
                .building(&item.store)
                .is_some_and(|b| b.kind == BuildingKind::Stores)
            {
                return Err(SimError::Config(format!("unknown store {:?}", item.store)));
            }
            if !vocab.contains(&item.tag) {
                return Err(SimError::Config(format!("unknown item {:?}", item.tag)));
            }
        }
        let members: BTreeSet<&str> = group.members.iter().map(String::as_str).collect();
        involved.extend(group.members.iter().cloned());
        let mut required: BTreeMap<&str, usize> = BTreeMap::new();
        for item in &task.items {
            *required.entry(item.tag.as_str()).or_default() += 1;
        }
        // Best simultaneous count of each tag held at the meeting place.
        let mut by_time: BTreeMap<u64, BTreeMap<&str, usize>> = BTreeMap::new();
        for t in ticks
            .iter()
            .filter(|t| t.time < deadline && members.contains(t.agent.as_str()))
        {
            if t.place.as_deref() != Some(group.meeting_place.as_str()) {
                continue;
            }
            let counts = by_time.entry(t.time.to_bits()).or_default();
            for h in &t.held {
                *counts.entry(h.tag.as_str()).or_default() += 1;
            }
        }
        let mut fulfilled = Vec::new();
        let mut done = 0usize;
        for (tag, need) in &required {
            let best = by_time
                .values()
                .map(|c| c.get(tag).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            let got = best.min(*need);
            done += got;
            fulfilled.extend(std::iter::repeat_n(tag.to_string(), got));
        }
        let total: usize = required.values().sum();
        let rate = if total == 0 { 1.0 } else { done as f64 / total as f64 };
        sum += rate;
        result.group_rates.insert(task.group.clone(), rate);
        result.fulfilled.insert(task.group.clone(), fulfilled);
    }
    result.completion_rate = Some(sum / tasks.len() as f64);
    result.conversation_count = conversation_count(ticks.iter().copied(), &involved);
    Ok(result)
}

/// Score a trace with the evaluation embedded in its scenario. Clock times
/// are taken on the day the scored stage ran.
pub fn score_trace(trace: &Trace) -> Result<EvalResult, SimError> {
    let (_, start) = trace
        .scored_stage()
        .ok_or_else(|| SimError::Input("trace has no stages".into()))?;
    let day = day_start(start);
    let cfg = &trace.scenario;
    match &cfg.evaluation {
        None => Err(SimError::Input("scenario has no evaluation".into())),
        Some(EvaluationConfig::InfluenceBattle {
            organizers,
            window_start,
            window_end,
        }) => {
            let mut places = Vec::new();
            let mut members = BTreeSet::new();
            for o in organizers {
                let g = cfg
                    .group(o)
                    .ok_or_else(|| SimError::Config(format!("unknown organizing group {o:?}")))?;
                places.push(g.meeting_place.clone());
                members.extend(g.members.iter().cloned());
            }
            places.sort();
            places.dedup();
            score_influence_battle(trace, &places, (day + window_start, day + window_end), &members)
        }
        Some(EvaluationConfig::LeadershipQuest { deadline, tasks }) => {
            score_leadership_quest(trace, tasks, day + deadline)
        }
    }
}
