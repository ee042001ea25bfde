//! Table-driven reasoner for deterministic runs. Rules are tried in order;
//! the first whose conditions hold produces the response, and calls no rule
//! matches get a no-op answer.

use std::path::Path;

use serde::Deserialize;

use super::reasoner::*;

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanRule {
    #[serde(default)]
    pub agent: Option<String>,
    #[serde(default)]
    pub when_character_contains: Vec<String>,
    pub activities: Vec<ActivitySpec>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScriptedReaction {
    ReviseSchedule {
        insert: ActivitySpec,
    },
    Interact {
        verb: InteractionVerb,
        #[serde(default)]
        target: String,
        #[serde(default)]
        hand: Option<crate::action::Hand>,
    },
    Converse {
        targets: TargetSpec,
        opening: String,
    },
    None,
}

/// Conversation targets: an explicit list, or a selector over the agents
/// currently nearby.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum TargetSpec {
    Named(Vec<String>),
    Selector(TargetSelector),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSelector {
    /// Nearby agents not yet talked to today.
    Nearby,
    /// Nearby agents outside the agent's own group not yet talked to today.
    NearbyOutsiders,
    /// Nearby members of the agent's own group not yet talked to today.
    NearbyGroup,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionRule {
    #[serde(default)]
    pub agent: Option<String>,
    #[serde(default)]
    pub when_context_contains: Vec<String>,
    #[serde(default)]
    pub unless_context_contains: Vec<String>,
    #[serde(default)]
    pub when_character_contains: Vec<String>,
    #[serde(default)]
    pub unless_schedule_contains: Vec<String>,
    pub reaction: ScriptedReaction,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtteranceRule {
    #[serde(default)]
    pub agent: Option<String>,
    #[serde(default)]
    pub when_initiating: Option<bool>,
    #[serde(default)]
    pub when_history_contains: Vec<String>,
    #[serde(default)]
    pub when_context_contains: Vec<String>,
    /// `{targets}` and `{self}` are substituted.
    pub text: String,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryRule {
    #[serde(default)]
    pub agent: Option<String>,
    #[serde(default)]
    pub when_history_contains: Vec<String>,
    pub text: String,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractRule {
    #[serde(default)]
    pub agent: Option<String>,
    #[serde(default)]
    pub when_history_contains: Vec<String>,
    pub items: Vec<KnowledgeItem>,
}

/// Policy table. All five sections must be present, possibly empty.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedPolicy {
    pub plan_schedule: Vec<PlanRule>,
    pub decide_reaction: Vec<ReactionRule>,
    pub generate_utterance: Vec<UtteranceRule>,
    pub summarize: Vec<SummaryRule>,
    pub extract_knowledge: Vec<ExtractRule>,
}

impl ScriptedPolicy {
    pub fn from_toml(text: &str) -> Result<Self, ReasonerError> {
        toml::from_str(text).map_err(|e| ReasonerError::Config(e.to_string()))
    }

    /// Every place named by a plan or a schedule revision.
    pub fn places(&self) -> Vec<&str> {
        let plans = self.plan_schedule.iter().flat_map(|r| r.activities.iter());
        let inserts = self.decide_reaction.iter().filter_map(|r| match &r.reaction {
            ScriptedReaction::ReviseSchedule { insert } => Some(insert),
            _ => None,
        });
        let mut v: Vec<&str> = plans.chain(inserts).map(|a| a.place.as_str()).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn load(path: &Path) -> Result<Self, ReasonerError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ReasonerError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

fn contains_all(haystack: &str, needles: &[String]) -> bool {
    let h = haystack.to_lowercase();
    needles.iter().all(|n| h.contains(&n.to_lowercase()))
}

fn contains_any(haystack: &str, needles: &[String]) -> bool {
    let h = haystack.to_lowercase();
    needles.iter().any(|n| h.contains(&n.to_lowercase()))
}

fn agent_matches(rule_agent: &Option<String>, agent: &str) -> bool {
    rule_agent.as_deref().is_none_or(|a| a == agent)
}

/// Insert an activity, cutting the overlapped parts out of existing ones
/// (an activity spanning the insert is split in two).
pub fn insert_activity(schedule: &[ActivitySpec], new: ActivitySpec) -> Vec<ActivitySpec> {
    let mut out = Vec::with_capacity(schedule.len() + 2);
    for a in schedule {
        if a.end <= new.start || a.start >= new.end {
            out.push(a.clone());
            continue;
        }
        if a.start < new.start {
            out.push(ActivitySpec {
                end: new.start,
                ..a.clone()
            });
        }
        if a.end > new.end {
            out.push(ActivitySpec {
                start: new.end,
                ..a.clone()
            });
        }
    }
    out.push(new);
    out.sort_by(|a, b| a.start.total_cmp(&b.start));
    out
}

#[derive(Clone, Debug, Default)]
pub struct ScriptedReasoner {
    policy: ScriptedPolicy,
}

impl ScriptedReasoner {
    pub fn new(policy: ScriptedPolicy) -> Self {
        Self { policy }
    }

    pub fn policy(&self) -> &ScriptedPolicy {
        &self.policy
    }
}

fn history_text(history: &[Message]) -> String {
    history
        .iter()
        .map(|m| format!("{}: {}", m.speaker, m.text))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Reasoner for ScriptedReasoner {
    fn plan_schedule(&self, req: &PlanRequest) -> Result<Vec<ActivitySpec>, ReasonerError> {
        Ok(self
            .policy
            .plan_schedule
            .iter()
            .find(|r| agent_matches(&r.agent, &req.agent) && contains_all(&req.character, &r.when_character_contains))
            .map(|r| r.activities.clone())
            .unwrap_or_default())
    }

    fn decide_reaction(&self, req: &ReactionRequest) -> Result<ReactionDecision, ReasonerError> {
        let schedule = req.schedule_text();
        for rule in &self.policy.decide_reaction {
            if !agent_matches(&rule.agent, &req.agent)
                || !contains_all(&req.context, &rule.when_context_contains)
                || contains_any(&req.context, &rule.unless_context_contains)
                || !contains_all(&req.character, &rule.when_character_contains)
                || contains_any(&schedule, &rule.unless_schedule_contains)
            {
                continue;
            }
            let decision = match &rule.reaction {
                ScriptedReaction::None => ReactionDecision::None,
                ScriptedReaction::ReviseSchedule { insert } => ReactionDecision::ReviseSchedule {
                    activities: insert_activity(&req.schedule, insert.clone()),
                },
                ScriptedReaction::Interact { verb, target, hand } => ReactionDecision::Interact {
                    action: InteractionSpec {
                        verb: *verb,
                        target: target.clone(),
                        hand: *hand,
                    },
                },
                ScriptedReaction::Converse { targets, opening } => {
                    let targets = match targets {
                        TargetSpec::Named(names) => names.clone(),
                        TargetSpec::Selector(sel) => req
                            .nearby_agents
                            .iter()
                            .filter(|n| !req.recent_partners.contains(n))
                            .filter(|n| match sel {
                                TargetSelector::Nearby => true,
                                TargetSelector::NearbyOutsiders => !req.group_members.contains(n),
                                TargetSelector::NearbyGroup => req.group_members.contains(n),
                            })
                            .cloned()
                            .collect(),
                    };
                    if targets.is_empty() {
                        continue;
                    }
                    ReactionDecision::Converse {
                        targets,
                        opening: opening.clone(),
                    }
                }
            };
            return Ok(decision);
        }
        Ok(ReactionDecision::None)
    }

    fn generate_utterance(&self, req: &UtteranceRequest) -> Result<String, ReasonerError> {
        let history = history_text(&req.history);
        let rule = self.policy.generate_utterance.iter().find(|r| {
            agent_matches(&r.agent, &req.agent)
                && r.when_initiating.is_none_or(|i| i == req.initiating)
                && contains_all(&history, &r.when_history_contains)
                && contains_all(&req.context, &r.when_context_contains)
        });
        Ok(rule
            .map(|r| {
                r.text
                    .replace("{targets}", &req.targets.join(", "))
                    .replace("{self}", &req.agent)
            })
            .unwrap_or_default())
    }

    fn summarize(&self, req: &SummaryRequest) -> Result<String, ReasonerError> {
        let history = history_text(&req.history);
        Ok(self
            .policy
            .summarize
            .iter()
            .find(|r| agent_matches(&r.agent, &req.agent) && contains_all(&history, &r.when_history_contains))
            .map(|r| r.text.clone())
            .unwrap_or_default())
    }

    fn extract_knowledge(&self, req: &ExtractRequest) -> Result<Vec<KnowledgeItem>, ReasonerError> {
        let history = history_text(&req.history);
        Ok(self
            .policy
            .extract_knowledge
            .iter()
            .find(|r| agent_matches(&r.agent, &req.agent) && contains_all(&history, &r.when_history_contains))
            .map(|r| r.items.clone())
            .unwrap_or_default())
    }
}
