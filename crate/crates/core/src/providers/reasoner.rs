use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::Hand;
use crate::clock::{as_clock, format_clock};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReasonerError {
    #[error("network failure: {0}")]
    Network(String),
    #[error("authentication failure: {0}")]
    Auth(String),
    #[error("response did not match the expected schema after {attempts} attempt(s): {detail}")]
    Schema { attempts: usize, detail: String },
    #[error("no recorded response for request {0}")]
    Unrecorded(String),
    #[error("reasoner configuration error: {0}")]
    Config(String),
    #[error("template error: {0}")]
    Template(String),
}

/// One activity in a daily schedule. Times are seconds since midnight and
/// serialize as clock strings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivitySpec {
    #[serde(with = "as_clock")]
    pub start: f64,
    #[serde(with = "as_clock")]
    pub end: f64,
    pub description: String,
    pub place: String,
}

impl ActivitySpec {
    pub fn render(&self) -> String {
        format!(
            "{}-{} {} at {}",
            format_clock(self.start),
            format_clock(self.end),
            self.description,
            self.place
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub speaker: String,
    pub text: String,
    pub time: f64,
}

impl Message {
    pub fn render(&self) -> String {
        format!("[{}] {}: {}", format_clock(self.time), self.speaker, self.text)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeItem {
    pub name: String,
    pub kind: String,
    pub fact: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionVerb {
    Pick,
    Drop,
    Enter,
    Exit,
}

/// An environment interaction named by the reasoner; the target is an object
/// tag, place or vehicle name that the agent resolves against what it sees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionSpec {
    pub verb: InteractionVerb,
    #[serde(default)]
    pub target: String,
    #[serde(default)]
    pub hand: Option<Hand>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reaction", rename_all = "snake_case")]
pub enum ReactionDecision {
    ReviseSchedule {
        activities: Vec<ActivitySpec>,
    },
    Interact {
        #[serde(flatten)]
        action: InteractionSpec,
    },
    Converse {
        targets: Vec<String>,
        opening: String,
    },
    None,
}

impl ReactionDecision {
    pub fn variant_name(&self) -> &'static str {
        match self {
            ReactionDecision::ReviseSchedule { .. } => "revise_schedule",
            ReactionDecision::Interact { .. } => "interact",
            ReactionDecision::Converse { .. } => "converse",
            ReactionDecision::None => "none",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    pub agent: String,
    pub character: String,
    /// Retrieved memory, rendered.
    pub context: String,
    /// Absolute time at which the day being planned starts.
    pub day_start: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReactionRequest {
    pub agent: String,
    pub character: String,
    pub time: f64,
    pub place: String,
    /// Remaining activities today.
    pub schedule: Vec<ActivitySpec>,
    /// Retrieved memory, rendered.
    pub experience: String,
    /// Latest observations and heard messages, rendered.
    pub context: String,
    pub nearby_agents: Vec<String>,
    pub recent_partners: Vec<String>,
    pub group_members: Vec<String>,
}

impl ReactionRequest {
    pub fn schedule_text(&self) -> String {
        if self.schedule.is_empty() {
            return "(nothing scheduled)".into();
        }
        self.schedule
            .iter()
            .map(ActivitySpec::render)
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRequest {
    pub agent: String,
    pub character: String,
    pub targets: Vec<String>,
    pub target_knowledge: String,
    pub target_experience: String,
    pub context: String,
    /// The last few messages of the conversation.
    pub history: Vec<Message>,
    pub initiating: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRequest {
    pub agent: String,
    pub history: Vec<Message>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractRequest {
    pub agent: String,
    pub history: Vec<Message>,
    pub sample_items: Vec<KnowledgeItem>,
}

pub fn render_history(history: &[Message]) -> String {
    if history.is_empty() {
        return "(no messages yet)".into();
    }
    history.iter().map(Message::render).collect::<Vec<_>>().join("\n")
}

/// Foundation-model calls made by the agent. Implementations must not keep
/// hidden state between calls beyond what the request carries.
pub trait Reasoner: Send + Sync {
    fn plan_schedule(&self, req: &PlanRequest) -> Result<Vec<ActivitySpec>, ReasonerError>;
    fn decide_reaction(&self, req: &ReactionRequest) -> Result<ReactionDecision, ReasonerError>;
    /// An empty utterance ends the agent's participation in the conversation.
    fn generate_utterance(&self, req: &UtteranceRequest) -> Result<String, ReasonerError>;
    fn summarize(&self, req: &SummaryRequest) -> Result<String, ReasonerError>;
    fn extract_knowledge(&self, req: &ExtractRequest) -> Result<Vec<KnowledgeItem>, ReasonerError>;
}
