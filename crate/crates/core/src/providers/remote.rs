//! Chat-completion backed reasoner, with record and replay transports.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::reasoner::*;
use super::templates;

pub const ENV_API_BASE: &str = "LIFEMEM_API_BASE";
pub const ENV_API_KEY: &str = "LIFEMEM_API_KEY";
pub const ENV_MODEL: &str = "LIFEMEM_MODEL";
pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";
pub const DEFAULT_MODEL: &str = "gpt-4o";
/// Attempts per call before a schema failure is surfaced.
pub const MAX_ATTEMPTS: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    /// Stable key used to match recorded exchanges.
    pub fn key(&self) -> String {
        serde_json::to_string(self).expect("chat request serializes")
    }
}

/// Moves one chat request to a model and returns the reply text.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ReasonerError>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub api_base: String,
    pub api_key: String,
    pub model: String,
}

impl EndpointConfig {
    /// Read endpoint, key and model from the environment.
    pub fn from_env() -> Result<Self, ReasonerError> {
        let api_key =
            std::env::var(ENV_API_KEY).map_err(|_| ReasonerError::Config(format!("{ENV_API_KEY} is not set")))?;
        Ok(Self {
            api_base: std::env::var(ENV_API_BASE).unwrap_or_else(|_| DEFAULT_API_BASE.into()),
            api_key,
            model: std::env::var(ENV_MODEL).unwrap_or_else(|_| DEFAULT_MODEL.into()),
        })
    }
}

pub struct HttpTransport {
    endpoint: EndpointConfig,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(endpoint: EndpointConfig) -> Result<Self, ReasonerError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(120))
            .build()
            .map_err(|e| ReasonerError::Config(e.to_string()))?;
        Ok(Self { endpoint, client })
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    message: ChatMessage,
}

impl ChatTransport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, ReasonerError> {
        let url = format!("{}/chat/completions", self.endpoint.api_base.trim_end_matches('/'));
        let resp = self
            .client
            .post(url)
            .bearer_auth(&self.endpoint.api_key)
            .json(request)
            .send()
            .map_err(|e| ReasonerError::Network(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(ReasonerError::Auth(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(ReasonerError::Network(format!("HTTP {status}")));
        }
        let body: CompletionResponse = resp.json().map_err(|e| ReasonerError::Schema {
            attempts: 1,
            detail: format!("completion envelope: {e}"),
        })?;
        body.choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ReasonerError::Schema {
                attempts: 1,
                detail: "completion has no choices".into(),
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub request: ChatRequest,
    pub response: String,
}

/// Wraps a transport and appends every successful exchange to a
/// line-delimited fixture file.
pub struct RecordingTransport<T> {
    inner: T,
    path: PathBuf,
    lock: Mutex<()>,
}

impl<T: ChatTransport> RecordingTransport<T> {
    pub fn new(inner: T, path: impl Into<PathBuf>) -> Self {
        Self {
            inner,
            path: path.into(),
            lock: Mutex::new(()),
        }
    }
}

impl<T: ChatTransport> ChatTransport for RecordingTransport<T> {
    fn complete(&self, request: &ChatRequest) -> Result<String, ReasonerError> {
        let response = self.inner.complete(request)?;
        let _guard = self.lock.lock().expect("recording lock");
        let line = serde_json::to_string(&Exchange {
            request: request.clone(),
            response: response.clone(),
        })
        .expect("exchange serializes");
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| ReasonerError::Config(format!("{}: {e}", self.path.display())))?;
        writeln!(f, "{line}").map_err(|e| ReasonerError::Config(e.to_string()))?;
        Ok(response)
    }
}

/// Serves responses from a fixture. Repeated identical requests are
/// answered in recorded order; once exhausted the last answer repeats.
pub struct PlaybackTransport {
    responses: HashMap<String, Vec<String>>,
    cursor: Mutex<HashMap<String, usize>>,
}

impl PlaybackTransport {
    pub fn load(path: &Path) -> Result<Self, ReasonerError> {
        let f = std::fs::File::open(path).map_err(|e| ReasonerError::Config(format!("{}: {e}", path.display())))?;
        let mut responses: HashMap<String, Vec<String>> = HashMap::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| ReasonerError::Config(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let ex: Exchange = serde_json::from_str(&line)
                .map_err(|e| ReasonerError::Config(format!("fixture line {}: {e}", i + 1)))?;
            responses.entry(ex.request.key()).or_default().push(ex.response);
        }
        Ok(Self {
            responses,
            cursor: Mutex::new(HashMap::new()),
        })
    }
}

impl ChatTransport for PlaybackTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, ReasonerError> {
        let key = request.key();
        let list = self
            .responses
            .get(&key)
            .ok_or_else(|| ReasonerError::Unrecorded(short(&key)))?;
        let mut cursor = self.cursor.lock().expect("playback lock");
        let i = cursor.entry(key).or_insert(0);
        let out = list[(*i).min(list.len() - 1)].clone();
        *i += 1;
        Ok(out)
    }
}

fn short(s: &str) -> String {
    s.chars().take(120).collect()
}

/// Pull the outermost JSON object out of a reply, tolerating code fences
/// or prose around it.
fn json_body(text: &str) -> &str {
    match (text.find('{'), text.rfind('}')) {
        (Some(a), Some(b)) if b > a => &text[a..=b],
        _ => text,
    }
}

#[derive(Deserialize)]
struct ScheduleReply {
    activities: Vec<ActivitySpec>,
}

#[derive(Deserialize)]
struct UtteranceReply {
    utterance: String,
}

#[derive(Deserialize)]
struct SummaryReply {
    summary: String,
}

#[derive(Deserialize)]
struct KnowledgeReply {
    knowledge: Vec<KnowledgeItem>,
}

pub struct RemoteReasoner {
    transport: Box<dyn ChatTransport>,
    model: String,
    max_attempts: usize,
}

impl RemoteReasoner {
    pub fn new(transport: Box<dyn ChatTransport>, model: impl Into<String>) -> Self {
        Self {
            transport,
            model: model.into(),
            max_attempts: MAX_ATTEMPTS,
        }
    }

    /// HTTP backend configured from the environment.
    pub fn from_env() -> Result<Self, ReasonerError> {
        let cfg = EndpointConfig::from_env()?;
        let model = cfg.model.clone();
        Ok(Self::new(Box::new(HttpTransport::new(cfg)?), model))
    }

    pub fn request_for(&self, prompt: String) -> ChatRequest {
        ChatRequest {
            model: self.model.clone(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: prompt,
            }],
            temperature: 0.0,
        }
    }

    fn call<T: DeserializeOwned>(&self, prompt: String) -> Result<T, ReasonerError> {
        let request = self.request_for(prompt);
        let mut last = String::new();
        for _ in 0..self.max_attempts {
            let text = self.transport.complete(&request)?;
            match serde_json::from_str::<T>(json_body(&text)) {
                Ok(v) => return Ok(v),
                Err(e) => last = e.to_string(),
            }
        }
        Err(ReasonerError::Schema {
            attempts: self.max_attempts,
            detail: last,
        })
    }
}

fn knowledge_lines(items: &[KnowledgeItem]) -> String {
    if items.is_empty() {
        return "(none yet)".into();
    }
    items
        .iter()
        .map(|k| format!("- {} ({}): {}", k.name, k.kind, k.fact))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn plan_prompt(req: &PlanRequest) -> Result<String, ReasonerError> {
    templates::fill(
        templates::PLAN_SCHEDULE,
        &[("Character", &req.character), ("Context", &req.context)],
    )
}

pub fn reaction_prompt(req: &ReactionRequest) -> Result<String, ReasonerError> {
    let schedule = req.schedule_text();
    let context = format!(
        "It is {} and you are at {}.\n{}",
        crate::clock::format_clock(req.time),
        req.place,
        req.context
    );
    templates::fill(
        templates::DECIDE_REACTION,
        &[
            ("Character", &req.character),
            ("Schedule", &schedule),
            ("Experience", &req.experience),
            ("Context", &context),
        ],
    )
}

pub fn utterance_prompt(req: &UtteranceRequest) -> Result<String, ReasonerError> {
    let history = render_history(&req.history);
    let context = format!("You are talking with {}.\n{}", req.targets.join(", "), req.context);
    templates::fill(
        templates::GENERATE_UTTERANCE,
        &[
            ("Character", &req.character),
            ("Target_knowledge", &req.target_knowledge),
            ("Target_experience", &req.target_experience),
            ("Context", &context),
            ("Conversation_history", &history),
        ],
    )
}

pub fn summary_prompt(req: &SummaryRequest) -> Result<String, ReasonerError> {
    let history = render_history(&req.history);
    templates::fill(templates::SUMMARIZE, &[("Conversation_history", &history)])
}

pub fn extract_prompt(req: &ExtractRequest) -> Result<String, ReasonerError> {
    let history = render_history(&req.history);
    let items = knowledge_lines(&req.sample_items);
    templates::fill(
        templates::EXTRACT_KNOWLEDGE,
        &[("Conversation_history", &history), ("Knowledge_items", &items)],
    )
}

impl Reasoner for RemoteReasoner {
    fn plan_schedule(&self, req: &PlanRequest) -> Result<Vec<ActivitySpec>, ReasonerError> {
        Ok(self.call::<ScheduleReply>(plan_prompt(req)?)?.activities)
    }

    fn decide_reaction(&self, req: &ReactionRequest) -> Result<ReactionDecision, ReasonerError> {
        self.call::<ReactionDecision>(reaction_prompt(req)?)
    }

    fn generate_utterance(&self, req: &UtteranceRequest) -> Result<String, ReasonerError> {
        Ok(self.call::<UtteranceReply>(utterance_prompt(req)?)?.utterance)
    }

    fn summarize(&self, req: &SummaryRequest) -> Result<String, ReasonerError> {
        Ok(self.call::<SummaryReply>(summary_prompt(req)?)?.summary)
    }

    fn extract_knowledge(&self, req: &ExtractRequest) -> Result<Vec<KnowledgeItem>, ReasonerError> {
        Ok(self.call::<KnowledgeReply>(extract_prompt(req)?)?.knowledge)
    }
}
