use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::providers::Message;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConversationState {
    pub id: String,
    /// Everyone taking part, including the owning agent.
    pub participants: BTreeSet<String>,
    pub history: Vec<Message>,
    pub started_at: f64,
    pub last_message_at: f64,
    pub location: [f64; 3],
    pub initiating: bool,
    /// Context the initiator opened with.
    pub opening: String,
    /// A received message still awaits this agent's reply.
    pub pending_reply: bool,
}

impl ConversationState {
    pub fn others<'a>(&'a self, me: &'a str) -> impl Iterator<Item = &'a String> + 'a {
        self.participants.iter().filter(move |p| p.as_str() != me)
    }

    pub fn last_received<'a>(&'a self, me: &str) -> Option<&'a Message> {
        self.history.iter().rev().find(|m| m.speaker != me)
    }

    pub fn recent(&self, n: usize) -> &[Message] {
        &self.history[self.history.len().saturating_sub(n)..]
    }
}

/// Retrieval query for an utterance: the fixed topic query when opening a
/// conversation, else the latest received sentence.
pub fn utterance_query(targets: &[String], latest_received: Option<&str>, initiating: bool) -> String {
    match (initiating, latest_received) {
        (false, Some(text)) => text.to_string(),
        _ => format!("Things to chat about with {}", targets.join(", ")),
    }
}
