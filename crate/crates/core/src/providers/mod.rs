//! Pluggable embedding and reasoning backends.
//!
//! The agent talks to a [`Reasoner`] through five structured calls, one per
//! prompt template. Local backends (hash embeddings, the scripted reasoner)
//! are deterministic; the remote backend speaks a chat-completion protocol
//! and can record or replay its traffic.

mod embed;
mod reasoner;
pub mod remote;
mod scripted;
pub mod templates;

pub use embed::{EmbedError, EmbeddingProvider, HashEmbedder, DEFAULT_EMBEDDING_DIM};
pub use reasoner::{
    render_history, ActivitySpec, ExtractRequest, InteractionSpec, InteractionVerb, KnowledgeItem, Message,
    PlanRequest, ReactionDecision, ReactionRequest, Reasoner, ReasonerError, SummaryRequest, UtteranceRequest,
};
pub use scripted::{
    insert_activity, ReactionRule, ScriptedPolicy, ScriptedReaction, ScriptedReasoner, TargetSelector, TargetSpec,
};
