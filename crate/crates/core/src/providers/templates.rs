//! Prompt templates for the five reasoner calls. Placeholders are written
//! `$Name$` and are substituted in a single pass, so substituted text is
//! never rescanned.

use super::ReasonerError;

pub const PLAN_SCHEDULE: &str = "\
You are $Character$

Here is what you remember that may matter for today:
$Context$

A new day has started. Write your schedule for the whole day as a list of \
activities. Give every activity a start time, an end time, a short \
description and the place where it happens. Places that are far apart take \
time to walk between, so leave room for the commute.

Reply with JSON only, in this form:
{\"activities\": [{\"start\": \"HH:MM\", \"end\": \"HH:MM\", \"description\": \"...\", \"place\": \"...\"}]}";

pub const DECIDE_REACTION: &str = "\
You are $Character$

Your remaining schedule for today:
$Schedule$

Relevant memories:
$Experience$

What just happened:
$Context$

Choose exactly one reaction: revise your schedule, interact with the \
environment, start a conversation, or do nothing.

Reply with JSON only, one of:
{\"reaction\": \"revise_schedule\", \"activities\": [{\"start\": \"HH:MM\", \"end\": \"HH:MM\", \"description\": \"...\", \"place\": \"...\"}]}
{\"reaction\": \"interact\", \"verb\": \"pick|drop|enter|exit\", \"target\": \"...\", \"hand\": \"left|right\"}
{\"reaction\": \"converse\", \"targets\": [\"...\"], \"opening\": \"...\"}
{\"reaction\": \"none\"}";

pub const GENERATE_UTTERANCE: &str = "\
You are $Character$

What you know about the people you are talking to:
$Target_knowledge$

Experiences you share with them:
$Target_experience$

Current situation:
$Context$

Most recent messages:
$Conversation_history$

Say the next thing in the conversation, in character and briefly. Reply with \
an empty utterance to end the conversation.

Reply with JSON only: {\"utterance\": \"...\"}";

pub const SUMMARIZE: &str = "\
Summarize the following conversation in one or two sentences, keeping any \
names, places, times and commitments.

$Conversation_history$

Reply with JSON only: {\"summary\": \"...\"}";

pub const EXTRACT_KNOWLEDGE: &str = "\
Read the conversation below and list any new facts it reveals about people, \
places, objects or groups.

$Conversation_history$

Examples of knowledge items you already hold:
$Knowledge_items$

Reply with JSON only: {\"knowledge\": [{\"name\": \"...\", \"kind\": \"agent|place|object|group|fact\", \"fact\": \"...\"}]}";

/// Names of the `$Name$` placeholders in a template, in order of appearance.
pub fn placeholders(template: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find('$') {
        let after = &rest[start + 1..];
        match after.find('$') {
            Some(end) if is_name(&after[..end]) => {
                out.push(&after[..end]);
                rest = &after[end + 1..];
            }
            _ => rest = after,
        }
    }
    out
}

fn is_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Substitute every placeholder. Fails if the template uses a placeholder
/// without a value or a value is given for a name the template lacks.
pub fn fill(template: &str, values: &[(&str, &str)]) -> Result<String, ReasonerError> {
    let used = placeholders(template);
    for name in &used {
        if !values.iter().any(|(k, _)| k == name) {
            return Err(ReasonerError::Template(format!("no value for ${name}$")));
        }
    }
    for (k, _) in values {
        if !used.contains(k) {
            return Err(ReasonerError::Template(format!("template has no ${k}$")));
        }
    }
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(start) = rest.find('$') {
        let after = &rest[start + 1..];
        match after.find('$') {
            Some(end) if is_name(&after[..end]) => {
                let name = &after[..end];
                let value = values
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| *v)
                    .expect("checked above");
                out.push_str(&rest[..start]);
                out.push_str(value);
                rest = &after[end + 1..];
            }
            _ => {
                out.push_str(&rest[..=start]);
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}
