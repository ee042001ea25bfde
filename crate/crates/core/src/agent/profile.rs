use serde::{Deserialize, Serialize};

use crate::features::Feature;
use crate::geometry::Point2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaceInfo {
    pub name: String,
    pub kind: String,
    pub entrance: Point2,
    pub footprint: Vec<Point2>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnownAgent {
    pub name: String,
    pub appearance: Feature,
    #[serde(default)]
    pub facts: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupInfo {
    pub name: String,
    pub description: String,
    pub meeting_place: String,
    pub members: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacterProfile {
    pub name: String,
    pub age: u32,
    pub occupation: String,
    pub values: String,
    pub hobbies: String,
    pub lifestyle: String,
    pub community_goal: String,
    pub appearance: Feature,
    pub known_places: Vec<PlaceInfo>,
    pub known_agents: Vec<KnownAgent>,
    pub groups: Vec<GroupInfo>,
}

impl CharacterProfile {
    /// Natural-language character sheet handed to the reasoner.
    pub fn describe(&self) -> String {
        let mut s = format!("{}, {} years old, {}.", self.name, self.age, self.occupation);
        for (label, v) in [
            ("Values", &self.values),
            ("Hobbies", &self.hobbies),
            ("Lifestyle", &self.lifestyle),
            ("Community goal", &self.community_goal),
        ] {
            if !v.trim().is_empty() {
                s.push_str(&format!(" {label}: {v}."));
            }
        }
        for g in &self.groups {
            s.push_str(&format!(
                " Member of {} ({}), meeting at {}, with {}.",
                g.name,
                g.description,
                g.meeting_place,
                g.members.join(", ")
            ));
        }
        s
    }

    pub fn place(&self, name: &str) -> Option<&PlaceInfo> {
        self.known_places.iter().find(|p| p.name == name)
    }

    /// Everyone sharing a group with this agent, sorted and deduplicated.
    pub fn group_mates(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .groups
            .iter()
            .flat_map(|g| g.members.iter())
            .filter(|m| **m != self.name)
            .cloned()
            .collect();
        v.sort();
        v.dedup();
        v
    }
}

/// Default appearance descriptor: tokens unique to the name, so distinct
/// agents get near-orthogonal hash features.
pub fn appearance_descriptor(name: &str) -> String {
    let key: String = name
        .chars()
        .filter(|c| c.is_alphanumeric())
        .collect::<String>()
        .to_lowercase();
    format!("{key}hair {key}face {key}coat {key}gait")
}
