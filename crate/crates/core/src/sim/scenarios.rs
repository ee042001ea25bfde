//! Built-in scenarios with their scripted policies, and scenario-file loading.

use std::path::Path;

use crate::providers::ScriptedPolicy;

use super::config::WorldConfig;
use super::SimError;

pub struct Canned {
    pub name: &'static str,
    pub scenario: &'static str,
    pub policy: &'static str,
}

pub const CANNED: &[Canned] = &[
    Canned {
        name: "influence_battle",
        scenario: include_str!("../../scenarios/influence_battle.toml"),
        policy: include_str!("../../scenarios/influence_battle_policy.toml"),
    },
    Canned {
        name: "leadership_quest",
        scenario: include_str!("../../scenarios/leadership_quest.toml"),
        policy: include_str!("../../scenarios/leadership_quest_policy.toml"),
    },
    Canned {
        name: "town_day",
        scenario: include_str!("../../scenarios/town_day.toml"),
        policy: include_str!("../../scenarios/town_day_policy.toml"),
    },
];

fn checked(
    cfg: WorldConfig,
    policy: Option<ScriptedPolicy>,
) -> Result<(WorldConfig, Option<ScriptedPolicy>), SimError> {
    if let Some(p) = &policy {
        cfg.check_places(p.places())?;
    }
    Ok((cfg, policy))
}

/// A built-in scenario and its policy.
pub fn canned(name: &str) -> Result<(WorldConfig, ScriptedPolicy), SimError> {
    let c = CANNED
        .iter()
        .find(|c| c.name == name)
        .ok_or_else(|| SimError::Config(format!("no built-in scenario {name:?}")))?;
    let cfg = WorldConfig::from_toml(c.scenario)?;
    let policy = ScriptedPolicy::from_toml(c.policy).map_err(|e| SimError::Config(e.to_string()))?;
    let (cfg, policy) = checked(cfg, Some(policy))?;
    Ok((cfg, policy.expect("given")))
}

/// Load a scenario file and, when it names one, its policy (resolved
/// relative to the scenario file).
pub fn load_scenario(path: &Path) -> Result<(WorldConfig, Option<ScriptedPolicy>), SimError> {
    let cfg = WorldConfig::load(path)?;
    let policy = match &cfg.policy {
        Some(rel) => {
            let p = path.parent().unwrap_or(Path::new(".")).join(rel);
            Some(ScriptedPolicy::load(&p).map_err(|e| SimError::Config(e.to_string()))?)
        }
        None => None,
    };
    checked(cfg, policy)
}
