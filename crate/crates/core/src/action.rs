//! The world action space shared by agents and the simulator.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hand {
    Left,
    Right,
}

impl Hand {
    pub fn parse(s: &str) -> Option<Hand> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" => Some(Hand::Left),
            "right" => Some(Hand::Right),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    MoveForward {
        meters: f64,
    },
    TurnLeft {
        degrees: f64,
    },
    TurnRight {
        degrees: f64,
    },
    Enter {
        target: String,
    },
    Exit {
        vehicle: String,
    },
    Pick {
        object: String,
        hand: Hand,
    },
    Drop {
        hand: Hand,
    },
    Converse {
        conversation: String,
        /// Addressees; everyone within range hears the message.
        to: Vec<String>,
        message: String,
        range: f64,
    },
}

impl Action {
    pub fn is_converse(&self) -> bool {
        matches!(self, Action::Converse { .. })
    }
}
