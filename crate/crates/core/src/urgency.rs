use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Triage outcome, ordered from least to most urgent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UrgencyLevel {
    Wait = 0,
    Planned = 1,
    Promptly = 2,
    Immediate = 3,
    Acute = 4,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown urgency level {0:?}")]
pub struct ParseUrgencyError(pub String);

impl UrgencyLevel {
    pub const COUNT: usize = 5;

    pub const ALL: [UrgencyLevel; 5] = [
        UrgencyLevel::Wait,
        UrgencyLevel::Planned,
        UrgencyLevel::Promptly,
        UrgencyLevel::Immediate,
        UrgencyLevel::Acute,
    ];

    pub fn ordinal(self) -> u8 {
        self as u8
    }

    pub fn from_ordinal(ordinal: u8) -> Option<Self> {
        Self::ALL.get(ordinal as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            UrgencyLevel::Wait => "wait",
            UrgencyLevel::Planned => "planned",
            UrgencyLevel::Promptly => "promptly",
            UrgencyLevel::Immediate => "immediate",
            UrgencyLevel::Acute => "acute",
        }
    }
}

impl fmt::Display for UrgencyLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UrgencyLevel {
    type Err = ParseUrgencyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|level| level.name() == s)
            .ok_or_else(|| ParseUrgencyError(s.to_string()))
    }
}

impl Serialize for UrgencyLevel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for UrgencyLevel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
