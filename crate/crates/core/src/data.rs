//! Labels and trial metadata shared by the pipeline stages.

use core::fmt;

use serde::{Deserialize, Serialize};

/// Attended direction; the class index used by the decoders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    pub fn index(self) -> u8 {
        match self {
            Direction::Left => 0,
            Direction::Right => 1,
        }
    }

    pub fn from_index(i: u8) -> Option<Self> {
        match i {
            0 => Some(Direction::Left),
            1 => Some(Direction::Right),
            _ => None,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
pub enum Scenario {
    #[default]
    #[serde(rename = "audio-only")]
    AudioOnly,
    #[serde(rename = "audio-video")]
    AudioVideo,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::AudioOnly => "audio-only",
            Scenario::AudioVideo => "audio-video",
        })
    }
}

/// Identity of one listening trial. `trial` is 1-based within a
/// (subject, scenario) group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrialMeta {
    pub subject: u32,
    pub scenario: Scenario,
    pub trial: u32,
    pub label: Direction,
}

/// How evaluation windows are kept apart from training windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Partition {
    /// First eight ninths of every trial train, the last ninth evaluates.
    #[default]
    #[serde(rename = "within-trial")]
    WithinTrial,
    /// Whole trials are held out by index.
    #[serde(rename = "cross-trial")]
    CrossTrial,
}

impl Partition {
    pub fn name(self) -> &'static str {
        match self {
            Partition::WithinTrial => "within-trial",
            Partition::CrossTrial => "cross-trial",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
