use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Murmur class. The discriminant is the canonical index used by every score
/// vector, confusion matrix and weight vector: Present, Unknown, Absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MurmurLabel {
    Present = 0,
    Unknown = 1,
    Absent = 2,
}

impl MurmurLabel {
    pub const ALL: [MurmurLabel; 3] = [MurmurLabel::Present, MurmurLabel::Unknown, MurmurLabel::Absent];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            MurmurLabel::Present => "Present",
            MurmurLabel::Unknown => "Unknown",
            MurmurLabel::Absent => "Absent",
        }
    }
}

impl fmt::Display for MurmurLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Case-insensitive.
impl FromStr for MurmurLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "present" => Ok(MurmurLabel::Present),
            "unknown" => Ok(MurmurLabel::Unknown),
            "absent" => Ok(MurmurLabel::Absent),
            other => Err(format!("unknown murmur label {other:?}")),
        }
    }
}
