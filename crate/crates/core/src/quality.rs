use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::Error;

/// Weld quality as judged by destructive chisel testing.
///
/// The declaration order is the tie-break order used wherever two classes
/// score equally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QualityClass {
    /// Standard nugget diameter.
    Good,
    /// Undersized nugget, weak joint.
    Medium,
    /// Stick weld: the sheets touch but barely fuse.
    Bad,
}

impl QualityClass {
    pub const ALL: [QualityClass; 3] =
        [QualityClass::Good, QualityClass::Medium, QualityClass::Bad];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            QualityClass::Good => "good",
            QualityClass::Medium => "medium",
            QualityClass::Bad => "bad",
        }
    }

    /// Label byte used in film file headers.
    pub fn to_byte(self) -> u8 {
        self as u8
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        Self::from_index(b as usize)
    }
}

impl fmt::Display for QualityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QualityClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "good" => Ok(QualityClass::Good),
            "medium" => Ok(QualityClass::Medium),
            "bad" => Ok(QualityClass::Bad),
            other => Err(Error::InvalidParameter(format!(
                "unknown quality class `{other}`"
            ))),
        }
    }
}
