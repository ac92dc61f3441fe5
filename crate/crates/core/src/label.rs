//! The six panel-transition categories.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Categorical relationship between two consecutive panels.
///
/// Variant order is the canonical label index used by every 6-vector in the
/// crate (distributions, scores, confusion rows).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TransitionLabel {
    /// Action-to-action.
    Act,
    /// Aspect-to-aspect.
    Asp,
    /// Subject-to-subject.
    Sub,
    /// Scene-to-scene.
    Sce,
    /// Moment-to-moment.
    Mom,
    /// Non-sequitur.
    Non,
}

pub const NUM_LABELS: usize = 6;

impl TransitionLabel {
    pub const ALL: [TransitionLabel; NUM_LABELS] = [
        TransitionLabel::Act,
        TransitionLabel::Asp,
        TransitionLabel::Sub,
        TransitionLabel::Sce,
        TransitionLabel::Mom,
        TransitionLabel::Non,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Three-letter code, e.g. `ACT`.
    pub fn code(self) -> &'static str {
        match self {
            TransitionLabel::Act => "ACT",
            TransitionLabel::Asp => "ASP",
            TransitionLabel::Sub => "SUB",
            TransitionLabel::Sce => "SCE",
            TransitionLabel::Mom => "MOM",
            TransitionLabel::Non => "NON",
        }
    }

    /// Two-letter code, e.g. `AC`.
    pub fn short_code(self) -> &'static str {
        match self {
            TransitionLabel::Act => "AC",
            TransitionLabel::Asp => "AS",
            TransitionLabel::Sub => "SU",
            TransitionLabel::Sce => "SC",
            TransitionLabel::Mom => "MO",
            TransitionLabel::Non => "NO",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TransitionLabel::Act => "action-to-action",
            TransitionLabel::Asp => "aspect-to-aspect",
            TransitionLabel::Sub => "subject-to-subject",
            TransitionLabel::Sce => "scene-to-scene",
            TransitionLabel::Mom => "moment-to-moment",
            TransitionLabel::Non => "non-sequitur",
        }
    }

    /// One-hot encoding in canonical label order.
    pub fn one_hot(self) -> [f64; NUM_LABELS] {
        let mut v = [0.0; NUM_LABELS];
        v[self.index()] = 1.0;
        v
    }
}

impl fmt::Display for TransitionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for TransitionLabel {
    type Err = Error;

    /// Accepts the three-letter code, the two-letter code, or the full name
    /// (case-insensitive).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        TransitionLabel::ALL
            .into_iter()
            .find(|l| {
                t.eq_ignore_ascii_case(l.code())
                    || t.eq_ignore_ascii_case(l.short_code())
                    || t.eq_ignore_ascii_case(l.name())
            })
            .ok_or_else(|| {
                Error::Validation(format!(
                    "unknown transition label {s:?}; expected one of ACT, ASP, SUB, SCE, MOM, NON"
                ))
            })
    }
}

impl Serialize for TransitionLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for TransitionLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Renders a label sequence the way pattern tables do: `[ACT, ASP]`.
pub fn format_sequence(labels: &[TransitionLabel]) -> String {
    let codes: Vec<&str> = labels.iter().map(|l| l.code()).collect();
    format!("[{}]", codes.join(", "))
}
