use serde::{Deserialize, Serialize};
use std::fmt;

/// Outcome of a strict-inequality criterion evaluated in floating point.
///
/// `Boundary` means the deciding quantity fell inside the tolerance band
/// around zero, where the sign cannot be certified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriState {
    True,
    False,
    Boundary,
}

impl TriState {
    pub fn is_true(self) -> bool {
        self == TriState::True
    }

    pub fn is_false(self) -> bool {
        self == TriState::False
    }

    /// Classify `value > 0` with an absolute band `band`.
    pub fn positive(value: f64, band: f64) -> TriState {
        if value.is_nan() || value.abs() <= band {
            TriState::Boundary
        } else if value > 0.0 {
            TriState::True
        } else {
            TriState::False
        }
    }

    /// Conjunction: any `False` wins, then any `Boundary`.
    pub fn and(self, other: TriState) -> TriState {
        match (self, other) {
            (TriState::False, _) | (_, TriState::False) => TriState::False,
            (TriState::Boundary, _) | (_, TriState::Boundary) => TriState::Boundary,
            _ => TriState::True,
        }
    }

    /// Disjunction: any `True` wins, then any `Boundary`.
    pub fn or(self, other: TriState) -> TriState {
        match (self, other) {
            (TriState::True, _) | (_, TriState::True) => TriState::True,
            (TriState::Boundary, _) | (_, TriState::Boundary) => TriState::Boundary,
            _ => TriState::False,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TriState::True => "true",
            TriState::False => "false",
            TriState::Boundary => "boundary",
        }
    }
}

impl From<bool> for TriState {
    fn from(b: bool) -> Self {
        if b {
            TriState::True
        } else {
            TriState::False
        }
    }
}

impl fmt::Display for TriState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
