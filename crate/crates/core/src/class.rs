use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The two cell types found in macerated hardwood samples.
///
/// The label index is fixed: fibers are `0`, vessels are `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellClass {
    Fiber,
    Vessel,
}

impl CellClass {
    pub const ALL: [CellClass; 2] = [CellClass::Fiber, CellClass::Vessel];

    pub fn index(self) -> usize {
        match self {
            CellClass::Fiber => 0,
            CellClass::Vessel => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            CellClass::Fiber => "fiber",
            CellClass::Vessel => "vessel",
        }
    }
}

impl fmt::Display for CellClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown class label `{0}` (expected fiber or vessel)")]
pub struct UnknownClass(pub String);

impl FromStr for CellClass {
    type Err = UnknownClass;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fiber" | "fibre" | "fibers" | "fibres" => Ok(CellClass::Fiber),
            "vessel" | "vessels" => Ok(CellClass::Vessel),
            _ => Err(UnknownClass(s.to_string())),
        }
    }
}
