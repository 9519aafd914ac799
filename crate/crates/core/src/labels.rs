use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Diagnostic class. Bipolar is the positive class for every metric.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Bipolar,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Normal, Label::Bipolar];

    /// Output unit of the classifier's two-way softmax.
    pub fn class_index(self) -> usize {
        match self {
            Label::Normal => 0,
            Label::Bipolar => 1,
        }
    }

    pub fn from_class_index(i: usize) -> Label {
        if i == 1 {
            Label::Bipolar
        } else {
            Label::Normal
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Bipolar => "bipolar",
        }
    }

    pub(crate) fn tag(self) -> u64 {
        self.class_index() as u64
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normal" => Ok(Label::Normal),
            "bipolar" => Ok(Label::Bipolar),
            other => Err(Error::Config(format!("unknown label {other:?}"))),
        }
    }
}

/// Where a sample came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Read from a scan file.
    Real,
    /// Procedural phantom standing in for a real scan.
    Synthetic,
    /// Produced by a trained generator.
    Generated,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Real => "real",
            Provenance::Synthetic => "synthetic",
            Provenance::Generated => "generated",
        }
    }

    /// Real and phantom samples may be validated and tested on; generated
    /// ones never.
    pub fn is_generated(self) -> bool {
        self == Provenance::Generated
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real" => Ok(Provenance::Real),
            "synthetic" => Ok(Provenance::Synthetic),
            "generated" => Ok(Provenance::Generated),
            other => Err(Error::Config(format!("unknown provenance {other:?}"))),
        }
    }
}
