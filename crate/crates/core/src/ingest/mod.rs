//! Reading HMD-style 1×1 tables and assembling per-year mortality series.

mod dataset;
mod hmd;
mod impute;

pub use dataset::{build_dataset, is_germany, MortalitySeries, StudyWindow, FIRST_AGE, OPEN_AGE};
pub use hmd::{parse_hmd_table, AgeToken, Cell, RawRow, RawTable};
pub use impute::{impute_zero_exposure, ImputeOptions, DEFAULT_U_MAX};

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
}

impl Sex {
    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Female => "female",
            Sex::Male => "male",
        }
    }

    /// Capitalized label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Sex::Female => "Female",
            Sex::Male => "Male",
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Sex {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "female" | "f" => Ok(Sex::Female),
            "male" | "m" => Ok(Sex::Male),
            _ => Err(IngestError::UnknownSex(s.to_string())),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate entry for year {year}, age {age}")]
    Duplicate { line: usize, year: i32, age: AgeToken },
    #[error("line {line}: year {year} appears again after other years")]
    NonContiguousYear { line: usize, year: i32 },
    #[error("missing year {0}")]
    MissingYear(i32),
    #[error("year {year}: missing age {age}")]
    MissingAge { year: i32, age: AgeToken },
    #[error("invalid study window {start}-{end}")]
    InvalidWindow { start: i32, end: i32 },
    #[error("unknown sex '{0}'")]
    UnknownSex(String),
}
