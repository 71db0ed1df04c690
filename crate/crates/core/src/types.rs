//! Identifiers and small domain enums shared by every pipeline stage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub i64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }

        impl FromStr for $name {
            type Err = std::num::ParseIntError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                s.trim().parse().map($name)
            }
        }
    };
}

id_newtype!(
    /// `subject_id` in the source tables.
    PatientId
);
id_newtype!(
    /// `stay_id` in the source tables.
    StayId
);
id_newtype!(
    /// `hadm_id` in the source tables.
    AdmissionId
);

/// De-identified three-year band of care (`anchor_year_group`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum YearBucket {
    #[serde(rename = "2008-2010")]
    Y2008,
    #[serde(rename = "2011-2013")]
    Y2011,
    #[serde(rename = "2014-2016")]
    Y2014,
    #[serde(rename = "2017-2019")]
    Y2017,
}

impl YearBucket {
    pub const ALL: [YearBucket; 4] = [
        YearBucket::Y2008,
        YearBucket::Y2011,
        YearBucket::Y2014,
        YearBucket::Y2017,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            YearBucket::Y2008 => "2008-2010",
            YearBucket::Y2011 => "2011-2013",
            YearBucket::Y2014 => "2014-2016",
            YearBucket::Y2017 => "2017-2019",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// First calendar year covered by the bucket.
    pub fn first_year(self) -> i32 {
        2008 + 3 * self.index() as i32
    }
}

impl fmt::Display for YearBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown year bucket {0:?} (expected one of 2008-2010, 2011-2013, 2014-2016, 2017-2019)")]
pub struct UnknownBucket(pub String);

impl FromStr for YearBucket {
    type Err = UnknownBucket;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        Self::ALL
            .into_iter()
            .find(|b| b.as_str() == t)
            .ok_or_else(|| UnknownBucket(t.to_string()))
    }
}

/// Table of origin for an [`EventRecord`](crate::ingest::EventRecord).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventSource {
    Chart,
    Lab,
    Prescription,
    Microbiology,
    Procedure,
    Diagnosis,
}

impl EventSource {
    pub const ALL: [EventSource; 6] = [
        EventSource::Chart,
        EventSource::Lab,
        EventSource::Prescription,
        EventSource::Microbiology,
        EventSource::Procedure,
        EventSource::Diagnosis,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventSource::Chart => "chart",
            EventSource::Lab => "lab",
            EventSource::Prescription => "prescription",
            EventSource::Microbiology => "microbiology",
            EventSource::Procedure => "procedure",
            EventSource::Diagnosis => "diagnosis",
        }
    }
}

impl fmt::Display for EventSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventSource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s.trim())
            .ok_or_else(|| format!("unknown event source {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IcdVersion {
    #[serde(rename = "9")]
    Icd9,
    #[serde(rename = "10")]
    Icd10,
}

impl IcdVersion {
    pub fn number(self) -> u8 {
        match self {
            IcdVersion::Icd9 => 9,
            IcdVersion::Icd10 => 10,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            9 => Some(IcdVersion::Icd9),
            10 => Some(IcdVersion::Icd10),
            _ => None,
        }
    }
}

/// Prediction target for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[default]
    Sepsis,
    Los,
    Mortality,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Sepsis => "sepsis",
            Task::Los => "los",
            Task::Mortality => "mortality",
        }
    }
}

impl FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "sepsis" => Ok(Task::Sepsis),
            "los" => Ok(Task::Los),
            "mortality" => Ok(Task::Mortality),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bucket_round_trip() {
        for b in YearBucket::ALL {
            assert_eq!(b.as_str().parse::<YearBucket>().unwrap(), b);
            assert_eq!(YearBucket::from_index(b.index()), Some(b));
        }
        assert!("2020-2022".parse::<YearBucket>().is_err());
        assert_eq!(YearBucket::Y2014.first_year(), 2014);
    }
}
