//! Streaming ingestion of MIMIC-IV-shaped CSV tables.
//!
//! Small tables (patients, icustays, admissions) are loaded whole; event
//! tables are exposed as single-consumer iterators whose memory use does
//! not depend on file size. Every reader keeps counters so that
//! `rows == yielded + skipped` holds for each table.

mod registry;
mod schema;
mod stream;
mod tables;

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::{NaiveDate, NaiveDateTime};
use serde::Serialize;

use crate::types::{AdmissionId, EventSource, IcdVersion, PatientId, StayId, YearBucket};

pub use registry::{build_item_registry, ItemRegistry, RegistryEntry};
pub use schema::{ColumnSpec, ColumnType, ResolvedColumns, Table, TableSchema};
pub use stream::{stream_events, EventStream, LabJoin, StayFilter};
pub use tables::{load_admissions, load_icustays, load_patients};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot open {path}: {source}")]
    Open {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{table}: missing required column {column:?}")]
    MissingColumn { table: Table, column: String },
    #[error("{table}: read failure at row {row}: {source}")]
    Read {
        table: Table,
        row: u64,
        #[source]
        source: csv::Error,
    },
    #[error("{table} row {row}: {message}")]
    InvalidValue {
        table: Table,
        row: u64,
        message: String,
    },
    #[error("{0}")]
    Registry(String),
}

/// Why a row did not produce a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// Stay or admission not admitted by the filter.
    Filtered,
    /// Numeric column held text that does not parse as a number.
    NonNumericValue,
    /// Chart/lab row with neither a numeric nor a text value.
    MissingValue,
    MissingTimestamp,
    BadTimestamp,
    BadIdentifier,
    BadField,
    /// Stay whose outtime does not follow its intime.
    InvalidInterval,
}

/// Per-table row accounting.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub rows: u64,
    pub yielded: u64,
    pub skipped: BTreeMap<SkipReason, u64>,
}

impl IngestStats {
    pub fn skipped_total(&self) -> u64 {
        self.skipped.values().sum()
    }

    pub(crate) fn skip(&mut self, reason: SkipReason) {
        *self.skipped.entry(reason).or_default() += 1;
    }

    pub fn skipped_for(&self, reason: SkipReason) -> u64 {
        self.skipped.get(&reason).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatientRecord {
    pub patient_id: PatientId,
    pub anchor_age: u32,
    pub gender: String,
    pub anchor_year_group: YearBucket,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IcuStayRecord {
    pub stay_id: StayId,
    pub patient_id: PatientId,
    pub admission_id: AdmissionId,
    pub intime: NaiveDateTime,
    pub outtime: NaiveDateTime,
    pub los_hours: f64,
}

impl IcuStayRecord {
    pub fn new(
        stay_id: StayId,
        patient_id: PatientId,
        admission_id: AdmissionId,
        intime: NaiveDateTime,
        outtime: NaiveDateTime,
    ) -> Option<Self> {
        (outtime > intime).then(|| Self {
            stay_id,
            patient_id,
            admission_id,
            intime,
            outtime,
            los_hours: hours_between(intime, outtime),
        })
    }

    /// Hours since ICU admission at which `t` occurred (negative before intime).
    pub fn hours_since_intime(&self, t: NaiveDateTime) -> f64 {
        hours_between(self.intime, t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissionRecord {
    pub admission_id: AdmissionId,
    pub patient_id: PatientId,
    pub ethnicity: Option<String>,
    pub marital_status: Option<String>,
    pub deathtime: Option<NaiveDateTime>,
}

/// One timestamped clinical observation or order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRecord {
    pub stay_id: StayId,
    pub source: EventSource,
    /// Item ID, GSN/drug name, specimen type or ICD code depending on source.
    pub item_id: String,
    pub value: Option<f64>,
    pub value_text: Option<String>,
    /// Absent only for diagnoses.
    pub charttime: Option<NaiveDateTime>,
    pub icd_version: Option<IcdVersion>,
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .ok()
        .or_else(|| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .ok()
                .and_then(|d| d.and_hms_opt(0, 0, 0))
        })
}

pub fn format_timestamp(t: NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

/// Signed hours from `from` to `to` at second resolution.
pub fn hours_between(from: NaiveDateTime, to: NaiveDateTime) -> f64 {
    (to - from).num_seconds() as f64 / 3600.0
}
