use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord};
use serde::{Deserialize, Serialize};

use super::tables::open;
use super::{
    parse_timestamp, EventRecord, IcuStayRecord, IngestError, IngestStats, ResolvedColumns,
    SkipReason, Table,
};
use crate::types::{AdmissionId, EventSource, IcdVersion, StayId};

/// Which key attaches lab results to a stay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabJoin {
    /// `labevents.stay_id` (synthetic extracts, or real extracts pre-joined to stays).
    Stay,
    /// `labevents.hadm_id`, resolved to the admission's stay. Real MIMIC-IV
    /// labevents carries no stay_id, so this is the default.
    #[default]
    Admission,
}

impl std::str::FromStr for LabJoin {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stay" => Ok(LabJoin::Stay),
            "admission" => Ok(LabJoin::Admission),
            o => Err(format!("unknown lab join {o:?} (expected stay or admission)")),
        }
    }
}

/// The stays an event stream admits, plus the admission-to-stay map used
/// for tables keyed by `hadm_id`.
#[derive(Debug, Clone, Default)]
pub struct StayFilter {
    stays: HashSet<StayId>,
    admissions: HashMap<AdmissionId, StayId>,
}

impl StayFilter {
    /// Admit exactly the given stays. When an admission holds several of
    /// them, admission-keyed rows go to the one with the earliest intime.
    pub fn from_stays<'a>(stays: impl IntoIterator<Item = &'a IcuStayRecord>) -> Self {
        let mut filter = StayFilter::default();
        let mut first: HashMap<AdmissionId, &IcuStayRecord> = HashMap::new();
        for s in stays {
            filter.stays.insert(s.stay_id);
            first
                .entry(s.admission_id)
                .and_modify(|cur| {
                    if (s.intime, s.stay_id) < (cur.intime, cur.stay_id) {
                        *cur = s;
                    }
                })
                .or_insert(s);
        }
        filter.admissions = first.into_iter().map(|(a, s)| (a, s.stay_id)).collect();
        filter
    }

    pub fn admits(&self, stay: StayId) -> bool {
        self.stays.contains(&stay)
    }

    pub fn stay_for_admission(&self, adm: AdmissionId) -> Option<StayId> {
        self.admissions.get(&adm).copied()
    }

    pub fn len(&self) -> usize {
        self.stays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stays.is_empty()
    }
}

pub(crate) fn source_table(source: EventSource) -> Table {
    match source {
        EventSource::Chart => Table::ChartEvents,
        EventSource::Lab => Table::LabEvents,
        EventSource::Prescription => Table::Prescriptions,
        EventSource::Microbiology => Table::MicrobiologyEvents,
        EventSource::Procedure => Table::ProcedureEvents,
        EventSource::Diagnosis => Table::DiagnosesIcd,
    }
}

/// Open an event table for streaming. Records come back in file order;
/// rows for stays outside `filter` are skipped and counted.
pub fn stream_events<'f>(
    path: &Path,
    source: EventSource,
    filter: &'f StayFilter,
) -> Result<EventStream<'f, BufReader<File>>, IngestError> {
    EventStream::new(BufReader::new(open(path)?), source, filter)
}

/// Single-consumer iterator over one event table.
pub struct EventStream<'f, R: Read> {
    reader: csv::Reader<R>,
    record: StringRecord,
    cols: ResolvedColumns,
    table: Table,
    source: EventSource,
    filter: &'f StayFilter,
    lab_join: LabJoin,
    stats: IngestStats,
    done: bool,
}

impl<'f, R: Read> EventStream<'f, R> {
    pub fn new(reader: R, source: EventSource, filter: &'f StayFilter) -> Result<Self, IngestError> {
        let table = source_table(source);
        let mut reader = ReaderBuilder::new().from_reader(reader);
        let header = reader
            .headers()
            .map_err(|source| IngestError::Read {
                table,
                row: 0,
                source,
            })?
            .clone();
        let cols = table.schema().resolve(&header)?;
        let lab_join = if cols.has("hadm_id") || !cols.has("stay_id") {
            LabJoin::Admission
        } else {
            LabJoin::Stay
        };
        Ok(Self {
            reader,
            record: StringRecord::new(),
            cols,
            table,
            source,
            filter,
            lab_join,
            stats: IngestStats::default(),
            done: false,
        })
    }

    /// Choose the lab join key. Fails when the file lacks the column.
    pub fn with_lab_join(mut self, join: LabJoin) -> Result<Self, IngestError> {
        if self.source == EventSource::Lab {
            let column = match join {
                LabJoin::Stay => "stay_id",
                LabJoin::Admission => "hadm_id",
            };
            if !self.cols.has(column) {
                return Err(IngestError::MissingColumn {
                    table: self.table,
                    column: column.to_string(),
                });
            }
            self.lab_join = join;
        }
        Ok(self)
    }

    pub fn lab_join(&self) -> LabJoin {
        self.lab_join
    }

    pub fn stats(&self) -> &IngestStats {
        &self.stats
    }

    pub fn into_stats(self) -> IngestStats {
        self.stats
    }

    fn resolve_stay(&self, by_stay: bool) -> Result<StayId, SkipReason> {
        let r = &self.record;
        if by_stay {
            let stay: StayId = self
                .cols
                .get(r, "stay_id")
                .and_then(|s| s.parse().ok())
                .ok_or(SkipReason::BadIdentifier)?;
            if self.filter.admits(stay) {
                Ok(stay)
            } else {
                Err(SkipReason::Filtered)
            }
        } else {
            let adm: AdmissionId = self
                .cols
                .get(r, "hadm_id")
                .and_then(|s| s.parse().ok())
                .ok_or(SkipReason::BadIdentifier)?;
            self.filter
                .stay_for_admission(adm)
                .ok_or(SkipReason::Filtered)
        }
    }

    fn time(&self, column: &str) -> Result<chrono::NaiveDateTime, SkipReason> {
        let raw = self
            .cols
            .get(&self.record, column)
            .ok_or(SkipReason::MissingTimestamp)?;
        parse_timestamp(raw).ok_or(SkipReason::BadTimestamp)
    }

    /// Numeric value with the documented drop rule.
    fn measurement(&self) -> Result<(Option<f64>, Option<String>), SkipReason> {
        let r = &self.record;
        let text = self.cols.get(r, "value").map(str::to_string);
        match self.cols.get(r, "valuenum") {
            Some(raw) => match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok((Some(v), text)),
                _ => Err(SkipReason::NonNumericValue),
            },
            None if text.is_some() => Ok((None, text)),
            None => Err(SkipReason::MissingValue),
        }
    }

    fn parse_current(&self) -> Result<EventRecord, SkipReason> {
        let r = &self.record;
        let item = |col: &str| {
            self.cols
                .get(r, col)
                .map(str::to_string)
                .ok_or(SkipReason::BadField)
        };
        let base = |stay_id, item_id, charttime| EventRecord {
            stay_id,
            source: self.source,
            item_id,
            value: None,
            value_text: None,
            charttime: Some(charttime),
            icd_version: None,
        };
        match self.source {
            EventSource::Chart | EventSource::Lab => {
                let by_stay = self.source == EventSource::Chart || self.lab_join == LabJoin::Stay;
                let stay = self.resolve_stay(by_stay)?;
                let item_id = item("itemid")?;
                let t = self.time("charttime")?;
                let (value, value_text) = self.measurement()?;
                Ok(EventRecord {
                    value,
                    value_text,
                    ..base(stay, item_id, t)
                })
            }
            EventSource::Prescription => {
                let stay = self.resolve_stay(false)?;
                let gsn = self.cols.get(r, "gsn").map(str::to_string);
                let drug = self.cols.get(r, "drug").map(str::to_string);
                let item_id = gsn.or_else(|| drug.clone()).ok_or(SkipReason::BadField)?;
                let t = self.time("starttime")?;
                Ok(EventRecord {
                    value_text: drug,
                    ..base(stay, item_id, t)
                })
            }
            EventSource::Microbiology => {
                let stay = self.resolve_stay(false)?;
                let item_id = item("spec_type_desc")?;
                let t = self.time("charttime").or_else(|e| match e {
                    SkipReason::MissingTimestamp => self.time("chartdate"),
                    other => Err(other),
                })?;
                Ok(base(stay, item_id, t))
            }
            EventSource::Procedure => {
                let stay = self.resolve_stay(true)?;
                let item_id = item("itemid")?;
                let t = self.time("starttime")?;
                Ok(base(stay, item_id, t))
            }
            EventSource::Diagnosis => {
                let stay = self.resolve_stay(false)?;
                let item_id = item("icd_code")?;
                let version = self
                    .cols
                    .get(r, "icd_version")
                    .and_then(|v| v.parse::<u8>().ok())
                    .and_then(IcdVersion::from_number)
                    .ok_or(SkipReason::BadField)?;
                Ok(EventRecord {
                    stay_id: stay,
                    source: self.source,
                    item_id,
                    value: None,
                    value_text: None,
                    charttime: None,
                    icd_version: Some(version),
                })
            }
        }
    }
}

impl<R: Read> Iterator for EventStream<'_, R> {
    type Item = Result<EventRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            match self.reader.read_record(&mut self.record) {
                Ok(false) => self.done = true,
                Ok(true) => {
                    self.stats.rows += 1;
                    match self.parse_current() {
                        Ok(ev) => {
                            self.stats.yielded += 1;
                            return Some(Ok(ev));
                        }
                        Err(reason) => self.stats.skip(reason),
                    }
                }
                Err(source) => {
                    self.done = true;
                    return Some(Err(IngestError::Read {
                        table: self.table,
                        row: self.stats.rows + 1,
                        source,
                    }));
                }
            }
        }
        None
    }
}
