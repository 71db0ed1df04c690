use std::fs::File;
use std::io::Read;
use std::path::Path;

use csv::{ReaderBuilder, StringRecord};

use super::{
    parse_timestamp, AdmissionRecord, IcuStayRecord, IngestError, IngestStats, PatientRecord,
    ResolvedColumns, SkipReason, Table,
};
use crate::types::{AdmissionId, PatientId, StayId, YearBucket};

pub(crate) fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Open {
        path: path.to_path_buf(),
        source,
    })
}

/// Iterate the rows of a whole table, resolving its header first.
fn for_each_row<R: Read>(
    reader: R,
    table: Table,
    mut f: impl FnMut(u64, &ResolvedColumns, &StringRecord) -> Result<(), IngestError>,
) -> Result<(), IngestError> {
    let mut rdr = ReaderBuilder::new().flexible(false).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|source| IngestError::Read {
            table,
            row: 0,
            source,
        })?
        .clone();
    let cols = table.schema().resolve(&header)?;
    let mut record = StringRecord::new();
    let mut row = 0u64;
    loop {
        row += 1;
        match rdr.read_record(&mut record) {
            Ok(true) => f(row, &cols, &record)?,
            Ok(false) => return Ok(()),
            Err(source) => return Err(IngestError::Read { table, row, source }),
        }
    }
}

fn parse_id<T: std::str::FromStr>(v: Option<&str>) -> Option<T> {
    v.and_then(|s| s.parse().ok())
}

/// Load `patients.csv`. Rows with an unusable ID or age are skipped and
/// counted; an unknown `anchor_year_group` is a hard error.
pub fn load_patients(path: &Path) -> Result<(Vec<PatientRecord>, IngestStats), IngestError> {
    read_patients(open(path)?)
}

pub(crate) fn read_patients<R: Read>(
    reader: R,
) -> Result<(Vec<PatientRecord>, IngestStats), IngestError> {
    let mut out = Vec::new();
    let mut stats = IngestStats::default();
    for_each_row(reader, Table::Patients, |row, cols, rec| {
        stats.rows += 1;
        let group = cols.get(rec, "anchor_year_group").unwrap_or("");
        let bucket: YearBucket = group.parse().map_err(|e| IngestError::InvalidValue {
            table: Table::Patients,
            row,
            message: format!("{e}"),
        })?;
        let Some(patient_id) = parse_id::<PatientId>(cols.get(rec, "subject_id")) else {
            stats.skip(SkipReason::BadIdentifier);
            return Ok(());
        };
        let Some(age) = cols.get(rec, "anchor_age").and_then(|s| s.parse::<u32>().ok()) else {
            stats.skip(SkipReason::BadField);
            return Ok(());
        };
        out.push(PatientRecord {
            patient_id,
            anchor_age: age,
            gender: cols.get(rec, "gender").unwrap_or("").to_string(),
            anchor_year_group: bucket,
        });
        stats.yielded += 1;
        Ok(())
    })?;
    Ok((out, stats))
}

pub fn load_icustays(path: &Path) -> Result<(Vec<IcuStayRecord>, IngestStats), IngestError> {
    read_icustays(open(path)?)
}

pub(crate) fn read_icustays<R: Read>(
    reader: R,
) -> Result<(Vec<IcuStayRecord>, IngestStats), IngestError> {
    let mut out = Vec::new();
    let mut stats = IngestStats::default();
    for_each_row(reader, Table::IcuStays, |_, cols, rec| {
        stats.rows += 1;
        let ids = (
            parse_id::<StayId>(cols.get(rec, "stay_id")),
            parse_id::<PatientId>(cols.get(rec, "subject_id")),
            parse_id::<AdmissionId>(cols.get(rec, "hadm_id")),
        );
        let (Some(stay), Some(patient), Some(adm)) = ids else {
            stats.skip(SkipReason::BadIdentifier);
            return Ok(());
        };
        let times = (
            cols.get(rec, "intime").and_then(parse_timestamp),
            cols.get(rec, "outtime").and_then(parse_timestamp),
        );
        let (Some(intime), Some(outtime)) = times else {
            stats.skip(SkipReason::BadTimestamp);
            return Ok(());
        };
        match IcuStayRecord::new(stay, patient, adm, intime, outtime) {
            Some(s) => {
                out.push(s);
                stats.yielded += 1;
            }
            None => stats.skip(SkipReason::InvalidInterval),
        }
        Ok(())
    })?;
    Ok((out, stats))
}

pub fn load_admissions(path: &Path) -> Result<(Vec<AdmissionRecord>, IngestStats), IngestError> {
    read_admissions(open(path)?)
}

pub(crate) fn read_admissions<R: Read>(
    reader: R,
) -> Result<(Vec<AdmissionRecord>, IngestStats), IngestError> {
    let mut out = Vec::new();
    let mut stats = IngestStats::default();
    for_each_row(reader, Table::Admissions, |_, cols, rec| {
        stats.rows += 1;
        let (Some(adm), Some(patient)) = (
            parse_id::<AdmissionId>(cols.get(rec, "hadm_id")),
            parse_id::<PatientId>(cols.get(rec, "subject_id")),
        ) else {
            stats.skip(SkipReason::BadIdentifier);
            return Ok(());
        };
        let deathtime = match cols.get(rec, "deathtime") {
            None => None,
            Some(s) => match parse_timestamp(s) {
                Some(t) => Some(t),
                None => {
                    stats.skip(SkipReason::BadTimestamp);
                    return Ok(());
                }
            },
        };
        out.push(AdmissionRecord {
            admission_id: adm,
            patient_id: patient,
            ethnicity: cols.get(rec, "ethnicity").map(str::to_string),
            marital_status: cols.get(rec, "marital_status").map(str::to_string),
            deathtime,
        });
        stats.yielded += 1;
        Ok(())
    })?;
    Ok((out, stats))
}
