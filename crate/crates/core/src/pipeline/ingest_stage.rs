use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ensure_absent, write_json, PipelineError, Result, StageRecord, Staging, Timer};
use crate::cohort::{filter_cohort, CohortReport};
use crate::features::FeatureSetSpec;
use crate::ingest::{
    build_item_registry, format_timestamp, load_admissions, load_icustays, load_patients, parse_timestamp,
    stream_events, IngestStats, LabJoin, StayFilter, Table,
};
use crate::sepsis::{SofaItemIndex, SofaItems};
use crate::types::{AdmissionId, EventSource, IcdVersion, PatientId, StayId, YearBucket};

pub const COHORT_FILE: &str = "cohort.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const INGEST_SUMMARY_FILE: &str = "ingest_summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRecord {
    pub stay_id: StayId,
    pub patient_id: PatientId,
    pub admission_id: AdmissionId,
    pub age: u32,
    pub gender: Option<String>,
    pub ethnicity: Option<String>,
    pub marital_status: Option<String>,
    pub year_bucket: YearBucket,
    pub intime: String,
    pub outtime: String,
    pub los_hours: f64,
    pub deathtime: Option<String>,
}

impl CohortRecord {
    pub fn to_stay(&self) -> Result<crate::cohort::CohortStay> {
        let ts = |s: &str| parse_timestamp(s).ok_or_else(|| PipelineError::User(format!("bad timestamp {s:?} in cohort")));
        Ok(crate::cohort::CohortStay {
            stay_id: self.stay_id,
            patient_id: self.patient_id,
            admission_id: self.admission_id,
            age: self.age,
            year_bucket: self.year_bucket,
            los_hours: self.los_hours,
            intime: ts(&self.intime)?,
            outtime: ts(&self.outtime)?,
            onset_time: None,
            label: None,
        })
    }
}

/// One retained event, timed relative to its stay's ICU admission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub stay_id: StayId,
    pub source: EventSource,
    pub item_id: String,
    /// Hours since intime; empty for diagnoses.
    pub hour: Option<f64>,
    pub value: Option<f64>,
    pub text: Option<String>,
    pub icd_version: Option<IcdVersion>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    pub lab_join: LabJoin,
    /// Chart, lab and procedure items to keep; `None` keeps everything.
    /// Prescriptions, cultures and diagnoses are always kept.
    pub keep_items: Option<BTreeSet<String>>,
    pub force: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            lab_join: LabJoin::default(),
            keep_items: Some(default_item_filter()),
            force: false,
        }
    }
}

/// Items read by the built-in feature sets and the default SOFA scorer.
pub fn default_item_filter() -> BTreeSet<String> {
    let mut out: BTreeSet<String> = SofaItemIndex::all_item_ids(&SofaItems::default())
        .into_iter()
        .map(String::from)
        .collect();
    for name in ["dascena", "epic", "epic_minus_icd"] {
        let spec = FeatureSetSpec::builtin(name).expect("built-in feature set");
        let reg = build_item_registry(&spec).expect("built-in registry");
        out.extend(reg.item_ids().map(String::from));
    }
    out
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    lab_join: LabJoin,
    cohort: &'a CohortReport,
    tables: &'a BTreeMap<String, IngestStats>,
    events_written: u64,
    events_dropped_by_item_filter: u64,
}

/// Load and filter the cohort, then stream every event table once into a
/// single stay-relative `events.csv`.
pub fn run_ingest(tables_dir: &Path, out_dir: &Path, opts: &IngestOptions) -> Result<StageRecord> {
    let timer = Timer::start();
    ensure_absent(
        out_dir,
        &[COHORT_FILE.into(), EVENTS_FILE.into(), INGEST_SUMMARY_FILE.into()],
        opts.force,
    )?;
    let path = |t: Table| tables_dir.join(t.file_name());
    let (patients, p_stats) = load_patients(&path(Table::Patients)).map_err(PipelineError::user)?;
    let (stays, s_stats) = load_icustays(&path(Table::IcuStays)).map_err(PipelineError::user)?;
    let (admissions, a_stats) = load_admissions(&path(Table::Admissions)).map_err(PipelineError::user)?;
    let mut table_stats: BTreeMap<String, IngestStats> = BTreeMap::new();
    table_stats.insert(Table::Patients.name().into(), p_stats);
    table_stats.insert(Table::IcuStays.name().into(), s_stats);
    table_stats.insert(Table::Admissions.name().into(), a_stats);

    let (cohort, report) = filter_cohort(&patients, &stays);
    let gender: HashMap<PatientId, &str> = patients.iter().map(|p| (p.patient_id, p.gender.as_str())).collect();
    let adm: HashMap<AdmissionId, &crate::ingest::AdmissionRecord> =
        admissions.iter().map(|a| (a.admission_id, a)).collect();
    let kept: std::collections::HashSet<StayId> = cohort.iter().map(|c| c.stay_id).collect();
    let kept_stays: Vec<_> = stays.iter().filter(|s| kept.contains(&s.stay_id)).collect();
    let filter = StayFilter::from_stays(kept_stays.iter().copied());
    let intime: HashMap<StayId, chrono::NaiveDateTime> = cohort.iter().map(|c| (c.stay_id, c.intime)).collect();

    let staging = Staging::begin(out_dir, "ingest")?;
    let io = |e: csv::Error| PipelineError::internal(e);

    let mut w = csv::Writer::from_path(staging.path().join(COHORT_FILE)).map_err(io)?;
    for c in &cohort {
        let a = adm.get(&c.admission_id);
        w.serialize(CohortRecord {
            stay_id: c.stay_id,
            patient_id: c.patient_id,
            admission_id: c.admission_id,
            age: c.age,
            gender: gender.get(&c.patient_id).map(|g| g.to_string()).filter(|g| !g.is_empty()),
            ethnicity: a.and_then(|a| a.ethnicity.clone()),
            marital_status: a.and_then(|a| a.marital_status.clone()),
            year_bucket: c.year_bucket,
            intime: format_timestamp(c.intime),
            outtime: format_timestamp(c.outtime),
            los_hours: c.los_hours,
            deathtime: a.and_then(|a| a.deathtime).map(format_timestamp),
        })
        .map_err(io)?;
    }
    w.flush().map_err(PipelineError::internal)?;

    let mut w = csv::Writer::from_path(staging.path().join(EVENTS_FILE)).map_err(io)?;
    let mut written = 0u64;
    let mut dropped = 0u64;
    for source in [
        EventSource::Chart,
        EventSource::Lab,
        EventSource::Procedure,
        EventSource::Prescription,
        EventSource::Microbiology,
        EventSource::Diagnosis,
    ] {
        let table = match source {
            EventSource::Chart => Table::ChartEvents,
            EventSource::Lab => Table::LabEvents,
            EventSource::Procedure => Table::ProcedureEvents,
            EventSource::Prescription => Table::Prescriptions,
            EventSource::Microbiology => Table::MicrobiologyEvents,
            EventSource::Diagnosis => Table::DiagnosesIcd,
        };
        let mut stream = stream_events(&path(table), source, &filter)
            .map_err(PipelineError::user)?
            .with_lab_join(opts.lab_join)
            .map_err(PipelineError::user)?;
        let filtered = matches!(source, EventSource::Chart | EventSource::Lab | EventSource::Procedure);
        for rec in stream.by_ref() {
            let rec = rec.map_err(PipelineError::user)?;
            if filtered && opts.keep_items.as_ref().is_some_and(|k| !k.contains(&rec.item_id)) {
                dropped += 1;
                continue;
            }
            let t0 = intime[&rec.stay_id];
            let keep_text = source == EventSource::Prescription || rec.value.is_none();
            w.serialize(EventRow {
                stay_id: rec.stay_id,
                source,
                item_id: rec.item_id,
                hour: rec.charttime.map(|t| crate::ingest::hours_between(t0, t)),
                value: rec.value,
                text: rec.value_text.filter(|_| keep_text),
                icd_version: rec.icd_version,
            })
            .map_err(io)?;
            written += 1;
        }
        table_stats.insert(table.name().into(), stream.into_stats());
    }
    w.flush().map_err(PipelineError::internal)?;

    write_json(
        &staging.path().join(INGEST_SUMMARY_FILE),
        &IngestSummary {
            lab_join: opts.lab_join,
            cohort: &report,
            tables: &table_stats,
            events_written: written,
            events_dropped_by_item_filter: dropped,
        },
    )?;
    let outputs = staging.commit(opts.force)?;
    Ok(timer.record("ingest", outputs))
}

pub fn read_cohort(path: &Path) -> Result<Vec<CohortRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| PipelineError::User(format!("{}: {e}", path.display())))?;
    rdr.deserialize()
        .collect::<std::result::Result<Vec<CohortRecord>, _>>()
        .map_err(|e| PipelineError::User(format!("{}: {e}", path.display())))
}

/// Stream `events.csv` through `f` without holding it in memory.
pub fn read_events(path: &Path, mut f: impl FnMut(EventRow)) -> Result<()> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| PipelineError::User(format!("{}: {e}", path.display())))?;
    for row in rdr.deserialize() {
        f(row.map_err(|e| PipelineError::User(format!("{}: {e}", path.display())))?);
    }
    Ok(())
}
