use std::collections::HashMap;
use std::path::Path;

use chrono::Timelike;

use super::{PipelineError, Result, StageRecord, Staging, Timer};
use crate::drift::{
    antibiotics_trend, emit_report, hour_of_day_histogram, onset_distribution, report_files, specimen_change_table,
    DriftReport, DEFAULT_TOP_N,
};
use crate::ingest::{load_icustays, load_patients, stream_events, StayFilter, Table};
use crate::sepsis::{read_labels, AntibioticList};
use crate::types::{EventSource, StayId, YearBucket};

#[derive(Debug, Clone, PartialEq)]
pub struct DriftOptions {
    pub top_n: usize,
    pub antibiotics: AntibioticList,
    pub force: bool,
}

impl Default for DriftOptions {
    fn default() -> Self {
        Self {
            top_n: DEFAULT_TOP_N,
            antibiotics: AntibioticList::default(),
            force: false,
        }
    }
}

/// Onset histograms from a labels file plus specimen, hour-of-day and
/// antibiotic diagnostics read straight from the raw tables.
pub fn run_drift_report(labels: &Path, tables_dir: &Path, out_dir: &Path, opts: &DriftOptions) -> Result<StageRecord> {
    let timer = Timer::start();
    super::ensure_absent(out_dir, &report_files(), opts.force)?;
    let path = |t: Table| tables_dir.join(t.file_name());
    let (patients, _) = load_patients(&path(Table::Patients)).map_err(PipelineError::user)?;
    let (stays, _) = load_icustays(&path(Table::IcuStays)).map_err(PipelineError::user)?;
    let bucket_of_patient: HashMap<_, _> = patients.iter().map(|p| (p.patient_id, p.anchor_year_group)).collect();
    let mut bucket: HashMap<StayId, YearBucket> = HashMap::new();
    let mut intime = HashMap::new();
    let mut stays_per_bucket = [0u64; 4];
    for s in &stays {
        if let Some(&b) = bucket_of_patient.get(&s.patient_id) {
            bucket.insert(s.stay_id, b);
            intime.insert(s.stay_id, s.intime);
            stays_per_bucket[b.index()] += 1;
        }
    }
    let filter = StayFilter::from_stays(stays.iter().filter(|s| bucket.contains_key(&s.stay_id)));

    let label_rows = read_labels(labels).map_err(|e| PipelineError::User(format!("{}: {e}", labels.display())))?;
    let onsets: Vec<(YearBucket, f64)> = label_rows
        .iter()
        .filter(|r| r.label == 1)
        .filter_map(|r| Some((*bucket.get(&r.stay_id)?, r.onset_time?)))
        .collect();

    let mut specimens: Vec<(YearBucket, String)> = Vec::new();
    let mut clock_hours: Vec<(YearBucket, u32)> = Vec::new();
    for ev in stream_events(&path(Table::MicrobiologyEvents), EventSource::Microbiology, &filter).map_err(PipelineError::user)? {
        let ev = ev.map_err(PipelineError::user)?;
        let b = bucket[&ev.stay_id];
        if let Some(t) = ev.charttime {
            clock_hours.push((b, t.hour()));
        }
        specimens.push((b, ev.item_id));
    }
    let mut orders: Vec<(YearBucket, f64)> = Vec::new();
    for ev in stream_events(&path(Table::Prescriptions), EventSource::Prescription, &filter).map_err(PipelineError::user)? {
        let ev = ev.map_err(PipelineError::user)?;
        let is_abx = opts.antibiotics.matches(&ev.item_id)
            || ev.value_text.as_deref().is_some_and(|d| opts.antibiotics.matches(d));
        if let (true, Some(t)) = (is_abx, ev.charttime) {
            orders.push((bucket[&ev.stay_id], crate::ingest::hours_between(intime[&ev.stay_id], t)));
        }
    }

    let report = DriftReport {
        onset: onset_distribution(onsets),
        specimen_changes: specimen_change_table(specimens.iter().map(|(b, s)| (*b, s.as_str())), opts.top_n),
        hour_of_day: hour_of_day_histogram(clock_hours),
        antibiotics: antibiotics_trend(orders, Some(stays_per_bucket)),
    };
    let staging = Staging::begin(out_dir, "drift")?;
    emit_report(&report, staging.path()).map_err(PipelineError::internal)?;
    let outputs = staging.commit(opts.force)?;
    Ok(timer.record("drift-report", outputs))
}
