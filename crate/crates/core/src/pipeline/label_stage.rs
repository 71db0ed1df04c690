use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::ingest_stage::{read_cohort, read_events, EventRow, COHORT_FILE, EVENTS_FILE};
use super::{ensure_absent, write_json, PipelineError, Result, StageRecord, Staging, Timer};
use crate::cohort::{assign_onset, write_manifest, ManifestRow, OnsetOutcome, WindowAnchor, WINDOW_HOURS};
use crate::ingest::{parse_timestamp, AdmissionRecord};
use crate::rng::{self, tags};
use crate::sepsis::{label_los, label_mortality, write_labels, LabelConfig, LabelRow, Labeler};
use crate::timeline::{StayEvent, StayTimeline, Symbols};
use crate::types::{EventSource, StayId, Task, YearBucket};

pub const LABELS_FILE: &str = "labels.csv";
pub const MANIFEST_FILE: &str = "manifest.csv";
pub const LABEL_SUMMARY_FILE: &str = "label_summary.json";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelOptions {
    pub config: LabelConfig,
    pub task: Task,
    pub seed: u64,
    pub force: bool,
}

/// Read `events.csv` into one timeline per stay, keeping rows accepted by `keep`.
pub(crate) fn load_timelines(
    events: &Path,
    symbols: &mut Symbols,
    mut keep: impl FnMut(&EventRow) -> bool,
) -> Result<HashMap<StayId, Vec<StayEvent>>> {
    let mut by_stay: HashMap<StayId, Vec<StayEvent>> = HashMap::new();
    read_events(events, |row| {
        if !keep(&row) {
            return;
        }
        let item = symbols.intern(&row.item_id);
        let ev = match (row.source, row.hour, row.icd_version) {
            (EventSource::Diagnosis, _, Some(v)) => StayEvent::diagnosis(item, v),
            (_, Some(h), _) => {
                let text = row.text.as_deref().map(|t| symbols.intern(t));
                StayEvent::timed(row.source, item, h, row.value).with_text(text)
            }
            _ => return,
        };
        by_stay.entry(row.stay_id).or_default().push(ev);
    })?;
    Ok(by_stay)
}

#[derive(Serialize, Default)]
struct BucketCounts {
    stays: usize,
    positives: usize,
    in_manifest: usize,
    rejected_early_onset: usize,
    mean_onset_positive: Option<f64>,
}

#[derive(Serialize)]
struct LabelSummary<'a> {
    task: Task,
    seed: u64,
    config: &'a LabelConfig,
    buckets: BTreeMap<YearBucket, BucketCounts>,
}

/// Label every cohort stay, anchor each stay's observation window and
/// write `labels.csv`, `manifest.csv` and a summary.
pub fn run_label(ingest_dir: &Path, out_dir: &Path, opts: &LabelOptions) -> Result<StageRecord> {
    let timer = Timer::start();
    ensure_absent(
        out_dir,
        &[LABELS_FILE.into(), MANIFEST_FILE.into(), LABEL_SUMMARY_FILE.into()],
        opts.force,
    )?;
    let cohort = read_cohort(&ingest_dir.join(COHORT_FILE))?;
    let mut symbols = Symbols::new();
    let sepsis = opts.task == Task::Sepsis;
    let mut events = if sepsis {
        load_timelines(&ingest_dir.join(EVENTS_FILE), &mut symbols, |r| r.source != EventSource::Diagnosis)?
    } else {
        HashMap::new()
    };
    let labeler = Labeler::new(opts.config.clone(), &symbols);

    let mut stays = Vec::with_capacity(cohort.len());
    for c in &cohort {
        let tl = StayTimeline::new(c.stay_id, events.remove(&c.stay_id).unwrap_or_default());
        stays.push((c, c.to_stay()?, tl));
    }
    let labelled: Vec<(LabelRow, Option<f64>)> = stays
        .par_iter()
        .map(|(c, stay, tl)| {
            if sepsis {
                let l = labeler.label_stay(tl, stay.los_hours);
                (LabelRow::new(c.stay_id, l.onset.as_ref()), l.onset.map(|o| o.onset_time))
            } else {
                let positive = match opts.task {
                    Task::Los => label_los(stay.los_hours),
                    _ => {
                        let adm = AdmissionRecord {
                            admission_id: c.admission_id,
                            patient_id: c.patient_id,
                            ethnicity: None,
                            marital_status: None,
                            deathtime: c.deathtime.as_deref().and_then(parse_timestamp),
                        };
                        label_mortality(stay, Some(&adm))
                    }
                };
                let mut row = LabelRow::new(c.stay_id, None);
                row.label = positive as u8;
                (row, None)
            }
        })
        .collect();

    let mut manifest = Vec::new();
    let mut buckets: BTreeMap<YearBucket, BucketCounts> = BTreeMap::new();
    let mut onset_sums: BTreeMap<YearBucket, (f64, usize)> = BTreeMap::new();
    for ((c, stay, _), (row, onset)) in stays.iter().zip(&labelled) {
        let counts = buckets.entry(c.year_bucket).or_default();
        counts.stays += 1;
        counts.positives += row.label as usize;
        if let Some(t) = onset {
            let e = onset_sums.entry(c.year_bucket).or_default();
            e.0 += t;
            e.1 += 1;
        }
        let (onset_time, label) = if sepsis {
            let mut r = rng::stream(opts.seed, tags::CONTROL_ONSET, c.stay_id.0);
            let onsets: Vec<f64> = onset.iter().copied().collect();
            match assign_onset(stay, &onsets, &mut r) {
                OnsetOutcome::Assigned { onset_time, label } => (onset_time, label),
                OnsetOutcome::Rejected { .. } => {
                    counts.rejected_early_onset += 1;
                    continue;
                }
            }
        } else {
            (WINDOW_HOURS as f64, row.label == 1)
        };
        let anchor = if sepsis {
            WindowAnchor::before_onset(c.stay_id, onset_time).map_err(PipelineError::internal)?
        } else {
            WindowAnchor::first_day(c.stay_id)
        };
        counts.in_manifest += 1;
        manifest.push(ManifestRow {
            stay_id: c.stay_id,
            label: label as u8,
            onset_time,
            year_bucket: c.year_bucket,
            pad_hours: anchor.pad_hours(),
        });
    }
    for (b, (sum, n)) in onset_sums {
        if let Some(c) = buckets.get_mut(&b) {
            c.mean_onset_positive = (n > 0).then(|| sum / n as f64);
        }
    }

    let staging = Staging::begin(out_dir, "label")?;
    let rows: Vec<LabelRow> = labelled.into_iter().map(|(r, _)| r).collect();
    write_labels(&staging.path().join(LABELS_FILE), &rows).map_err(PipelineError::internal)?;
    write_manifest(&staging.path().join(MANIFEST_FILE), &manifest).map_err(PipelineError::internal)?;
    write_json(
        &staging.path().join(LABEL_SUMMARY_FILE),
        &LabelSummary {
            task: opts.task,
            seed: opts.seed,
            config: &opts.config,
            buckets,
        },
    )?;
    let outputs = staging.commit(opts.force)?;
    Ok(timer.record("label", outputs))
}
