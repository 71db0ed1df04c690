use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;

use super::ingest_stage::{read_cohort, COHORT_FILE, EVENTS_FILE};
use super::label_stage::{load_timelines, MANIFEST_FILE};
use super::{ensure_absent, PipelineError, Result, StageRecord, Staging, Timer};
use crate::cohort::{read_manifest, WindowAnchor, WINDOW_HOURS};
use crate::features::{
    aggregate_hourly, impute_simple, ContainerHeader, Demographics, FeatureIndex, FeatureMatrix, FeatureRow,
    FeatureSetSpec, ModelInput, StaticEncoder,
};
use crate::ingest::build_item_registry;
use crate::timeline::{StayTimeline, Symbols};
use crate::types::{EventSource, Task};

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractOptions {
    pub spec: FeatureSetSpec,
    pub task: Task,
    pub force: bool,
}

pub fn features_file_name(feature_set: &str) -> String {
    format!("features_{feature_set}.bin")
}

/// Build the 24-hour imputed matrices and static vectors for every
/// manifest stay. One-hot vocabularies are taken from the whole manifest;
/// training later zeroes categories it never saw.
pub fn run_extract_features(ingest_dir: &Path, label_dir: &Path, out_dir: &Path, opts: &ExtractOptions) -> Result<StageRecord> {
    let timer = Timer::start();
    let file = features_file_name(&opts.spec.name);
    ensure_absent(out_dir, std::slice::from_ref(&file), opts.force)?;
    let manifest = read_manifest(&label_dir.join(MANIFEST_FILE))
        .map_err(|e| PipelineError::User(format!("{}: {e}", label_dir.join(MANIFEST_FILE).display())))?;
    let cohort: HashMap<_, _> = read_cohort(&ingest_dir.join(COHORT_FILE))?
        .into_iter()
        .map(|c| (c.stay_id, c))
        .collect();
    let registry = build_item_registry(&opts.spec).map_err(PipelineError::user)?;
    let wanted: std::collections::HashSet<String> = registry.item_ids().map(String::from).collect();
    let use_icd = !opts.spec.icd_features.is_empty();
    let mut symbols = Symbols::new();
    let mut events = load_timelines(&ingest_dir.join(EVENTS_FILE), &mut symbols, |r| {
        if r.source == EventSource::Diagnosis {
            use_icd
        } else {
            wanted.contains(&r.item_id)
        }
    })?;
    let index = FeatureIndex::new(&registry, &symbols);
    let n_features = index.n_features();

    let mut demos = Vec::with_capacity(manifest.len());
    for m in &manifest {
        let c = cohort
            .get(&m.stay_id)
            .ok_or_else(|| PipelineError::User(format!("manifest stay {} is not in the cohort", m.stay_id)))?;
        demos.push(Demographics {
            age: c.age as f64,
            gender: c.gender.clone(),
            ethnicity: c.ethnicity.clone(),
            marital_status: c.marital_status.clone(),
        });
    }
    let encoder = StaticEncoder::fit(&opts.spec, &demos);
    let timelines: Vec<StayTimeline> = manifest
        .iter()
        .map(|m| StayTimeline::new(m.stay_id, events.remove(&m.stay_id).unwrap_or_default()))
        .collect();

    let mut rows: Vec<FeatureRow> = manifest
        .par_iter()
        .zip(&demos)
        .zip(&timelines)
        .map(|((m, demo), tl)| {
            let anchor = match opts.task {
                Task::Sepsis => WindowAnchor::before_onset(m.stay_id, m.onset_time).map_err(PipelineError::user)?,
                _ => WindowAnchor::first_day(m.stay_id),
            };
            let hm = aggregate_hourly(tl.timed(), &index, &anchor);
            let hourly = impute_simple(&hm.values, n_features, hm.pad_hours);
            let dx = tl
                .diagnoses()
                .filter_map(|e| e.icd_version.map(|v| (symbols.resolve(e.item), v)))
                .collect::<Vec<_>>();
            let statics = encoder.encode(demo, dx.iter().copied());
            Ok(FeatureRow {
                stay_id: m.stay_id,
                patient_id: cohort[&m.stay_id].patient_id,
                year_bucket: m.year_bucket,
                input: ModelInput::new(n_features, hourly, statics, hm.pad_hours, m.label == 1),
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by_key(|r| r.stay_id);

    let header = ContainerHeader {
        feature_set: opts.spec.name.clone(),
        task: opts.task.as_str().into(),
        hours: WINDOW_HOURS,
        n_features,
        n_static: encoder.dim(),
        n_rows: rows.len(),
        channel_names: ContainerHeader::channel_names_for(&opts.spec.hourly_names()),
        static_names: encoder.names(),
        static_kinds: encoder.kinds(),
    };
    let staging = Staging::begin(out_dir, "extract")?;
    FeatureMatrix { header, rows }
        .write(&staging.path().join(&file))
        .map_err(PipelineError::internal)?;
    let outputs = staging.commit(opts.force)?;
    Ok(timer.record("extract-features", outputs))
}
