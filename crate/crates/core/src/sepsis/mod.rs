//! Sepsis-3 labelling: hourly SOFA, suspicion of infection, onset.
//! Also hosts the length-of-stay and ICU-mortality task labels.

pub mod config;
pub mod onset;
pub mod sofa;
pub mod soi;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use config::{AntibioticList, BaselineRule, LabelConfig, SofaConfig, SofaItems, SoiConfig};
pub use onset::{label_sepsis3, sofa_deltas, SepsisOnset};
pub use sofa::{
    compute_hourly_sofa, hourly_inputs, stay_hours, HourInputs, SofaItemIndex, SofaSeries,
    VasopressorDoses, ORGANS,
};
pub use soi::{detect_soi, SuspicionOfInfection};

use crate::cohort::CohortStay;
use crate::ingest::AdmissionRecord;
use crate::timeline::{StayTimeline, Sym, Symbols};
use crate::types::{EventSource, StayId};

pub const LOS_THRESHOLD_HOURS: f64 = 72.0;

pub fn label_los(los_hours: f64) -> bool {
    los_hours >= LOS_THRESHOLD_HOURS
}

/// Death recorded between ICU admission and discharge, inclusive.
pub fn label_mortality(stay: &CohortStay, admission: Option<&AdmissionRecord>) -> bool {
    admission
        .and_then(|a| a.deathtime)
        .is_some_and(|d| d >= stay.intime && d <= stay.outtime)
}

/// Per-run labelling context: config plus item lookups bound to a symbol table.
#[derive(Debug, Clone)]
pub struct Labeler {
    pub config: LabelConfig,
    sofa_index: SofaItemIndex,
    antibiotic_syms: HashSet<Sym>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StayLabel {
    pub sofa: SofaSeries,
    pub sois: Vec<SuspicionOfInfection>,
    pub onset: Option<SepsisOnset>,
}

impl Labeler {
    pub fn new(config: LabelConfig, symbols: &Symbols) -> Self {
        let sofa_index = SofaItemIndex::new(&config.sofa_items, symbols);
        let antibiotic_syms = symbols
            .iter()
            .filter(|(_, s)| config.antibiotics.matches(s))
            .map(|(sym, _)| sym)
            .collect();
        Self {
            config,
            sofa_index,
            antibiotic_syms,
        }
    }

    fn is_antibiotic(&self, item: Sym, text: Option<Sym>) -> bool {
        self.antibiotic_syms.contains(&item)
            || text.is_some_and(|t| self.antibiotic_syms.contains(&t))
    }

    /// Antibiotic order times and culture times, both ascending.
    pub fn infection_events(&self, timeline: &StayTimeline) -> (Vec<f64>, Vec<f64>) {
        let mut abx = Vec::new();
        let mut cultures = Vec::new();
        for ev in timeline.timed() {
            let t = ev.hour().expect("timed");
            match ev.source {
                EventSource::Prescription if self.is_antibiotic(ev.item, ev.text) => abx.push(t),
                EventSource::Microbiology => cultures.push(t),
                _ => {}
            }
        }
        (abx, cultures)
    }

    pub fn label_stay(&self, timeline: &StayTimeline, los_hours: f64) -> StayLabel {
        let (rows, weight) = hourly_inputs(timeline, &self.sofa_index, stay_hours(los_hours));
        let sofa = compute_hourly_sofa(&rows, weight, &self.config.sofa);
        let (abx, cultures) = self.infection_events(timeline);
        let sois = detect_soi(&abx, &cultures, &self.config.soi);
        let onset = label_sepsis3(&sofa, &sois, &self.config.sofa);
        StayLabel { sofa, sois, onset }
    }
}

/// Labels CSV row. Onset fields are empty for negative stays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub stay_id: StayId,
    pub onset_time: Option<f64>,
    pub soi_time: Option<f64>,
    pub sofa_delta: Option<i32>,
    pub label: u8,
}

impl LabelRow {
    pub fn new(stay_id: StayId, onset: Option<&SepsisOnset>) -> Self {
        Self {
            stay_id,
            onset_time: onset.map(|o| o.onset_time),
            soi_time: onset.map(|o| o.soi.soi_time),
            sofa_delta: onset.map(|o| o.sofa_delta),
            label: onset.is_some() as u8,
        }
    }
}

pub fn write_labels(path: &Path, rows: &[LabelRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRow>, csv::Error> {
    csv::Reader::from_path(path)?.deserialize().collect()
}
