//! Patient filters, onset anchoring and the fixed 24-hour observation window.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::NaiveDateTime;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{IcuStayRecord, PatientRecord};
use crate::types::{AdmissionId, PatientId, StayId, YearBucket};

pub const MIN_AGE_EXCLUSIVE: u32 = 15;
pub const MIN_LOS_HOURS: f64 = 24.0;
pub const MAX_LOS_HOURS: f64 = 240.0;
pub const GAP_HOURS: f64 = 6.0;
pub const WINDOW_HOURS: usize = 24;
/// Earliest admissible onset: the gap must fit inside the stay.
pub const MIN_ONSET_HOURS: f64 = GAP_HOURS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortStay {
    pub stay_id: StayId,
    pub patient_id: PatientId,
    pub admission_id: AdmissionId,
    pub age: u32,
    pub year_bucket: YearBucket,
    pub los_hours: f64,
    pub intime: NaiveDateTime,
    pub outtime: NaiveDateTime,
    pub onset_time: Option<f64>,
    pub label: Option<bool>,
}

/// Exclusion counts in filter order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CohortReport {
    pub input_stays: usize,
    pub unknown_patient: usize,
    pub excluded_age: usize,
    pub excluded_stay_length: usize,
    pub excluded_not_first_stay: usize,
    pub kept: usize,
}

/// Age over 15, stay length in [24h, 240h], then each patient's first
/// remaining stay. Output is ordered by stay ID.
pub fn filter_cohort(
    patients: &[PatientRecord],
    stays: &[IcuStayRecord],
) -> (Vec<CohortStay>, CohortReport) {
    let by_id: HashMap<PatientId, &PatientRecord> =
        patients.iter().map(|p| (p.patient_id, p)).collect();
    let mut report = CohortReport {
        input_stays: stays.len(),
        ..Default::default()
    };

    let mut with_patient = Vec::with_capacity(stays.len());
    for s in stays {
        match by_id.get(&s.patient_id) {
            Some(p) => with_patient.push((s, *p)),
            None => report.unknown_patient += 1,
        }
    }

    let aged: Vec<_> = with_patient
        .into_iter()
        .filter(|(_, p)| {
            let keep = p.anchor_age > MIN_AGE_EXCLUSIVE;
            report.excluded_age += usize::from(!keep);
            keep
        })
        .collect();

    let sized: Vec<_> = aged
        .into_iter()
        .filter(|(s, _)| {
            let keep = (MIN_LOS_HOURS..=MAX_LOS_HOURS).contains(&s.los_hours);
            report.excluded_stay_length += usize::from(!keep);
            keep
        })
        .collect();

    let mut first: HashMap<PatientId, (&IcuStayRecord, &PatientRecord)> = HashMap::new();
    for (s, p) in sized {
        first
            .entry(p.patient_id)
            .and_modify(|cur| {
                report.excluded_not_first_stay += 1;
                if (s.intime, s.stay_id) < (cur.0.intime, cur.0.stay_id) {
                    *cur = (s, p);
                }
            })
            .or_insert((s, p));
    }

    let mut out: Vec<CohortStay> = first
        .into_values()
        .map(|(s, p)| CohortStay {
            stay_id: s.stay_id,
            patient_id: p.patient_id,
            admission_id: s.admission_id,
            age: p.anchor_age,
            year_bucket: p.anchor_year_group,
            los_hours: s.los_hours,
            intime: s.intime,
            outtime: s.outtime,
            onset_time: None,
            label: None,
        })
        .collect();
    out.sort_by_key(|c| c.stay_id);
    report.kept = out.len();
    (out, report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OnsetOutcome {
    Assigned { onset_time: f64, label: bool },
    /// Onset earlier than the 6-hour gap allows; the stay is dropped.
    Rejected { onset_time: f64 },
}

impl OnsetOutcome {
    pub fn onset_time(&self) -> f64 {
        match *self {
            OnsetOutcome::Assigned { onset_time, .. } | OnsetOutcome::Rejected { onset_time } => {
                onset_time
            }
        }
    }
}

/// Positive stays take their first detected onset; controls draw a
/// uniform time in `[6, los]` rounded to the minute. No redraw on rejection.
pub fn assign_onset<R: Rng + ?Sized>(
    stay: &CohortStay,
    sepsis_onsets: &[f64],
    rng: &mut R,
) -> OnsetOutcome {
    let (onset_time, label) = match sepsis_onsets.first() {
        Some(&first) => (first, true),
        None => {
            let hi = stay.los_hours.max(MIN_ONSET_HOURS);
            let draw = rng.random_range(MIN_ONSET_HOURS..=hi);
            ((draw * 60.0).round() / 60.0, false)
        }
    };
    if onset_time < MIN_ONSET_HOURS {
        OnsetOutcome::Rejected { onset_time }
    } else {
        OnsetOutcome::Assigned { onset_time, label }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("stay {stay_id}: window ends at {window_end}h, before ICU admission")]
pub struct WindowError {
    pub stay_id: StayId,
    pub window_end: f64,
}

/// The 24-hour observation window of one stay.
///
/// Rows follow the stay's integer hour grid: row `r` holds events whose
/// stay hour `floor(t)` equals `floor(window_start) + r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowAnchor {
    pub stay_id: StayId,
    pub onset_time: f64,
    pub window_start: f64,
    pub window_end: f64,
}

impl WindowAnchor {
    /// 24 hours ending 6 hours before onset.
    pub fn before_onset(stay_id: StayId, onset_time: f64) -> Result<Self, WindowError> {
        let window_end = onset_time - GAP_HOURS;
        if window_end < 0.0 {
            return Err(WindowError {
                stay_id,
                window_end,
            });
        }
        Ok(Self {
            stay_id,
            onset_time,
            window_start: window_end - WINDOW_HOURS as f64,
            window_end,
        })
    }

    /// First 24 hours of the stay, no gap (length-of-stay and mortality tasks).
    pub fn first_day(stay_id: StayId) -> Self {
        Self {
            stay_id,
            onset_time: WINDOW_HOURS as f64,
            window_start: 0.0,
            window_end: WINDOW_HOURS as f64,
        }
    }

    pub fn first_row_hour(&self) -> i64 {
        self.window_start.floor() as i64
    }

    /// Rows lying entirely before ICU admission.
    pub fn pad_hours(&self) -> usize {
        (-self.first_row_hour()).clamp(0, WINDOW_HOURS as i64) as usize
    }

    /// Window row of stay hour `h`, if it is inside the window and not a pad.
    pub fn row_of_stay_hour(&self, h: i64) -> Option<usize> {
        let r = h - self.first_row_hour();
        (h >= 0 && (0..WINDOW_HOURS as i64).contains(&r)).then_some(r as usize)
    }

    /// Window row of an event at `t` hours since intime.
    pub fn row_of(&self, t: f64) -> Option<usize> {
        self.row_of_stay_hour(t.floor() as i64)
    }
}

/// A fixed 24 x F hourly grid for one stay.
#[derive(Debug, Clone, PartialEq)]
pub struct StayWindow {
    pub stay_id: StayId,
    pub n_features: usize,
    /// Row-major 24 x F; `None` where nothing was measured (and in pads).
    pub hourly: Vec<Option<f64>>,
    pub static_values: Vec<f64>,
    pub pad_hours: usize,
    pub label: bool,
    pub year_bucket: YearBucket,
}

impl StayWindow {
    pub fn get(&self, hour: usize, feature: usize) -> Option<f64> {
        self.hourly[hour * self.n_features + feature]
    }
}

/// Select the window rows from per-stay-hour feature values.
///
/// `hourly_features` is keyed by integer stay hour. Pre-admission rows are
/// counted in `pad_hours` and left empty; imputation turns them into zeros.
pub fn extract_window(
    stay: &CohortStay,
    anchor: &WindowAnchor,
    hourly_features: &BTreeMap<i64, Vec<Option<f64>>>,
    n_features: usize,
) -> StayWindow {
    assert!(
        anchor.window_end >= 0.0,
        "window for stay {} ends before admission",
        anchor.stay_id
    );
    let mut hourly = vec![None; WINDOW_HOURS * n_features];
    let lo = anchor.first_row_hour().max(0);
    let hi = anchor.first_row_hour() + WINDOW_HOURS as i64;
    for (&h, values) in hourly_features.range(lo..hi) {
        let row = anchor
            .row_of_stay_hour(h)
            .expect("range restricted to window");
        for (f, v) in values.iter().enumerate().take(n_features) {
            hourly[row * n_features + f] = *v;
        }
    }
    StayWindow {
        stay_id: stay.stay_id,
        n_features,
        hourly,
        static_values: Vec::new(),
        pad_hours: anchor.pad_hours(),
        label: stay.label.unwrap_or(false),
        year_bucket: stay.year_bucket,
    }
}

/// One row of the cohort manifest passed between stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub stay_id: StayId,
    pub label: u8,
    pub onset_time: f64,
    pub year_bucket: YearBucket,
    pub pad_hours: usize,
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>, csv::Error> {
    csv::Reader::from_path(path)?.deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_timestamp;
    use crate::rng;

    fn patient(id: i64, age: u32) -> PatientRecord {
        PatientRecord {
            patient_id: PatientId(id),
            anchor_age: age,
            gender: "F".into(),
            anchor_year_group: YearBucket::Y2008,
        }
    }

    fn stay(id: i64, patient: i64, start: &str, hours: i64) -> IcuStayRecord {
        let intime = parse_timestamp(start).unwrap();
        IcuStayRecord::new(
            StayId(id),
            PatientId(patient),
            AdmissionId(id * 10),
            intime,
            intime + chrono::Duration::minutes(hours * 60),
        )
        .unwrap()
    }

    fn cohort_stay(los: f64) -> CohortStay {
        let intime = parse_timestamp("2110-01-01 00:00:00").unwrap();
        CohortStay {
            stay_id: StayId(1),
            patient_id: PatientId(1),
            admission_id: AdmissionId(1),
            age: 50,
            year_bucket: YearBucket::Y2008,
            los_hours: los,
            intime,
            outtime: intime + chrono::Duration::seconds((los * 3600.0) as i64),
            onset_time: None,
            label: None,
        }
    }

    #[test]
    fn age_fifteen_is_excluded() {
        let (c, r) = filter_cohort(
            &[patient(1, 15), patient(2, 16)],
            &[stay(1, 1, "2110-01-01 00:00:00", 48), stay(2, 2, "2110-01-01 00:00:00", 48)],
        );
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].patient_id, PatientId(2));
        assert_eq!(r.excluded_age, 1);
    }

    #[test]
    fn stay_length_bounds() {
        let short = {
            let intime = parse_timestamp("2110-01-01 00:00:00").unwrap();
            IcuStayRecord::new(
                StayId(1),
                PatientId(1),
                AdmissionId(1),
                intime,
                intime + chrono::Duration::seconds((23.9 * 3600.0) as i64),
            )
            .unwrap()
        };
        let (c, r) = filter_cohort(
            &[patient(1, 40), patient(2, 40), patient(3, 40)],
            &[short, stay(2, 2, "2110-01-01 00:00:00", 240), stay(3, 3, "2110-01-01 00:00:00", 241)],
        );
        assert_eq!(c.iter().map(|s| s.stay_id).collect::<Vec<_>>(), vec![StayId(2)]);
        assert_eq!(r.excluded_stay_length, 2);
    }

    #[test]
    fn only_first_stay_survives() {
        let (c, r) = filter_cohort(
            &[patient(1, 40)],
            &[stay(5, 1, "2110-03-01 00:00:00", 48), stay(4, 1, "2110-01-01 00:00:00", 48)],
        );
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].stay_id, StayId(4));
        assert_eq!(r.excluded_not_first_stay, 1);
        assert_eq!(r.kept, 1);
    }

    #[test]
    fn positive_takes_first_onset() {
        let mut r = rng::seeded(0);
        let out = assign_onset(&cohort_stay(48.0), &[10.0, 30.0], &mut r);
        assert_eq!(out, OnsetOutcome::Assigned { onset_time: 10.0, label: true });
    }

    #[test]
    fn early_onset_is_rejected() {
        let mut r = rng::seeded(0);
        assert_eq!(
            assign_onset(&cohort_stay(48.0), &[4.0], &mut r),
            OnsetOutcome::Rejected { onset_time: 4.0 }
        );
    }

    #[test]
    fn control_onset_is_uniform_on_six_to_los() {
        // Monte Carlo against the uniform mean (6 + 48) / 2 = 27.
        let stay = cohort_stay(48.0);
        let mut r = rng::seeded(1234);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let t = assign_onset(&stay, &[], &mut r);
            let OnsetOutcome::Assigned { onset_time, label } = t else {
                panic!("control rejected")
            };
            assert!(!label);
            assert!((6.0..=48.0).contains(&onset_time));
            assert!(((onset_time * 60.0).round() - onset_time * 60.0).abs() < 1e-9);
            sum += onset_time;
        }
        let mean = sum / n as f64;
        assert!((mean - 27.0).abs() < 0.5, "mean {mean}");
    }

    #[test]
    fn control_onset_is_seed_reproducible() {
        let stay = cohort_stay(100.0);
        let a: Vec<f64> = (0..10)
            .map(|i| assign_onset(&stay, &[], &mut rng::stream(9, rng::tags::CONTROL_ONSET, i)).onset_time())
            .collect();
        let b: Vec<f64> = (0..10)
            .map(|i| assign_onset(&stay, &[], &mut rng::stream(9, rng::tags::CONTROL_ONSET, i)).onset_time())
            .collect();
        assert_eq!(a, b);
    }

    fn hourly_ones(hours: std::ops::Range<i64>) -> BTreeMap<i64, Vec<Option<f64>>> {
        hours.map(|h| (h, vec![Some(h as f64)])).collect()
    }

    #[test]
    fn onset_thirty_covers_first_day() {
        let stay = cohort_stay(100.0);
        let a = WindowAnchor::before_onset(StayId(1), 30.0).unwrap();
        assert_eq!((a.window_start, a.window_end), (0.0, 24.0));
        let w = extract_window(&stay, &a, &hourly_ones(0..100), 1);
        assert_eq!(w.pad_hours, 0);
        assert_eq!(w.get(0, 0), Some(0.0));
        assert_eq!(w.get(23, 0), Some(23.0));
    }

    #[test]
    fn onset_twelve_pads_eighteen_hours() {
        let stay = cohort_stay(100.0);
        let a = WindowAnchor::before_onset(StayId(1), 12.0).unwrap();
        assert_eq!((a.window_start, a.window_end), (-18.0, 6.0));
        let w = extract_window(&stay, &a, &hourly_ones(-5..100), 1);
        assert_eq!(w.pad_hours, 18);
        assert!((0..18).all(|r| w.get(r, 0).is_none()));
        assert_eq!(w.get(18, 0), Some(0.0));
        assert_eq!(w.get(23, 0), Some(5.0));
    }

    #[test]
    fn onset_six_is_all_padding() {
        let stay = cohort_stay(100.0);
        let a = WindowAnchor::before_onset(StayId(1), 6.0).unwrap();
        assert_eq!((a.window_start, a.window_end), (-24.0, 0.0));
        let w = extract_window(&stay, &a, &hourly_ones(0..100), 1);
        assert_eq!(w.pad_hours, 24);
        assert!(w.hourly.iter().all(Option::is_none));
    }

    #[test]
    fn window_never_reaches_gap() {
        for minutes in 360..3000 {
            let onset = minutes as f64 / 60.0;
            let a = WindowAnchor::before_onset(StayId(1), onset).unwrap();
            assert_eq!(onset - GAP_HOURS - a.window_start, 24.0);
            let last_row_end = (a.first_row_hour() + WINDOW_HOURS as i64) as f64;
            assert!(last_row_end <= onset - GAP_HOURS);
            assert!(a.pad_hours() <= 24);
        }
        assert!(WindowAnchor::before_onset(StayId(1), 5.9).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let rows = vec![ManifestRow {
            stay_id: StayId(3),
            label: 1,
            onset_time: 12.5,
            year_bucket: YearBucket::Y2014,
            pad_hours: 17,
        }];
        write_manifest(&path, &rows).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), rows);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("stay_id,label,onset_time,year_bucket,pad_hours\n"));
    }
}
