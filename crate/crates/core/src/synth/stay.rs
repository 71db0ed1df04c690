//! Simulation of one patient with one admission and one ICU stay. Every
//! draw comes from the stay's own stream, so output does not depend on
//! which thread runs it.

use std::fmt::Write as _;

use chrono::{Duration, NaiveDate, NaiveDateTime, Timelike};
use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal, StandardNormal};

use super::config::{SeriesTable, SparseTable, SynthConfig};
use crate::ingest::format_timestamp;
use crate::rng::{self, tags};
use crate::types::YearBucket;

pub const SUBJECT_BASE: i64 = 10_000_000;
pub const HADM_BASE: i64 = 20_000_000;
pub const STAY_BASE: i64 = 30_000_000;

pub const DAYTIME_START: u32 = 9;
pub const DAYTIME_END: u32 = 17;

pub const CULTURE_ITEM: &str = "BLOOD CULTURE";
pub const WORKUP_GSN: &str = "043952";
pub const WORKUP_DRUG: &str = "Vancomycin";
pub const LAB_PLATELETS: &str = "51265";
pub const LAB_BILIRUBIN: &str = "50885";
pub const LAB_CREATININE: &str = "50912";

/// Hours after a positive workup that the stay is guaranteed to last.
const POST_WORKUP_H: f64 = 12.0;
/// Latest deterioration hour drawn before a redraw.
const MAX_DETERIORATION_H: f64 = 180.0;
/// Workup follows the deterioration hour by a uniform offset in this range.
const WORKUP_OFFSET_H: std::ops::Range<f64> = 0.1..0.5;
const AR_PHI: f64 = 0.7;

const GENDERS: [&str; 2] = ["F", "M"];
const ETHNICITIES: [(&str, f64); 6] = [
    ("WHITE", 0.62),
    ("BLACK/AFRICAN AMERICAN", 0.12),
    ("HISPANIC/LATINO", 0.06),
    ("ASIAN", 0.04),
    ("OTHER", 0.06),
    ("UNKNOWN", 0.10),
];
const MARITAL: [(&str, f64); 5] = [
    ("MARRIED", 0.45),
    ("SINGLE", 0.30),
    ("WIDOWED", 0.12),
    ("DIVORCED", 0.08),
    ("", 0.05),
];

/// CSV body lines for one stay, one buffer per table.
#[derive(Debug, Default)]
pub struct StayRows {
    pub patients: String,
    pub admissions: String,
    pub icustays: String,
    pub chartevents: String,
    pub labevents: String,
    pub prescriptions: String,
    pub microbiologyevents: String,
    pub procedureevents: String,
    pub diagnoses_icd: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StayTruth {
    pub stay_id: i64,
    pub subject_id: i64,
    pub hadm_id: i64,
    pub bucket: YearBucket,
    pub label: bool,
    /// Hour (since intime) of the row in which the workup labs land.
    pub onset_time: Option<f64>,
    /// Hour at which physiology starts to fail, before any workup deferral.
    pub deterioration_h: Option<f64>,
    pub workup_deferred: bool,
    pub severity: f64,
    pub los_hours: f64,
}

fn pick<'a, R: Rng>(rng: &mut R, table: &'a [(&'a str, f64)]) -> &'a str {
    let total: f64 = table.iter().map(|(_, w)| w).sum();
    let mut u = rng.random::<f64>() * total;
    for (v, w) in table {
        if u < *w {
            return v;
        }
        u -= w;
    }
    table[table.len() - 1].0
}

fn pick_owned<'a, R: Rng>(rng: &mut R, table: &'a [(String, f64)]) -> &'a str {
    let total: f64 = table.iter().map(|(_, w)| w).sum();
    let mut u = rng.random::<f64>() * total;
    for (v, w) in table {
        if u < *w {
            return v;
        }
        u -= w;
    }
    &table[table.len() - 1].0
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Round to the minute so timestamps and hour offsets agree exactly.
fn to_minute(h: f64) -> f64 {
    (h * 60.0).round() / 60.0
}

struct Clock {
    intime: NaiveDateTime,
    /// Wall-clock hour of day at intime, fractional.
    start_hour: f64,
}

impl Clock {
    fn at(&self, h: f64) -> String {
        format_timestamp(self.intime + Duration::seconds((h * 3600.0).round() as i64))
    }

    fn hour_of_day(&self, h: f64) -> f64 {
        (self.start_hour + h).rem_euclid(24.0)
    }

    fn is_daytime(&self, h: f64) -> bool {
        let c = self.hour_of_day(h);
        c >= DAYTIME_START as f64 && c < DAYTIME_END as f64
    }
}

/// Per-bucket intercepts chosen so that marginal prevalence matches the
/// config. The linear predictor distribution is enumerated exactly over
/// condition combinations and integrated over severity on a fine grid.
pub fn solve_intercepts(cfg: &SynthConfig) -> [f64; 4] {
    let mut dist: std::collections::BTreeMap<i64, f64> = std::collections::BTreeMap::new();
    dist.insert(0, 1.0);
    for c in &cfg.conditions {
        let step = (c.coefficient * 1e6).round() as i64;
        let mut next = std::collections::BTreeMap::new();
        for (&k, &p) in &dist {
            *next.entry(k).or_insert(0.0) += p * (1.0 - c.prevalence);
            *next.entry(k + step).or_insert(0.0) += p * c.prevalence;
        }
        dist = next;
    }
    let grid: Vec<(f64, f64)> = {
        let n = 1601;
        let raw: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let z = -8.0 + 16.0 * i as f64 / (n - 1) as f64;
                (z, (-0.5 * z * z).exp())
            })
            .collect();
        let total: f64 = raw.iter().map(|(_, w)| w).sum();
        raw.into_iter().map(|(z, w)| (z, w / total)).collect()
    };
    let marginal = |alpha: f64| -> f64 {
        let mut acc = 0.0;
        for (&k, &p) in &dist {
            let base = alpha + k as f64 * 1e-6;
            for &(z, w) in &grid {
                acc += p * w * sigmoid(base + cfg.severity_coefficient * z);
            }
        }
        acc
    };
    let mut out = [0.0; 4];
    for (b, slot) in out.iter_mut().enumerate() {
        let target = cfg.prevalence[b];
        let (mut lo, mut hi) = (-40.0, 40.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if marginal(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        *slot = 0.5 * (lo + hi);
    }
    out
}

/// Deterioration hour: 6 h plus a gamma draw with the configured mean and
/// spread, rounded to the hour.
fn draw_deterioration<R: Rng>(rng: &mut R, mean: f64, spread: f64) -> f64 {
    let excess = mean - crate::cohort::MIN_ONSET_HOURS;
    let shape = (excess / spread).powi(2);
    let scale = spread * spread / excess;
    let g = Gamma::new(shape, scale).expect("validated parameters");
    loop {
        let t = crate::cohort::MIN_ONSET_HOURS + g.sample(rng);
        if t <= MAX_DETERIORATION_H {
            return t.round();
        }
    }
}

/// First hour at or after `h` whose workup time falls outside 9-17h.
fn after_daytime(clock: &Clock, h: f64, offset: f64) -> f64 {
    let mut t = h;
    while clock.is_daytime(t + offset) {
        t += 1.0;
    }
    t
}

pub fn simulate(cfg: &SynthConfig, index: usize, bucket: YearBucket, intercept: f64) -> (StayRows, StayTruth) {
    let mut rng = rng::stream(cfg.seed, tags::SYNTH_STAY, index as i64);
    let b = bucket.index();
    let subject_id = SUBJECT_BASE + index as i64;
    let hadm_id = HADM_BASE + index as i64;
    let stay_id = STAY_BASE + index as i64;
    let mut rows = StayRows::default();

    // Demographics.
    let age = (Normal::new(64.0, 16.0).unwrap().sample(&mut rng) as f64).round().clamp(18.0, 91.0) as u32;
    let gender = GENDERS[rng.random_range(0..2)];
    let ethnicity = pick(&mut rng, &ETHNICITIES);
    let marital = pick(&mut rng, &MARITAL);

    // Calendar: a random minute inside the bucket's three synthetic years.
    let year = 2110 + 3 * b as i32;
    let day = rng.random_range(0..3 * 365);
    let minute = rng.random_range(0..24 * 60);
    let intime = NaiveDate::from_ymd_opt(year, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
        + Duration::days(day)
        + Duration::minutes(minute);
    let clock = Clock {
        intime,
        start_hour: intime.hour() as f64 + intime.minute() as f64 / 60.0,
    };

    // Outcome.
    let present: Vec<bool> = cfg.conditions.iter().map(|c| rng.random::<f64>() < c.prevalence).collect();
    let severity: f64 = rng.sample(StandardNormal);
    let logit = intercept
        + cfg.severity_coefficient * severity
        + cfg
            .conditions
            .iter()
            .zip(&present)
            .filter(|(_, p)| **p)
            .map(|(c, _)| c.coefficient)
            .sum::<f64>();
    let label = rng.random::<f64>() < sigmoid(logit);

    // Length of stay and workup timing.
    let base_los = 24.0 + Exp::new(1.0 / (cfg.los_mean_h - 23.0).max(1.0)).unwrap().sample(&mut rng);
    let workup_offset = to_minute(rng.random_range(WORKUP_OFFSET_H));
    let defer_u: f64 = rng.random();
    let control_workup = rng.random::<f64>() < cfg.control_workup_prob;
    let control_workup_u: f64 = rng.random();
    let (deterioration, workup_h, deferred) = if label {
        let d = draw_deterioration(&mut rng, cfg.onset_mean_h[b], cfg.onset_spread_h[b]);
        let keep = cfg.microbio_daytime_rate[b].min(1.0);
        let deferred = clock.is_daytime(d + workup_offset) && defer_u >= keep;
        let w = if deferred { after_daytime(&clock, d, workup_offset) } else { d };
        (Some(d), Some(w), deferred)
    } else {
        (None, None, false)
    };
    let mut los = base_los;
    if let Some(w) = workup_h {
        los = los.max(w + POST_WORKUP_H);
    }
    let los = to_minute(los.clamp(crate::cohort::MIN_LOS_HOURS, crate::cohort::MAX_LOS_HOURS));
    let outtime_str = clock.at(los);
    let died = rng.random::<f64>() < cfg.mortality_prob * if label { 2.0 } else { 1.0 };
    let deathtime = if died { clock.at(los - to_minute(rng.random_range(0.0..1.0))) } else { String::new() };

    let intime_str = format_timestamp(intime);
    let admittime = clock.at(-to_minute(rng.random_range(1.0..24.0)));
    let dischtime = clock.at(los + to_minute(rng.random_range(2.0..72.0)));
    let _ = writeln!(rows.patients, "{subject_id},{gender},{age},{}", bucket.as_str());
    let _ = writeln!(
        rows.admissions,
        "{hadm_id},{subject_id},{admittime},{},{deathtime},{ethnicity},{marital}",
        if died { &deathtime } else { &dischtime }
    );
    let _ = writeln!(rows.icustays, "{subject_id},{hadm_id},{stay_id},{intime_str},{outtime_str},{:.4}", los / 24.0);

    // Dense series: mean-reverting noise around a severity-shifted mean,
    // with a ramp toward the septic mean before deterioration.
    for s in &cfg.series {
        let jitter_span = (s.interval_h * 0.3).min(0.5);
        let mut t = 0.0;
        let mut e: f64 = rng.sample(StandardNormal);
        let innov = (1.0 - AR_PHI * AR_PHI).sqrt();
        while t < los {
            let z: f64 = rng.sample(StandardNormal);
            e = AR_PHI * e + innov * z;
            let jitter: f64 = rng.random_range(0.0..jitter_span.max(1e-9));
            let missing = rng.random::<f64>() < s.missing_prob;
            let at = to_minute(t + jitter);
            if !missing && at < los {
                let ramp = match deterioration {
                    Some(d) if cfg.pre_onset_ramp_h > 0.0 => ((at - (d - cfg.pre_onset_ramp_h)) / cfg.pre_onset_ramp_h).clamp(0.0, 1.0),
                    Some(d) => f64::from(at >= d),
                    None => 0.0,
                };
                let v = (s.baseline + severity * s.severity_shift + ramp * s.sepsis_shift + s.noise * e).clamp(s.min, s.max);
                let ts = clock.at(at);
                match s.table {
                    SeriesTable::Chart => {
                        let _ = writeln!(rows.chartevents, "{subject_id},{hadm_id},{stay_id},{ts},{},{v:.2},{v:.2}", s.item);
                    }
                    SeriesTable::Lab => {
                        let _ = writeln!(rows.labevents, "{subject_id},{hadm_id},{stay_id},{},{ts},{v:.2},{v:.2}", s.item);
                    }
                }
            }
            t += s.interval_h;
        }
    }

    // Daily organ-function labs. Normal until a positive workup, abnormal after.
    let mut day_t = 0.0;
    while day_t < los {
        let at = to_minute(day_t + rng.random_range(0.1..0.4));
        let septic = workup_h.is_some_and(|w| at > w);
        let plt: f64 = if septic { rng.random_range(60.0..95.0) } else { rng.random_range(180.0..320.0) };
        let bili: f64 = if septic { rng.random_range(2.1..4.0) } else { rng.random_range(0.3..1.0) };
        let crea: f64 = rng.random_range(0.6..1.1);
        if at < los {
            let ts = clock.at(at);
            for (item, v) in [(LAB_PLATELETS, plt), (LAB_BILIRUBIN, bili), (LAB_CREATININE, crea)] {
                let _ = writeln!(rows.labevents, "{subject_id},{hadm_id},{stay_id},{item},{ts},{v:.2},{v:.2}");
            }
        }
        day_t += 24.0;
    }

    // Infection workup: culture, antibiotic and (for positives) failing labs,
    // all inside the same stay hour.
    let workup_at = match workup_h {
        Some(w) => Some(w),
        None if control_workup => {
            let hi = (los - 1.0).max(crate::cohort::MIN_ONSET_HOURS + 1.0);
            Some((crate::cohort::MIN_ONSET_HOURS + control_workup_u * (hi - crate::cohort::MIN_ONSET_HOURS)).floor())
        }
        None => None,
    };
    if let Some(w) = workup_at {
        let culture_t = w + workup_offset;
        let ts = clock.at(culture_t);
        let _ = writeln!(rows.microbiologyevents, "{subject_id},{hadm_id},{},{ts},{CULTURE_ITEM}", &ts[..10]);
        let abx_t = to_minute(culture_t + 0.25);
        let _ = writeln!(
            rows.prescriptions,
            "{subject_id},{hadm_id},{},{},{WORKUP_DRUG},{WORKUP_GSN}",
            clock.at(abx_t),
            clock.at(abx_t + 48.0)
        );
        if label {
            let lab_ts = clock.at(culture_t + 1.0 / 60.0);
            let plt: f64 = rng.random_range(60.0..95.0);
            let bili: f64 = rng.random_range(2.1..4.0);
            let _ = writeln!(rows.labevents, "{subject_id},{hadm_id},{stay_id},{LAB_PLATELETS},{lab_ts},{plt:.2},{plt:.2}");
            let _ = writeln!(rows.labevents, "{subject_id},{hadm_id},{stay_id},{LAB_BILIRUBIN},{lab_ts},{bili:.2},{bili:.2}");
        }
    }

    // Routine cultures. Daytime draws are scaled by the bucket's multiplier.
    let day_factor = cfg.daytime_culture_factor * cfg.microbio_daytime_rate[b];
    let mut h = 0.0;
    while h < los {
        let at = to_minute(h + rng.random::<f64>());
        let rate = cfg.culture_rate_per_h * if clock.is_daytime(at) { day_factor } else { 1.0 };
        let hit = rng.random::<f64>() < rate.min(1.0);
        let spec = pick_owned(&mut rng, &cfg.specimen_types);
        if hit && at < los {
            let ts = clock.at(at);
            let _ = writeln!(rows.microbiologyevents, "{subject_id},{hadm_id},{},{ts},{spec}", &ts[..10]);
        }
        h += 1.0;
    }

    // Sparse orders, devices and wounds.
    for s in &cfg.sparse {
        let rate = (s.rate_per_h * (severity * s.severity_log_rate).exp()).min(1.0);
        let mut h = 0.0;
        while h < los {
            let u: f64 = rng.random();
            let at = to_minute(h + rng.random::<f64>());
            if u < rate && at < los {
                let ts = clock.at(at);
                match s.table {
                    SparseTable::Chart => {
                        let _ = writeln!(rows.chartevents, "{subject_id},{hadm_id},{stay_id},{ts},{},1,1", s.item);
                    }
                    SparseTable::Procedure => {
                        let _ = writeln!(rows.procedureevents, "{subject_id},{hadm_id},{stay_id},{ts},{},{}", clock.at(at + 1.0), s.item);
                    }
                    SparseTable::Prescription => {
                        let drug = s.drug.as_deref().unwrap_or("");
                        let _ = writeln!(rows.prescriptions, "{subject_id},{hadm_id},{ts},{},{drug},{}", clock.at(at + 24.0), s.item);
                    }
                }
            }
            h += 1.0;
        }
    }

    // Diagnoses, coded in the vocabulary in force for this bucket.
    let icd10 = b >= cfg.icd_cutover_bucket;
    let version = if icd10 { 10 } else { 9 };
    let mut seq = 1;
    for (c, p) in cfg.conditions.iter().zip(&present) {
        if *p {
            let code = if icd10 { &c.icd10 } else { &c.icd9 };
            let _ = writeln!(rows.diagnoses_icd, "{subject_id},{hadm_id},{seq},{code},{version}");
            seq += 1;
        }
    }
    for (c9, c10, p) in &cfg.background_codes {
        if rng.random::<f64>() < *p {
            let code = if icd10 { c10 } else { c9 };
            let _ = writeln!(rows.diagnoses_icd, "{subject_id},{hadm_id},{seq},{code},{version}");
            seq += 1;
        }
    }

    let truth = StayTruth {
        stay_id,
        subject_id,
        hadm_id,
        bucket,
        label,
        onset_time: workup_h.filter(|_| label),
        deterioration_h: deterioration,
        workup_deferred: deferred,
        severity,
        los_hours: los,
    };
    (rows, truth)
}

pub const HEADERS: [(&str, &str); 9] = [
    ("patients.csv", "subject_id,gender,anchor_age,anchor_year_group"),
    ("admissions.csv", "hadm_id,subject_id,admittime,dischtime,deathtime,ethnicity,marital_status"),
    ("icustays.csv", "subject_id,hadm_id,stay_id,intime,outtime,los"),
    ("chartevents.csv", "subject_id,hadm_id,stay_id,charttime,itemid,value,valuenum"),
    ("labevents.csv", "subject_id,hadm_id,stay_id,itemid,charttime,value,valuenum"),
    ("prescriptions.csv", "subject_id,hadm_id,starttime,stoptime,drug,gsn"),
    ("microbiologyevents.csv", "subject_id,hadm_id,chartdate,charttime,spec_type_desc"),
    ("procedureevents.csv", "subject_id,hadm_id,stay_id,starttime,endtime,itemid"),
    ("diagnoses_icd.csv", "subject_id,hadm_id,seq_num,icd_code,icd_version"),
];

impl StayRows {
    pub fn tables(&self) -> [&str; 9] {
        [
            &self.patients,
            &self.admissions,
            &self.icustays,
            &self.chartevents,
            &self.labevents,
            &self.prescriptions,
            &self.microbiologyevents,
            &self.procedureevents,
            &self.diagnoses_icd,
        ]
    }
}
