use std::collections::HashMap;

use serde::Serialize;

use super::config::{SofaConfig, SofaItems};
use crate::timeline::{StayTimeline, Sym, Symbols};
use crate::types::EventSource;

pub const ORGANS: [&str; 6] = [
    "respiration",
    "coagulation",
    "liver",
    "cardiovascular",
    "cns",
    "renal",
];

pub fn respiration_score(pao2_fio2: f64) -> u8 {
    match pao2_fio2 {
        r if r < 100.0 => 4,
        r if r < 200.0 => 3,
        r if r < 300.0 => 2,
        r if r < 400.0 => 1,
        _ => 0,
    }
}

pub fn coagulation_score(platelets: f64) -> u8 {
    match platelets {
        p if p < 20.0 => 4,
        p if p < 50.0 => 3,
        p if p < 100.0 => 2,
        p if p < 150.0 => 1,
        _ => 0,
    }
}

pub fn liver_score(bilirubin: f64) -> u8 {
    match bilirubin {
        b if b >= 12.0 => 4,
        b if b >= 6.0 => 3,
        b if b >= 2.0 => 2,
        b if b >= 1.2 => 1,
        _ => 0,
    }
}

/// Vasopressor doses in mcg/kg/min.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VasopressorDoses {
    pub dopamine: f64,
    pub dobutamine: f64,
    pub epinephrine: f64,
    pub norepinephrine: f64,
}

pub fn cardiovascular_score(map: Option<f64>, doses: VasopressorDoses) -> u8 {
    let d = doses;
    if d.dopamine > 15.0 || d.epinephrine > 0.1 || d.norepinephrine > 0.1 {
        4
    } else if d.dopamine > 5.0 || d.epinephrine > 0.0 || d.norepinephrine > 0.0 {
        3
    } else if d.dopamine > 0.0 || d.dobutamine > 0.0 {
        2
    } else if map.is_some_and(|m| m < 70.0) {
        1
    } else {
        0
    }
}

pub fn cns_score(gcs: f64) -> u8 {
    match gcs {
        g if g < 6.0 => 4,
        g if g < 10.0 => 3,
        g if g < 13.0 => 2,
        g if g < 15.0 => 1,
        _ => 0,
    }
}

/// `urine_24h` is mL over the trailing 24 hours.
pub fn renal_score(creatinine: Option<f64>, urine_24h: Option<f64>) -> u8 {
    let by_creat = creatinine.map_or(0, |c| match c {
        c if c >= 5.0 => 4,
        c if c >= 3.5 => 3,
        c if c >= 2.0 => 2,
        c if c >= 1.2 => 1,
        _ => 0,
    });
    let by_urine = urine_24h.map_or(0, |u| match u {
        u if u < 200.0 => 4,
        u if u < 500.0 => 3,
        _ => 0,
    });
    by_creat.max(by_urine)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SofaSeries {
    totals: Vec<u8>,
    subscores: Vec<[u8; 6]>,
    baseline: u8,
    /// Hours in which each organ had no usable data and scored 0.
    pub unscored_hours: [u32; 6],
    /// Vasopressors were present but no weight was charted.
    pub weight_defaulted: bool,
}

impl SofaSeries {
    pub fn from_subscores(subscores: Vec<[u8; 6]>) -> Self {
        assert!(
            subscores.iter().flatten().all(|&s| s <= 4),
            "organ subscores are 0..=4"
        );
        let totals: Vec<u8> = subscores.iter().map(|s| s.iter().sum()).collect();
        Self {
            baseline: totals.first().copied().unwrap_or(0),
            totals,
            subscores,
            unscored_hours: [0; 6],
            weight_defaulted: false,
        }
    }

    /// Spread each total over organs, filling respiration first.
    pub fn from_totals(totals: &[u8]) -> Self {
        let subs = totals
            .iter()
            .map(|&t| {
                assert!(t <= 24);
                let mut left = t;
                let mut s = [0u8; 6];
                for slot in &mut s {
                    *slot = left.min(4);
                    left -= *slot;
                }
                s
            })
            .collect();
        Self::from_subscores(subs)
    }

    pub fn totals(&self) -> &[u8] {
        &self.totals
    }

    pub fn subscores(&self) -> &[[u8; 6]] {
        &self.subscores
    }

    pub fn total(&self, hour: usize) -> u8 {
        self.totals[hour]
    }

    pub fn baseline(&self) -> u8 {
        self.baseline
    }

    pub fn len(&self) -> usize {
        self.totals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.totals.is_empty()
    }
}

/// Raw per-hour SOFA inputs: worst value in the hour, urine summed.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HourInputs {
    pub pao2: Option<f64>,
    pub fio2: Option<f64>,
    pub platelets: Option<f64>,
    pub bilirubin: Option<f64>,
    pub map: Option<f64>,
    pub gcs_total: Option<f64>,
    pub gcs_eye: Option<f64>,
    pub gcs_verbal: Option<f64>,
    pub gcs_motor: Option<f64>,
    pub creatinine: Option<f64>,
    pub urine: Option<f64>,
    pub dopamine: Option<f64>,
    pub dobutamine: Option<f64>,
    pub epinephrine: Option<f64>,
    pub norepinephrine: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Input {
    Pao2,
    Fio2,
    Platelets,
    Bilirubin,
    Map,
    GcsTotal,
    GcsEye,
    GcsVerbal,
    GcsMotor,
    Creatinine,
    Urine,
    Dopamine,
    Dobutamine,
    Epinephrine,
    Norepinephrine,
    Weight,
}

fn worse_min(slot: &mut Option<f64>, v: f64) {
    *slot = Some(slot.map_or(v, |s| s.min(v)));
}

fn worse_max(slot: &mut Option<f64>, v: f64) {
    *slot = Some(slot.map_or(v, |s| s.max(v)));
}

impl HourInputs {
    fn record(&mut self, input: Input, v: f64) {
        match input {
            Input::Pao2 => worse_min(&mut self.pao2, v),
            Input::Fio2 => worse_max(&mut self.fio2, if v > 1.0 { v / 100.0 } else { v }),
            Input::Platelets => worse_min(&mut self.platelets, v),
            Input::Bilirubin => worse_max(&mut self.bilirubin, v),
            Input::Map => worse_min(&mut self.map, v),
            Input::GcsTotal => worse_min(&mut self.gcs_total, v),
            Input::GcsEye => worse_min(&mut self.gcs_eye, v),
            Input::GcsVerbal => worse_min(&mut self.gcs_verbal, v),
            Input::GcsMotor => worse_min(&mut self.gcs_motor, v),
            Input::Creatinine => worse_max(&mut self.creatinine, v),
            Input::Urine => self.urine = Some(self.urine.unwrap_or(0.0) + v),
            Input::Dopamine => worse_max(&mut self.dopamine, v),
            Input::Dobutamine => worse_max(&mut self.dobutamine, v),
            Input::Epinephrine => worse_max(&mut self.epinephrine, v),
            Input::Norepinephrine => worse_max(&mut self.norepinephrine, v),
            Input::Weight => {}
        }
    }
}

/// Resolves configured item IDs against a symbol table once per run.
#[derive(Debug, Clone, Default)]
pub struct SofaItemIndex {
    map: HashMap<Sym, Input>,
}

impl SofaItemIndex {
    pub fn new(items: &SofaItems, symbols: &Symbols) -> Self {
        let groups: [(&[String], Input); 16] = [
            (&items.pao2, Input::Pao2),
            (&items.fio2, Input::Fio2),
            (&items.platelets, Input::Platelets),
            (&items.bilirubin, Input::Bilirubin),
            (&items.mean_arterial_pressure, Input::Map),
            (&items.gcs_total, Input::GcsTotal),
            (&items.gcs_eye, Input::GcsEye),
            (&items.gcs_verbal, Input::GcsVerbal),
            (&items.gcs_motor, Input::GcsMotor),
            (&items.creatinine, Input::Creatinine),
            (&items.urine_output, Input::Urine),
            (&items.dopamine, Input::Dopamine),
            (&items.dobutamine, Input::Dobutamine),
            (&items.epinephrine, Input::Epinephrine),
            (&items.norepinephrine, Input::Norepinephrine),
            (&items.weight, Input::Weight),
        ];
        let mut map = HashMap::new();
        for (ids, input) in groups {
            for id in ids {
                if let Some(sym) = symbols.get(id) {
                    map.entry(sym).or_insert(input);
                }
            }
        }
        Self { map }
    }

    /// Every item ID the scorer reads, for ingest-time filtering.
    pub fn all_item_ids(items: &SofaItems) -> Vec<&str> {
        [
            &items.pao2,
            &items.fio2,
            &items.platelets,
            &items.bilirubin,
            &items.mean_arterial_pressure,
            &items.gcs_total,
            &items.gcs_eye,
            &items.gcs_verbal,
            &items.gcs_motor,
            &items.creatinine,
            &items.urine_output,
            &items.dopamine,
            &items.dobutamine,
            &items.epinephrine,
            &items.norepinephrine,
            &items.weight,
        ]
        .into_iter()
        .flatten()
        .map(String::as_str)
        .collect()
    }
}

/// Bucket a stay's chart and lab events into `n_hours` hourly input rows.
/// Returns the rows and the first charted weight.
pub fn hourly_inputs(
    timeline: &StayTimeline,
    index: &SofaItemIndex,
    n_hours: usize,
) -> (Vec<HourInputs>, Option<f64>) {
    let mut rows = vec![HourInputs::default(); n_hours];
    let mut weight = None;
    for ev in timeline.timed() {
        if !matches!(ev.source, EventSource::Chart | EventSource::Lab) {
            continue;
        }
        let (Some(&input), Some(v), Some(t)) = (index.map.get(&ev.item), ev.value(), ev.hour())
        else {
            continue;
        };
        if input == Input::Weight {
            if weight.is_none() && v > 0.0 {
                weight = Some(v);
            }
            continue;
        }
        if t < 0.0 {
            continue;
        }
        let h = t.floor() as usize;
        if h < n_hours {
            rows[h].record(input, v);
        }
    }
    (rows, weight)
}

pub fn stay_hours(los_hours: f64) -> usize {
    (los_hours.ceil() as usize).max(1)
}

/// Score each hour from raw inputs, forward-filling within the stay.
pub fn compute_hourly_sofa(
    rows: &[HourInputs],
    weight_kg: Option<f64>,
    cfg: &SofaConfig,
) -> SofaSeries {
    let weight = weight_kg.unwrap_or(cfg.default_weight_kg);
    let mut carry = HourInputs::default();
    let mut gcs: Option<f64> = None;
    let mut urine_window: Vec<Option<f64>> = Vec::with_capacity(rows.len());
    let mut subscores = Vec::with_capacity(rows.len());
    let mut unscored = [0u32; 6];
    let mut pressors_seen = false;

    for (h, row) in rows.iter().enumerate() {
        macro_rules! ffill {
            ($($f:ident),*) => { $( if row.$f.is_some() { carry.$f = row.$f; } )* };
        }
        ffill!(
            pao2, fio2, platelets, bilirubin, map, gcs_eye, gcs_verbal, gcs_motor, creatinine,
            dopamine, dobutamine, epinephrine, norepinephrine
        );

        let components_now =
            row.gcs_eye.is_some() || row.gcs_verbal.is_some() || row.gcs_motor.is_some();
        let component_sum = match (carry.gcs_eye, carry.gcs_verbal, carry.gcs_motor) {
            (Some(e), Some(v), Some(m)) if components_now => Some(e + v + m),
            _ => None,
        };
        if let Some(g) = row.gcs_total.or(component_sum) {
            gcs = Some(g);
        }

        urine_window.push(row.urine);
        let urine_24h = if h >= 23 {
            let win = &urine_window[h - 23..=h];
            win.iter()
                .any(Option::is_some)
                .then(|| win.iter().flatten().sum())
        } else {
            None
        };

        let pf = match (carry.pao2, carry.fio2) {
            (Some(p), Some(f)) if f > 0.0 => Some(p / f),
            _ => None,
        };
        let pressor = |v: Option<f64>| v.map_or(0.0, |r| r / weight);
        let doses = VasopressorDoses {
            dopamine: pressor(carry.dopamine),
            dobutamine: pressor(carry.dobutamine),
            epinephrine: pressor(carry.epinephrine),
            norepinephrine: pressor(carry.norepinephrine),
        };
        let any_pressor = [
            carry.dopamine,
            carry.dobutamine,
            carry.epinephrine,
            carry.norepinephrine,
        ]
        .iter()
        .any(Option::is_some);
        pressors_seen |= any_pressor;

        let present = [
            pf.is_some(),
            carry.platelets.is_some(),
            carry.bilirubin.is_some(),
            carry.map.is_some() || any_pressor,
            gcs.is_some(),
            carry.creatinine.is_some() || urine_24h.is_some(),
        ];
        for (count, ok) in unscored.iter_mut().zip(present) {
            if !ok {
                *count += 1;
            }
        }

        subscores.push([
            pf.map_or(0, respiration_score),
            carry.platelets.map_or(0, coagulation_score),
            carry.bilirubin.map_or(0, liver_score),
            cardiovascular_score(carry.map, doses),
            gcs.map_or(0, cns_score),
            renal_score(carry.creatinine, urine_24h),
        ]);
    }

    let mut series = SofaSeries::from_subscores(subscores);
    series.unscored_hours = unscored;
    series.weight_defaulted = pressors_seen && weight_kg.is_none();
    series
}
