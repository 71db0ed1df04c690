use serde::{Deserialize, Serialize};

/// One vital sign or lab series. Values follow a mean-reverting walk around
/// `baseline + severity * severity_shift`, plus `sepsis_shift` ramped in
/// over the hours before a positive stay's deterioration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesSpec {
    pub item: String,
    pub table: SeriesTable,
    pub baseline: f64,
    pub noise: f64,
    #[serde(default)]
    pub severity_shift: f64,
    #[serde(default)]
    pub sepsis_shift: f64,
    /// Hours between measurements.
    #[serde(default = "one")]
    pub interval_h: f64,
    #[serde(default)]
    pub missing_prob: f64,
    #[serde(default = "neg_inf")]
    pub min: f64,
    #[serde(default = "pos_inf")]
    pub max: f64,
}

fn one() -> f64 {
    1.0
}
fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}
fn pos_inf() -> f64 {
    f64::INFINITY
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesTable {
    Chart,
    Lab,
}

/// Sparse count-type events (lines, drains, wounds, orders).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseSpec {
    pub item: String,
    pub table: SparseTable,
    /// Expected events per stay-hour at severity 0.
    pub rate_per_h: f64,
    /// Multiplicative rate change per unit severity, `exp(severity * k)`.
    #[serde(default)]
    pub severity_log_rate: f64,
    /// Drug name for prescriptions.
    #[serde(default)]
    pub drug: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SparseTable {
    Chart,
    Procedure,
    Prescription,
}

/// A chronic condition coded in `diagnoses_icd`. Its code changes
/// vocabulary at the ICD cutover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionSpec {
    pub name: String,
    pub icd9: String,
    pub icd10: String,
    pub prevalence: f64,
    /// Log-odds contribution to sepsis risk.
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_patients_per_bucket: usize,
    /// Target share of positive stays, per year bucket.
    pub prevalence: [f64; 4],
    /// Mean and standard deviation of the deterioration hour, per bucket.
    pub onset_mean_h: [f64; 4],
    pub onset_spread_h: [f64; 4],
    /// Multiplier on 9-17h culture draws, per bucket.
    pub microbio_daytime_rate: [f64; 4],
    /// Index of the first bucket that codes diagnoses in ICD-10 (0 means
    /// every bucket, 4 means none).
    pub icd_cutover_bucket: usize,
    pub los_mean_h: f64,
    /// Log-odds of sepsis per unit of the latent severity score.
    pub severity_coefficient: f64,
    /// Hours over which `sepsis_shift` ramps in before deterioration.
    pub pre_onset_ramp_h: f64,
    /// Routine (non-workup) cultures per stay-hour at night.
    pub culture_rate_per_h: f64,
    /// Daytime culture rate relative to night before the bucket multiplier.
    pub daytime_culture_factor: f64,
    /// Share of negative stays that get a full infection workup.
    pub control_workup_prob: f64,
    pub mortality_prob: f64,
    pub specimen_types: Vec<(String, f64)>,
    pub series: Vec<SeriesSpec>,
    pub sparse: Vec<SparseSpec>,
    pub conditions: Vec<ConditionSpec>,
    /// Diagnosis codes unrelated to the outcome, as (icd9, icd10, prevalence).
    pub background_codes: Vec<(String, String, f64)>,
}

fn series(item: &str, table: SeriesTable, baseline: f64, noise: f64, severity_shift: f64, sepsis_shift: f64, interval_h: f64) -> SeriesSpec {
    SeriesSpec {
        item: item.into(),
        table,
        baseline,
        noise,
        severity_shift,
        sepsis_shift,
        interval_h,
        missing_prob: 0.15,
        min: f64::NEG_INFINITY,
        max: f64::INFINITY,
    }
}

fn sparse(item: &str, table: SparseTable, rate_per_h: f64, severity_log_rate: f64, drug: Option<&str>) -> SparseSpec {
    SparseSpec {
        item: item.into(),
        table,
        rate_per_h,
        severity_log_rate,
        drug: drug.map(String::from),
    }
}

fn condition(name: &str, icd9: &str, icd10: &str, prevalence: f64, coefficient: f64) -> ConditionSpec {
    ConditionSpec {
        name: name.into(),
        icd9: icd9.into(),
        icd10: icd10.into(),
        prevalence,
        coefficient,
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        use SeriesTable::{Chart, Lab};
        use SparseTable::{Chart as SChart, Prescription, Procedure};
        let mut vitals = vec![
            series("220045", Chart, 85.0, 6.0, 6.0, 8.0, 1.0),
            series("220179", Chart, 122.0, 8.0, -5.0, -8.0, 1.0),
            series("220180", Chart, 66.0, 6.0, -3.0, -5.0, 1.0),
            series("220052", Chart, 84.0, 4.0, -2.0, -2.0, 1.0),
            series("223762", Chart, 37.0, 0.25, 0.25, 0.5, 2.0),
            series("220210", Chart, 17.0, 2.0, 1.5, 3.0, 1.0),
            series("220277", Chart, 97.0, 1.0, -0.6, -1.0, 1.0),
            series("220546", Chart, 9.0, 1.5, 1.2, 3.0, 12.0),
            series("220545", Chart, 33.0, 2.0, -1.0, -1.0, 12.0),
            series("220228", Chart, 11.0, 0.8, -0.3, -0.4, 12.0),
            series("227457", Chart, 240.0, 30.0, -10.0, -15.0, 12.0),
            series("220615", Chart, 0.8, 0.08, 0.0, 0.0, 12.0),
            series("51144", Lab, 2.0, 1.0, 1.0, 3.0, 24.0),
            series("50802", Lab, 0.0, 1.5, -0.8, -2.0, 12.0),
            series("51244", Lab, 20.0, 4.0, -2.0, -4.0, 24.0),
            series("51249", Lab, 33.5, 0.8, 0.0, 0.0, 24.0),
            series("51254", Lab, 6.0, 1.5, 0.0, 0.0, 24.0),
            series("51256", Lab, 70.0, 6.0, 3.0, 6.0, 24.0),
            series("52204", Lab, 14.5, 1.0, 0.4, 0.5, 24.0),
        ];
        for v in &mut vitals {
            match v.item.as_str() {
                "220277" => v.max = 100.0,
                // Kept within normal ranges so SOFA stays at zero until
                // the workup labs.
                "220052" => v.min = 72.0,
                "227457" => v.min = 160.0,
                "220615" => v.max = 1.1,
                "51144" | "51244" | "51254" | "51256" | "220546" => v.min = 0.0,
                _ => {}
            }
        }
        Self {
            seed: 0,
            n_patients_per_bucket: 500,
            prevalence: [0.2; 4],
            onset_mean_h: [9.0; 4],
            onset_spread_h: [2.5; 4],
            microbio_daytime_rate: [1.0; 4],
            icd_cutover_bucket: 2,
            los_mean_h: 48.0,
            severity_coefficient: 0.8,
            pre_onset_ramp_h: 12.0,
            culture_rate_per_h: 0.02,
            daytime_culture_factor: 1.5,
            control_workup_prob: 0.15,
            mortality_prob: 0.08,
            specimen_types: vec![
                ("BLOOD CULTURE".into(), 0.30),
                ("URINE".into(), 0.25),
                ("SWAB".into(), 0.12),
                ("MRSA SCREEN".into(), 0.10),
                ("SPUTUM".into(), 0.10),
                ("STOOL".into(), 0.08),
                ("CATHETER TIP-IV".into(), 0.05),
            ],
            series: vitals,
            sparse: vec![
                sparse("224264", Procedure, 0.004, 0.4, None),
                sparse("225315", Procedure, 0.006, 0.5, None),
                sparse("225447", Procedure, 0.003, 0.2, None),
                sparse("224007", SChart, 0.01, 0.2, None),
                sparse("227472", SChart, 0.004, 0.0, None),
                sparse("228506", SChart, 0.003, 0.3, None),
                sparse("008880", Prescription, 0.002, 0.3, Some("Penicillin G Potassium")),
                sparse("043952", Prescription, 0.004, 0.3, Some("Vancomycin")),
            ],
            conditions: vec![
                condition("congestive heart failure", "4280", "I5023", 0.20, 1.2),
                condition("atrial fibrillation", "42731", "I480", 0.15, 0.9),
                condition("diabetes", "25000", "E119", 0.22, 0.5),
                condition("hypertension", "4019", "I10", 0.35, 0.2),
                condition("copd", "496", "J449", 0.10, 0.5),
                condition("hypertensive ckd", "40390", "I129", 0.10, 0.6),
                condition("obesity", "27800", "E669", 0.12, 0.3),
                condition("coronary artery disease", "41400", "I2510", 0.18, 0.2),
                condition("chronic liver disease", "5719", "K760", 0.05, 0.6),
            ],
            background_codes: vec![
                ("2724".into(), "E785".into(), 0.25),
                ("5849".into(), "N179".into(), 0.15),
                ("2449".into(), "E039".into(), 0.10),
                ("53081".into(), "K219".into(), 0.15),
                ("3051".into(), "F17210".into(), 0.12),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthConfigError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Toml(String),
}

fn invalid(msg: impl Into<String>) -> SynthConfigError {
    SynthConfigError::Invalid(msg.into())
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self, SynthConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| SynthConfigError::Toml(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SynthConfigError> {
        if self.n_patients_per_bucket == 0 {
            return Err(invalid("n_patients_per_bucket must be positive"));
        }
        for (i, p) in self.prevalence.iter().enumerate() {
            if !(*p > 0.0 && *p < 1.0) {
                return Err(invalid(format!("prevalence[{i}] = {p} must lie in (0, 1)")));
            }
        }
        for i in 0..4 {
            let (m, s) = (self.onset_mean_h[i], self.onset_spread_h[i]);
            if !(m > crate::cohort::MIN_ONSET_HOURS && m < 180.0) || !(s > 0.0) {
                return Err(invalid(format!(
                    "onset_mean_h[{i}] must lie in (6, 180) and onset_spread_h[{i}] must be positive"
                )));
            }
            if !(self.microbio_daytime_rate[i] >= 0.0) {
                return Err(invalid(format!("microbio_daytime_rate[{i}] must be >= 0")));
            }
        }
        if self.icd_cutover_bucket > 4 {
            return Err(invalid("icd_cutover_bucket must be in 0..=4"));
        }
        if !(self.los_mean_h >= 24.0 && self.los_mean_h <= 240.0) {
            return Err(invalid("los_mean_h must lie in [24, 240]"));
        }
        let rates = [
            ("culture_rate_per_h", self.culture_rate_per_h),
            ("daytime_culture_factor", self.daytime_culture_factor),
            ("pre_onset_ramp_h", self.pre_onset_ramp_h),
        ];
        for (name, v) in rates {
            if !(v >= 0.0) {
                return Err(invalid(format!("{name} must be >= 0")));
            }
        }
        for (name, p) in [("control_workup_prob", self.control_workup_prob), ("mortality_prob", self.mortality_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("{name} must lie in [0, 1]")));
            }
        }
        let texts = self
            .specimen_types
            .iter()
            .map(|(s, _)| s.as_str())
            .chain(self.series.iter().map(|s| s.item.as_str()))
            .chain(self.sparse.iter().flat_map(|s| [Some(s.item.as_str()), s.drug.as_deref()]).flatten())
            .chain(self.conditions.iter().flat_map(|c| [c.icd9.as_str(), c.icd10.as_str()]))
            .chain(self.background_codes.iter().flat_map(|(a, b, _)| [a.as_str(), b.as_str()]));
        for t in texts {
            if t.is_empty() || t.contains([',', '"', '\n', '\r']) {
                return Err(invalid(format!("{t:?} must be non-empty and free of commas, quotes and newlines")));
            }
        }
        if self.specimen_types.is_empty() || self.specimen_types.iter().any(|(_, w)| !(*w >= 0.0)) {
            return Err(invalid("specimen_types needs at least one entry with non-negative weight"));
        }
        for s in &self.series {
            if !(s.interval_h > 0.0) || !(s.noise >= 0.0) || !(0.0..1.0).contains(&s.missing_prob) {
                return Err(invalid(format!("series {}: interval_h > 0, noise >= 0, missing_prob in [0, 1)", s.item)));
            }
        }
        for s in &self.sparse {
            if !(s.rate_per_h >= 0.0) {
                return Err(invalid(format!("sparse item {}: rate_per_h must be >= 0", s.item)));
            }
        }
        for c in &self.conditions {
            if !(0.0..=1.0).contains(&c.prevalence) {
                return Err(invalid(format!("condition {}: prevalence must lie in [0, 1]", c.name)));
            }
        }
        for (a, b, p) in &self.background_codes {
            if !(0.0..=1.0).contains(p) {
                return Err(invalid(format!("background code {a}/{b}: prevalence must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Scale daytime culture draws in one bucket.
pub fn inject_microbio_shift(cfg: &SynthConfig, bucket: usize, daytime_multiplier: f64) -> Result<SynthConfig, SynthConfigError> {
    if !(daytime_multiplier >= 0.0) {
        return Err(invalid("daytime multiplier must be >= 0"));
    }
    if bucket >= 4 {
        return Err(invalid("bucket index must be in 0..4"));
    }
    let mut out = cfg.clone();
    out.microbio_daytime_rate[bucket] *= daytime_multiplier;
    Ok(out)
}

/// Code diagnoses in ICD-10 from bucket `boundary` onwards.
pub fn inject_icd_cutover(cfg: &SynthConfig, boundary: usize) -> Result<SynthConfig, SynthConfigError> {
    if boundary > 4 {
        return Err(invalid("cutover boundary must be in 0..=4"));
    }
    let mut out = cfg.clone();
    out.icd_cutover_bucket = boundary;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = SynthConfig::default();
        cfg.validate().unwrap();
        let back = SynthConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = SynthConfig::from_toml("seed = 9\nn_patients_per_bucket = 10\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.conditions, SynthConfig::default().conditions);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(SynthConfig::from_toml("prevalence = [0.2, 0.2, 1.0, 0.2]").is_err());
        assert!(SynthConfig::from_toml("icd_cutover_bucket = 5").is_err());
        assert!(SynthConfig::from_toml("unknown_key = 1").is_err());
    }

    #[test]
    fn injections() {
        let cfg = SynthConfig::default();
        assert_eq!(inject_microbio_shift(&cfg, 3, 1.0).unwrap(), cfg);
        assert_eq!(inject_microbio_shift(&cfg, 3, 0.5).unwrap().microbio_daytime_rate[3], 0.5);
        assert!(inject_microbio_shift(&cfg, 3, -0.1).is_err());
        assert_eq!(inject_icd_cutover(&cfg, 0).unwrap().icd_cutover_bucket, 0);
        assert!(inject_icd_cutover(&cfg, 5).is_err());
    }
}
