use serde::{Deserialize, Serialize};

/// Concomitance windows for antibiotic/culture pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SoiConfig {
    /// Culture first: antibiotic must follow within this many hours.
    pub abx_window_h: f64,
    /// Antibiotic first: culture must follow within this many hours.
    pub culture_window_h: f64,
}

impl Default for SoiConfig {
    fn default() -> Self {
        Self {
            abx_window_h: 72.0,
            culture_window_h: 24.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BaselineRule {
    /// Hour-0 total.
    #[default]
    FirstHour,
    /// Minimum total over the preceding `rolling_min_hours`. Not the
    /// published definition; offered for sensitivity runs.
    RollingMin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SofaConfig {
    pub window_pre_h: f64,
    pub window_post_h: f64,
    pub delta: u8,
    pub baseline: BaselineRule,
    pub rolling_min_hours: usize,
    /// Used for vasopressor dosing when no weight is charted.
    pub default_weight_kg: f64,
}

impl Default for SofaConfig {
    fn default() -> Self {
        Self {
            window_pre_h: 48.0,
            window_post_h: 24.0,
            delta: 2,
            baseline: BaselineRule::FirstHour,
            rolling_min_hours: 24,
            default_weight_kg: 80.0,
        }
    }
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Item IDs feeding each SOFA input.
///
/// Vasopressor values are infusion rates in mcg/min and are divided by body
/// weight; FiO2 above 1 is read as a percentage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SofaItems {
    pub pao2: Vec<String>,
    pub fio2: Vec<String>,
    pub platelets: Vec<String>,
    pub bilirubin: Vec<String>,
    pub mean_arterial_pressure: Vec<String>,
    pub gcs_total: Vec<String>,
    pub gcs_eye: Vec<String>,
    pub gcs_verbal: Vec<String>,
    pub gcs_motor: Vec<String>,
    pub creatinine: Vec<String>,
    pub urine_output: Vec<String>,
    pub dopamine: Vec<String>,
    pub dobutamine: Vec<String>,
    pub epinephrine: Vec<String>,
    pub norepinephrine: Vec<String>,
    pub weight: Vec<String>,
}

impl Default for SofaItems {
    fn default() -> Self {
        Self {
            pao2: strings(&["50821", "779"]),
            fio2: strings(&["223835", "50816", "3420", "190"]),
            platelets: strings(&["51265", "227457", "828"]),
            bilirubin: strings(&["50885", "225690", "848"]),
            mean_arterial_pressure: strings(&["220052", "220181", "225312", "456", "52"]),
            gcs_total: strings(&["198"]),
            gcs_eye: strings(&["220739"]),
            gcs_verbal: strings(&["223900"]),
            gcs_motor: strings(&["223901"]),
            creatinine: strings(&["50912", "220615", "1525", "791"]),
            urine_output: strings(&["226559", "226560"]),
            dopamine: strings(&["221662"]),
            dobutamine: strings(&["221653"]),
            epinephrine: strings(&["221289"]),
            norepinephrine: strings(&["221906"]),
            weight: strings(&["226512", "224639", "762"]),
        }
    }
}

/// Antibiotic identification: exact GSN codes, or case-insensitive
/// substrings of the drug name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AntibioticList {
    pub gsn: Vec<String>,
    pub names: Vec<String>,
}

impl Default for AntibioticList {
    fn default() -> Self {
        Self {
            gsn: strings(&[
                "008880", "043350", "043952", "009331", "009328", "009329", "067111", "020611",
            ]),
            names: strings(&[
                "vancomycin",
                "penicillin",
                "piperacillin",
                "cefepime",
                "ceftriaxone",
                "cefazolin",
                "ceftazidime",
                "meropenem",
                "imipenem",
                "ertapenem",
                "levofloxacin",
                "ciprofloxacin",
                "azithromycin",
                "metronidazole",
                "clindamycin",
                "linezolid",
                "daptomycin",
                "gentamicin",
                "tobramycin",
                "ampicillin",
                "nafcillin",
                "oxacillin",
                "sulfamethoxazole",
                "doxycycline",
            ]),
        }
    }
}

impl AntibioticList {
    pub fn matches(&self, item_or_name: &str) -> bool {
        if self.gsn.iter().any(|g| g == item_or_name) {
            return true;
        }
        let lower = item_or_name.to_ascii_lowercase();
        self.names.iter().any(|n| lower.contains(&n.to_ascii_lowercase()))
    }
}

/// Everything the labelling stage reads from its config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct LabelConfig {
    pub soi: SoiConfig,
    pub sofa: SofaConfig,
    pub sofa_items: SofaItems,
    pub antibiotics: AntibioticList,
}

impl LabelConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("label config serializes")
    }
}
