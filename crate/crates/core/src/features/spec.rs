use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::types::{EventSource, IcdVersion};

const DASCENA: &str = include_str!("../../featuresets/dascena.toml");
const EPIC: &str = include_str!("../../featuresets/epic.toml");
const EPIC_MINUS_ICD: &str = include_str!("../../featuresets/epic_minus_icd.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Average of all in-hour values (vitals, labs).
    Mean,
    /// Sum of in-hour values; valueless events count 1 (orders, drains, sites).
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticSource {
    Patients,
    Admissions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticEncoding {
    Numeric,
    OneHot,
}

/// The demographic fields a static feature may read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticField {
    Age,
    Gender,
    Ethnicity,
    MaritalStatus,
}

impl StaticField {
    pub fn as_str(self) -> &'static str {
        match self {
            StaticField::Age => "age",
            StaticField::Gender => "gender",
            StaticField::Ethnicity => "ethnicity",
            StaticField::MaritalStatus => "marital_status",
        }
    }

    fn source(self) -> StaticSource {
        match self {
            StaticField::Age | StaticField::Gender => StaticSource::Patients,
            StaticField::Ethnicity | StaticField::MaritalStatus => StaticSource::Admissions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HourlyFeature {
    pub name: String,
    pub source: EventSource,
    pub aggregation: Aggregation,
    pub items: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticFeature {
    pub name: StaticField,
    pub source: StaticSource,
    pub encoding: StaticEncoding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcdCode {
    pub code: String,
    #[serde(with = "icd_version_number")]
    pub version: IcdVersion,
}

mod icd_version_number {
    use super::IcdVersion;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &IcdVersion, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(v.number())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<IcdVersion, D::Error> {
        let n = u8::deserialize(d)?;
        IcdVersion::from_number(n)
            .ok_or_else(|| serde::de::Error::custom(format!("icd version must be 9 or 10, got {n}")))
    }
}

/// A chronic-condition flag derived from diagnosis codes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcdFeature {
    pub name: String,
    pub codes: Vec<IcdCode>,
}

impl IcdFeature {
    /// Category-level prefix match with matching vocabulary version.
    pub fn matches(&self, code: &str, version: IcdVersion) -> bool {
        self.codes
            .iter()
            .any(|c| c.version == version && code.starts_with(c.code.as_str()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSetKind {
    Dascena,
    Epic,
    EpicMinusIcd,
    Custom,
}

/// Named registry of hourly, static and ICD features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSetSpec {
    pub name: String,
    #[serde(default)]
    pub hourly: Vec<HourlyFeature>,
    #[serde(default, rename = "static")]
    pub static_features: Vec<StaticFeature>,
    #[serde(default, rename = "icd")]
    pub icd_features: Vec<IcdFeature>,
}

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error("feature set {0:?} is not built in (expected dascena, epic or epic_minus_icd)")]
    UnknownBuiltin(String),
    #[error("cannot read feature set {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid feature set: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("feature set {set}: {message}")]
    Invalid { set: String, message: String },
}

impl FeatureSetSpec {
    pub fn builtin(name: &str) -> Result<Self, SpecError> {
        let text = match name {
            "dascena" => DASCENA,
            "epic" => EPIC,
            "epic_minus_icd" => EPIC_MINUS_ICD,
            other => return Err(SpecError::UnknownBuiltin(other.to_string())),
        };
        Self::from_toml(text)
    }

    /// A built-in name, or otherwise a path to a TOML spec.
    pub fn resolve(name_or_path: &str) -> Result<Self, SpecError> {
        match Self::builtin(name_or_path) {
            Ok(s) => Ok(s),
            Err(SpecError::UnknownBuiltin(_)) => Self::from_path(Path::new(name_or_path)),
            Err(e) => Err(e),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, SpecError> {
        let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, SpecError> {
        let spec: FeatureSetSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("feature set serializes")
    }

    pub fn kind(&self) -> FeatureSetKind {
        match self.name.as_str() {
            "dascena" => FeatureSetKind::Dascena,
            "epic" => FeatureSetKind::Epic,
            "epic_minus_icd" => FeatureSetKind::EpicMinusIcd,
            _ => FeatureSetKind::Custom,
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let invalid = |message: String| SpecError::Invalid {
            set: self.name.clone(),
            message,
        };
        for s in &self.static_features {
            if s.name.source() != s.source {
                return Err(invalid(format!(
                    "static feature {} must come from {:?}",
                    s.name.as_str(),
                    s.name.source()
                )));
            }
            if s.name == StaticField::Age && s.encoding != StaticEncoding::Numeric {
                return Err(invalid("age must use numeric encoding".into()));
            }
            if s.name != StaticField::Age && s.encoding != StaticEncoding::OneHot {
                return Err(invalid(format!("{} must use one_hot encoding", s.name.as_str())));
            }
        }
        for h in &self.hourly {
            if h.source == EventSource::Diagnosis || h.source == EventSource::Microbiology {
                return Err(invalid(format!("hourly feature {} cannot read {}", h.name, h.source)));
            }
        }
        // Uniqueness is checked by building the registry.
        crate::ingest::build_item_registry(self).map_err(|e| invalid(e.to_string()))?;
        Ok(())
    }

    /// The same spec with every ICD-derived feature removed.
    pub fn without_icd(&self) -> Self {
        let name = if self.kind() == FeatureSetKind::Epic {
            "epic_minus_icd".to_string()
        } else {
            format!("{}_minus_icd", self.name)
        };
        Self {
            name,
            icd_features: Vec::new(),
            ..self.clone()
        }
    }

    pub fn n_hourly(&self) -> usize {
        self.hourly.len()
    }

    pub fn hourly_names(&self) -> Vec<String> {
        self.hourly.iter().map(|h| h.name.clone()).collect()
    }
}

impl fmt::Display for FeatureSetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}
