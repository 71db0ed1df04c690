use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{FeatureSetSpec, IcdFeature, StaticEncoding, StaticFeature, StaticField, StaticKind};
use crate::types::IcdVersion;

/// Per-stay demographic inputs to the static vector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    pub age: f64,
    pub gender: Option<String>,
    pub ethnicity: Option<String>,
    pub marital_status: Option<String>,
}

impl Demographics {
    fn categorical(&self, field: StaticField) -> Option<&str> {
        match field {
            StaticField::Age => None,
            StaticField::Gender => self.gender.as_deref(),
            StaticField::Ethnicity => self.ethnicity.as_deref(),
            StaticField::MaritalStatus => self.marital_status.as_deref(),
        }
    }
}

/// Static vector layout: spec static features in order (one-hot fields
/// expanded over a frozen vocabulary), then one flag per ICD feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticEncoder {
    features: Vec<StaticFeature>,
    vocabularies: Vec<Vec<String>>,
    icd: Vec<IcdFeature>,
}

impl StaticEncoder {
    /// Freeze one-hot vocabularies from the training stays.
    pub fn fit<'a>(spec: &FeatureSetSpec, train: impl IntoIterator<Item = &'a Demographics>) -> Self {
        let mut seen: Vec<BTreeSet<String>> = vec![BTreeSet::new(); spec.static_features.len()];
        for demo in train {
            for (i, f) in spec.static_features.iter().enumerate() {
                if f.encoding == StaticEncoding::OneHot {
                    if let Some(v) = demo.categorical(f.name) {
                        seen[i].insert(v.to_string());
                    }
                }
            }
        }
        Self {
            features: spec.static_features.clone(),
            vocabularies: seen.into_iter().map(|s| s.into_iter().collect()).collect(),
            icd: spec.icd_features.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.features
            .iter()
            .zip(&self.vocabularies)
            .map(|(f, v)| match f.encoding {
                StaticEncoding::Numeric => 1,
                StaticEncoding::OneHot => v.len(),
            })
            .sum::<usize>()
            + self.icd.len()
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dim());
        for (f, vocab) in self.features.iter().zip(&self.vocabularies) {
            match f.encoding {
                StaticEncoding::Numeric => out.push(f.name.as_str().to_string()),
                StaticEncoding::OneHot => {
                    out.extend(vocab.iter().map(|v| format!("{}={v}", f.name.as_str())))
                }
            }
        }
        out.extend(self.icd.iter().map(|f| format!("icd:{}", f.name)));
        out
    }

    pub fn kinds(&self) -> Vec<StaticKind> {
        let mut out = Vec::with_capacity(self.dim());
        for (f, vocab) in self.features.iter().zip(&self.vocabularies) {
            match f.encoding {
                StaticEncoding::Numeric => out.push(StaticKind::Numeric),
                StaticEncoding::OneHot => out.extend(std::iter::repeat_n(StaticKind::OneHot, vocab.len())),
            }
        }
        out.extend(std::iter::repeat_n(StaticKind::Icd, self.icd.len()));
        out
    }

    /// Columns that are standardized (numeric demographics).
    pub fn numeric_mask(&self) -> Vec<bool> {
        self.kinds().into_iter().map(|k| k == StaticKind::Numeric).collect()
    }

    pub fn encode<'a>(
        &self,
        demo: &Demographics,
        diagnoses: impl IntoIterator<Item = (&'a str, IcdVersion)> + Clone,
    ) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for (f, vocab) in self.features.iter().zip(&self.vocabularies) {
            match f.encoding {
                StaticEncoding::Numeric => out.push(match f.name {
                    StaticField::Age => demo.age,
                    _ => 0.0,
                }),
                StaticEncoding::OneHot => {
                    let v = demo.categorical(f.name);
                    out.extend(vocab.iter().map(|w| (Some(w.as_str()) == v) as u8 as f64));
                }
            }
        }
        for feat in &self.icd {
            let hit = diagnoses
                .clone()
                .into_iter()
                .any(|(code, version)| feat.matches(code, version));
            out.push(hit as u8 as f64);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo(g: &str, e: &str) -> Demographics {
        Demographics {
            age: 61.0,
            gender: Some(g.into()),
            ethnicity: Some(e.into()),
            marital_status: None,
        }
    }

    fn flag(enc: &StaticEncoder, v: &[f64], name: &str) -> f64 {
        let i = enc.names().iter().position(|n| n == name).unwrap();
        v[i]
    }

    #[test]
    fn icd_prefix_flags() {
        let spec = FeatureSetSpec::builtin("epic").unwrap();
        let enc = StaticEncoder::fit(&spec, [&demo("F", "WHITE")]);
        let v = enc.encode(&demo("F", "WHITE"), [("E1165", IcdVersion::Icd10)]);
        assert_eq!(flag(&enc, &v, "icd:Diabetes"), 1.0);
        let v = enc.encode(&demo("F", "WHITE"), [("42", IcdVersion::Icd9)]);
        assert_eq!(flag(&enc, &v, "icd:HIV"), 1.0);
        let v = enc.encode(&demo("F", "WHITE"), [("E11", IcdVersion::Icd9)]);
        assert_eq!(flag(&enc, &v, "icd:Diabetes"), 0.0);
    }

    #[test]
    fn one_hot_frozen_vocabulary() {
        let spec = FeatureSetSpec::builtin("epic").unwrap();
        let enc = StaticEncoder::fit(&spec, [&demo("F", "WHITE"), &demo("M", "ASIAN")]);
        let v = enc.encode(&demo("X", "OTHER"), std::iter::empty());
        assert_eq!(flag(&enc, &v, "gender=F") + flag(&enc, &v, "gender=M"), 0.0);
        assert_eq!(flag(&enc, &v, "age"), 61.0);
        assert_eq!(v.len(), enc.dim());
        assert_eq!(enc.numeric_mask().iter().filter(|&&m| m).count(), 1);
    }

    #[test]
    fn minus_icd_dimension() {
        let epic = FeatureSetSpec::builtin("epic").unwrap();
        let minus = FeatureSetSpec::builtin("epic_minus_icd").unwrap();
        let train = [demo("F", "WHITE"), demo("M", "BLACK")];
        let a = StaticEncoder::fit(&epic, &train);
        let b = StaticEncoder::fit(&minus, &train);
        assert_eq!(b.dim(), a.dim() - epic.icd_features.len());
        assert!(!b.names().iter().any(|n| n.starts_with("icd:")));
    }

    #[test]
    fn dascena_static_is_age_only() {
        let spec = FeatureSetSpec::builtin("dascena").unwrap();
        let enc = StaticEncoder::fit(&spec, [&demo("F", "WHITE")]);
        assert_eq!(enc.names(), vec!["age".to_string()]);
    }
}
