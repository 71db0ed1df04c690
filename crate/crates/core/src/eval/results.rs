use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Regime;
use crate::models::ModelKind;
use crate::types::YearBucket;

/// One test AUC for a (feature set, model, regime, test bucket, seed) cell.
/// `test_bucket` is `None` for the pooled year-agnostic test set. `auc` is
/// `None` when the test slice holds a single class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub feature_set: String,
    pub model: ModelKind,
    pub regime: Regime,
    #[serde(with = "bucket_or_all")]
    pub test_bucket: Option<YearBucket>,
    pub seed: u64,
    pub auc: Option<f64>,
    pub n_test: usize,
    pub n_pos: usize,
}

mod bucket_or_all {
    use super::YearBucket;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &Option<YearBucket>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(b.map_or("all", YearBucket::as_str))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<YearBucket>, D::Error> {
        let s = String::deserialize(d)?;
        if s == "all" {
            return Ok(None);
        }
        YearBucket::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .map(Some)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown bucket {s}")))
    }
}

/// Table column: pooled year-agnostic test set or one year-bucket test slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Column {
    YearAgnostic,
    Bucket(YearBucket),
}

impl Column {
    pub const ALL: [Column; 5] = [
        Column::YearAgnostic,
        Column::Bucket(YearBucket::Y2008),
        Column::Bucket(YearBucket::Y2011),
        Column::Bucket(YearBucket::Y2014),
        Column::Bucket(YearBucket::Y2017),
    ];

    pub fn of(r: &ExperimentResult) -> Option<Column> {
        match (r.regime, r.test_bucket) {
            (Regime::YearAgnostic, None) => Some(Column::YearAgnostic),
            (Regime::YearBucket, Some(b)) => Some(Column::Bucket(b)),
            _ => None,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Column::YearAgnostic => "Year-Agnostic",
            Column::Bucket(b) => b.as_str(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub mean: f64,
    /// Population standard deviation over seeds.
    pub std: f64,
    pub n_seeds: usize,
    pub n_test: usize,
}

/// Mean AUC over seeds per (feature set, model, column). Rows keep the order
/// in which (feature set, model) pairs first appear.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<(String, ModelKind)>,
    pub cells: BTreeMap<(usize, Column), CellSummary>,
}

impl ResultsTable {
    pub fn from_results(results: &[ExperimentResult]) -> Self {
        let mut rows: Vec<(String, ModelKind)> = Vec::new();
        let mut acc: BTreeMap<(usize, Column), (Vec<f64>, usize)> = BTreeMap::new();
        for r in results {
            let key = (r.feature_set.clone(), r.model);
            let row = match rows.iter().position(|k| *k == key) {
                Some(i) => i,
                None => {
                    rows.push(key);
                    rows.len() - 1
                }
            };
            let (Some(col), Some(auc)) = (Column::of(r), r.auc) else {
                continue;
            };
            let e = acc.entry((row, col)).or_default();
            e.0.push(auc);
            e.1 = e.1.max(r.n_test);
        }
        let cells = acc
            .into_iter()
            .map(|(k, (aucs, n_test))| {
                let n = aucs.len() as f64;
                let mean = aucs.iter().sum::<f64>() / n;
                let std = (aucs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
                (
                    k,
                    CellSummary {
                        mean,
                        std,
                        n_seeds: aucs.len(),
                        n_test,
                    },
                )
            })
            .collect();
        Self { rows, cells }
    }

    pub fn get(&self, feature_set: &str, model: ModelKind, col: Column) -> Option<&CellSummary> {
        let row = self.rows.iter().position(|(f, m)| f == feature_set && *m == model)?;
        self.cells.get(&(row, col))
    }

    /// Markdown table with one section per feature set. Cells show the seed
    /// mean, the seed spread and the test-set size.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("| Model |");
        for c in Column::ALL {
            let _ = write!(out, " {} |", c.title());
        }
        out.push_str("\n|---|");
        for _ in Column::ALL {
            out.push_str("---|");
        }
        out.push('\n');
        let mut current: Option<&str> = None;
        for (i, (fs, model)) in self.rows.iter().enumerate() {
            if current != Some(fs.as_str()) {
                let _ = writeln!(out, "| **{fs}** |{}", " |".repeat(Column::ALL.len()));
                current = Some(fs);
            }
            let name = match model {
                ModelKind::Rnn => "RNN",
                ModelKind::Logistic => "Logistic",
            };
            let _ = write!(out, "| {name} |");
            for c in Column::ALL {
                match self.cells.get(&(i, c)) {
                    Some(s) => {
                        let _ = write!(out, " {:.3} ± {:.3} (n={}) |", s.mean, s.std, s.n_test);
                    }
                    None => out.push_str(" n/a |"),
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn write_results_csv(path: &Path, results: &[ExperimentResult]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    for r in results {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ExperimentResult>, csv::Error> {
    csv::Reader::from_path(path)?.deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn res(fs: &str, model: ModelKind, regime: Regime, b: Option<YearBucket>, seed: u64, auc: f64) -> ExperimentResult {
        ExperimentResult {
            feature_set: fs.into(),
            model,
            regime,
            test_bucket: b,
            seed,
            auc: Some(auc),
            n_test: 40,
            n_pos: 10,
        }
    }

    fn grid() -> Vec<ExperimentResult> {
        let mut out = Vec::new();
        for fs in ["dascena", "epic"] {
            for model in [ModelKind::Rnn, ModelKind::Logistic] {
                for seed in 0..3 {
                    out.push(res(fs, model, Regime::YearAgnostic, None, seed, 0.7 + seed as f64 * 0.01));
                    for b in YearBucket::ALL {
                        out.push(res(fs, model, Regime::YearBucket, Some(b), seed, 0.6));
                    }
                }
            }
        }
        out
    }

    #[test]
    fn table_shape_and_means() {
        let t = ResultsTable::from_results(&grid());
        assert_eq!(t.rows.len(), 4);
        assert_eq!(t.cells.len(), 4 * 5);
        let c = t.get("epic", ModelKind::Logistic, Column::YearAgnostic).unwrap();
        assert!((c.mean - 0.71).abs() < 1e-12);
        assert_eq!(c.n_seeds, 3);
        let md = t.to_markdown();
        assert_eq!(md.lines().filter(|l| l.starts_with("| RNN") || l.starts_with("| Logistic")).count(), 4);
        assert!(md.contains("| 2017-2019 |"));
    }

    #[test]
    fn undefined_auc_is_left_out_of_the_mean() {
        let mut rs = grid();
        rs[0].auc = None;
        let t = ResultsTable::from_results(&rs);
        assert_eq!(t.get("dascena", ModelKind::Rnn, Column::YearAgnostic).unwrap().n_seeds, 2);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("results.csv");
        let mut rs = grid();
        rs[3].auc = None;
        write_results_csv(&p, &rs).unwrap();
        assert_eq!(read_results_csv(&p).unwrap(), rs);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("feature_set,model,regime,test_bucket,seed,auc,n_test,n_pos\n"));
        assert!(text.contains(",year_agnostic,all,"));
    }
}
