//! Python bindings for the `sepsis_drift` pipeline.
//!
//! Stage functions mirror the CLI subcommands and return the stage record
//! as a dict. Bad inputs raise `ValueError`; internal failures raise
//! `RuntimeError`.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;
use serde::Serialize;

use sepsis_drift::drift::DEFAULT_TOP_N;
use sepsis_drift::eval::{Regime, SplitRatios};
use sepsis_drift::features::FeatureSetSpec;
use sepsis_drift::ingest::LabJoin;
use sepsis_drift::models::{ModelKind, TrainConfig};
use sepsis_drift::pipeline::{
    self as stages, DriftOptions, EvaluateOptions, ExtractOptions, IngestOptions, LabelOptions, PipelineError,
    TrainOptions, CHECKPOINT_FILE, SPLIT_FILE,
};
use sepsis_drift::sepsis::sofa::SofaSeries;
use sepsis_drift::sepsis::{LabelConfig, SofaConfig, SoiConfig, SuspicionOfInfection};
use sepsis_drift::synth::SynthConfig;
use sepsis_drift::types::{Task, YearBucket};

fn stage_err(e: PipelineError) -> PyErr {
    if e.is_user() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse<T: FromStr>(s: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(value_err)
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> PyResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| value_err(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| value_err(format!("{}: {e}", path.display())))
}

/// Serialize through JSON and hand the result to Python's `json.loads`.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Generate synthetic MIMIC-shaped tables into `out`.
#[pyfunction]
#[pyo3(signature = (out, config=None, seed=None, force=false))]
fn synth_gen<'py>(
    py: Python<'py>,
    out: PathBuf,
    config: Option<PathBuf>,
    seed: Option<u64>,
    force: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = match config {
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|e| value_err(format!("{}: {e}", p.display())))?;
            SynthConfig::from_toml(&text).map_err(value_err)?
        }
        None => SynthConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let rec = py.detach(|| stages::run_synth(&cfg, &out, force)).map_err(stage_err)?;
    to_py(py, &rec)
}

#[pyfunction]
#[pyo3(signature = (tables, out, lab_join="admission", all_items=false, force=false))]
fn ingest<'py>(
    py: Python<'py>,
    tables: PathBuf,
    out: PathBuf,
    lab_join: &str,
    all_items: bool,
    force: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let opts = IngestOptions {
        lab_join: parse::<LabJoin>(lab_join)?,
        keep_items: if all_items { None } else { IngestOptions::default().keep_items },
        force,
    };
    let rec = py.detach(|| stages::run_ingest(&tables, &out, &opts)).map_err(stage_err)?;
    to_py(py, &rec)
}

#[pyfunction]
#[pyo3(signature = (ingest, out, config=None, task="sepsis", seed=0, force=false))]
fn label<'py>(
    py: Python<'py>,
    ingest: PathBuf,
    out: PathBuf,
    config: Option<PathBuf>,
    task: &str,
    seed: u64,
    force: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let opts = LabelOptions {
        config: match config {
            Some(p) => read_toml(&p)?,
            None => LabelConfig::default(),
        },
        task: parse::<Task>(task)?,
        seed,
        force,
    };
    let rec = py.detach(|| stages::run_label(&ingest, &out, &opts)).map_err(stage_err)?;
    to_py(py, &rec)
}

#[pyfunction]
#[pyo3(signature = (ingest, labels, feature_set, out, task="sepsis", force=false))]
fn extract_features<'py>(
    py: Python<'py>,
    ingest: PathBuf,
    labels: PathBuf,
    feature_set: &str,
    out: PathBuf,
    task: &str,
    force: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let opts = ExtractOptions {
        spec: FeatureSetSpec::resolve(feature_set).map_err(value_err)?,
        task: parse::<Task>(task)?,
        force,
    };
    let rec = py
        .detach(|| stages::run_extract_features(&ingest, &labels, &out, &opts))
        .map_err(stage_err)?;
    to_py(py, &rec)
}

#[pyfunction]
#[pyo3(signature = (features, out, model, regime="year_agnostic", config=None, split=(0.7, 0.15, 0.15), seed=None, force=false))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    features: PathBuf,
    out: PathBuf,
    model: &str,
    regime: &str,
    config: Option<PathBuf>,
    split: (f64, f64, f64),
    seed: Option<u64>,
    force: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg: TrainConfig = match config {
        Some(p) => read_toml(&p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let ratios = SplitRatios {
        train: split.0,
        val: split.1,
        test: split.2,
    };
    ratios.validate().map_err(value_err)?;
    let opts = TrainOptions {
        model: parse::<ModelKind>(model)?,
        regime: parse::<Regime>(regime)?,
        ratios,
        config: cfg,
        force,
    };
    let rec = py.detach(|| stages::run_train(&features, &out, &opts)).map_err(stage_err)?;
    to_py(py, &rec)
}

/// Score the test stays recorded in `model_dir` (as written by `train`).
#[pyfunction]
#[pyo3(signature = (features, model_dir, out, force=false))]
fn evaluate<'py>(
    py: Python<'py>,
    features: PathBuf,
    model_dir: PathBuf,
    out: PathBuf,
    force: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let rec = py
        .detach(|| {
            stages::run_evaluate(
                &features,
                &model_dir.join(CHECKPOINT_FILE),
                &model_dir.join(SPLIT_FILE),
                &out,
                &EvaluateOptions { force },
            )
        })
        .map_err(stage_err)?;
    to_py(py, &rec)
}

#[pyfunction]
#[pyo3(signature = (labels, events, out, top_n=DEFAULT_TOP_N, force=false))]
fn drift_report<'py>(
    py: Python<'py>,
    labels: PathBuf,
    events: PathBuf,
    out: PathBuf,
    top_n: usize,
    force: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let opts = DriftOptions {
        top_n,
        force,
        ..DriftOptions::default()
    };
    let rec = py
        .detach(|| stages::run_drift_report(&labels, &events, &out, &opts))
        .map_err(stage_err)?;
    to_py(py, &rec)
}

/// Parsed experiment config.
#[pyclass(module = "sepsis_drift_py", skip_from_py_object)]
#[derive(Clone)]
struct ExperimentConfig {
    inner: stages::ExperimentConfig,
}

#[pymethods]
impl ExperimentConfig {
    #[staticmethod]
    fn from_path(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: stages::ExperimentConfig::from_path(&path).map_err(stage_err)?,
        })
    }

    /// Parse TOML text; relative paths resolve against `base`.
    #[staticmethod]
    #[pyo3(signature = (text, base=None))]
    fn from_toml(text: &str, base: Option<PathBuf>) -> PyResult<Self> {
        Ok(Self {
            inner: stages::ExperimentConfig::from_toml(text, &base.unwrap_or_else(|| PathBuf::from("."))).map_err(stage_err)?,
        })
    }

    fn override_seed(&mut self, seed: u64) {
        self.inner.override_seed(seed);
    }

    #[getter]
    fn seeds(&self) -> Vec<u64> {
        self.inner.seeds.clone()
    }

    #[getter]
    fn feature_sets(&self) -> Vec<String> {
        self.inner.feature_sets.iter().map(|f| f.name.clone()).collect()
    }

    #[getter]
    fn models(&self) -> Vec<String> {
        self.inner.models.iter().map(|m| m.to_string()).collect()
    }

    #[getter]
    fn regimes(&self) -> Vec<String> {
        self.inner.regimes.iter().map(|r| r.to_string()).collect()
    }

    fn sha256(&self) -> String {
        self.inner.sha256()
    }

    /// Run every stage into `run_dir` and return the run manifest.
    #[pyo3(signature = (run_dir, force=false))]
    fn run<'py>(&self, py: Python<'py>, run_dir: PathBuf, force: bool) -> PyResult<Bound<'py, PyAny>> {
        let cfg = self.inner.clone();
        let manifest = py
            .detach(|| stages::run_experiment(&cfg, &run_dir, force))
            .map_err(stage_err)?;
        to_py(py, &manifest)
    }

    fn __repr__(&self) -> String {
        format!(
            "ExperimentConfig(feature_sets={:?}, models={:?}, regimes={:?}, seeds={:?})",
            self.feature_sets(),
            self.models(),
            self.regimes(),
            self.inner.seeds
        )
    }
}

/// Read a `results.csv` into a list of dicts.
#[pyfunction]
fn read_results<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let rows = sepsis_drift::eval::read_results_csv(&path).map_err(|e| value_err(format!("{}: {e}", path.display())))?;
    to_py(py, &rows)
}

/// ROC AUC with tied scores credited one half.
#[pyfunction]
fn auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    sepsis_drift::eval::auc(&scores, &labels).map_err(value_err)
}

/// Suspicion-of-infection events as `(soi_time, antibiotic_time, culture_time)`.
#[pyfunction]
#[pyo3(signature = (antibiotic_times, culture_times, abx_window_h=None, culture_window_h=None))]
fn detect_soi(
    antibiotic_times: Vec<f64>,
    culture_times: Vec<f64>,
    abx_window_h: Option<f64>,
    culture_window_h: Option<f64>,
) -> Vec<(f64, f64, f64)> {
    let d = SoiConfig::default();
    let cfg = SoiConfig {
        abx_window_h: abx_window_h.unwrap_or(d.abx_window_h),
        culture_window_h: culture_window_h.unwrap_or(d.culture_window_h),
    };
    sepsis_drift::sepsis::detect_soi(&antibiotic_times, &culture_times, &cfg)
        .into_iter()
        .map(|s| (s.soi_time, s.antibiotic_time, s.culture_time))
        .collect()
}

/// Onset hour, SOI time and SOFA increase for hourly SOFA totals, or `None`.
#[pyfunction]
fn label_sepsis3(sofa_totals: Vec<u8>, sois: Vec<(f64, f64, f64)>) -> PyResult<Option<(f64, f64, i32)>> {
    if sofa_totals.is_empty() {
        return Err(value_err("sofa_totals is empty"));
    }
    let sois: Vec<SuspicionOfInfection> = sois
        .into_iter()
        .map(|(soi_time, antibiotic_time, culture_time)| SuspicionOfInfection {
            soi_time,
            antibiotic_time,
            culture_time,
        })
        .collect();
    let onset = sepsis_drift::sepsis::label_sepsis3(&SofaSeries::from_totals(&sofa_totals), &sois, &SofaConfig::default());
    Ok(onset.map(|o| (o.onset_time, o.soi.soi_time, o.sofa_delta)))
}

/// Forward-fill a 24 x F window (`None` = missing) into `[values | flags | dt]` rows.
#[pyfunction]
fn impute_simple(values: Vec<Option<f64>>, n_features: usize, pad_hours: usize) -> PyResult<Vec<f64>> {
    let hours = sepsis_drift::cohort::WINDOW_HOURS;
    if n_features == 0 || values.len() != hours * n_features || pad_hours > hours {
        return Err(value_err(format!(
            "expected {hours} x n_features values and pad_hours <= {hours}"
        )));
    }
    Ok(sepsis_drift::features::impute_simple(&values, n_features, pad_hours))
}

/// Specimen counts per year bucket from `(bucket, specimen)` pairs.
#[pyfunction]
#[pyo3(signature = (samples, top_n=DEFAULT_TOP_N))]
fn specimen_change_table<'py>(
    py: Python<'py>,
    samples: Vec<(String, String)>,
    top_n: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let parsed = samples
        .iter()
        .map(|(b, s)| Ok((parse::<YearBucket>(b)?, s.as_str())))
        .collect::<PyResult<Vec<_>>>()?;
    to_py(py, &sepsis_drift::drift::specimen_change_table(parsed, top_n))
}

#[pyfunction]
fn year_buckets() -> Vec<&'static str> {
    YearBucket::ALL.iter().map(|b| b.as_str()).collect()
}

#[pymodule]
pub fn sepsis_drift_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<ExperimentConfig>()?;
    for f in [
        wrap_pyfunction!(synth_gen, m)?,
        wrap_pyfunction!(ingest, m)?,
        wrap_pyfunction!(label, m)?,
        wrap_pyfunction!(extract_features, m)?,
        wrap_pyfunction!(train, m)?,
        wrap_pyfunction!(evaluate, m)?,
        wrap_pyfunction!(drift_report, m)?,
        wrap_pyfunction!(read_results, m)?,
        wrap_pyfunction!(auc, m)?,
        wrap_pyfunction!(detect_soi, m)?,
        wrap_pyfunction!(label_sepsis3, m)?,
        wrap_pyfunction!(impute_simple, m)?,
        wrap_pyfunction!(specimen_change_table, m)?,
        wrap_pyfunction!(year_buckets, m)?,
    ] {
        m.add_function(f)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_errors_map_to_python_exception_types() {
        Python::initialize();
        Python::attach(|py| {
            assert!(stage_err(PipelineError::User("x".into())).is_instance_of::<PyValueError>(py));
            assert!(stage_err(PipelineError::Internal("x".into())).is_instance_of::<PyRuntimeError>(py));
        });
    }

    #[test]
    fn enum_parsing_rejects_unknown_names() {
        assert!(parse::<ModelKind>("rnn").is_ok());
        assert!(parse::<ModelKind>("svm").is_err());
        assert!(parse::<Regime>("year_bucket").is_ok());
    }
}
