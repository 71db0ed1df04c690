use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::drift_stage::{run_drift_report, DriftOptions};
use super::extract::{features_file_name, run_extract_features, ExtractOptions};
use super::ingest_stage::{run_ingest, IngestOptions};
use super::label_stage::{run_label, LabelOptions, LABELS_FILE};
use super::model_stage::{
    evaluate_cell, load_features, train_cell, write_curve, write_predictions, write_split, CHECKPOINT_FILE,
    CURVE_FILE, PREDICTIONS_FILE, RESULTS_FILE, SPLIT_FILE,
};
use super::{peak_rss_kb, read_text, sha256_hex, write_json, PipelineError, Result, StageRecord, Staging, Timer};
use crate::eval::{write_results_csv, ExperimentResult, Regime, ResultsTable, SplitRatios};
use crate::features::FeatureSetSpec;
use crate::ingest::LabJoin;
use crate::models::{save_checkpoint, ModelKind, TrainConfig};
use crate::sepsis::LabelConfig;
use crate::synth::{self, SynthConfig};
use crate::types::Task;

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";
pub const RESULTS_TABLE_FILE: &str = "results_table.md";

/// Where the raw tables come from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// A directory of MIMIC-shaped CSV tables.
    Tables(PathBuf),
    /// Generate synthetic tables first.
    Synth(Box<SynthConfig>),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataSection {
    tables: Option<PathBuf>,
    synth_config: Option<PathBuf>,
    synth: Option<SynthConfig>,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

fn default_feature_sets() -> Vec<String> {
    vec!["dascena".into(), "epic".into()]
}

fn default_models() -> Vec<ModelKind> {
    vec![ModelKind::Rnn, ModelKind::Logistic]
}

fn default_regimes() -> Vec<Regime> {
    vec![Regime::YearAgnostic, Regime::YearBucket]
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_seeds")]
    seeds: Vec<u64>,
    #[serde(default)]
    task: Task,
    #[serde(default)]
    lab_join: LabJoin,
    #[serde(default = "default_feature_sets")]
    feature_sets: Vec<String>,
    #[serde(default = "default_models")]
    models: Vec<ModelKind>,
    #[serde(default = "default_regimes")]
    regimes: Vec<Regime>,
    #[serde(default = "yes")]
    drift_report: bool,
    data: DataSection,
    #[serde(default)]
    label: LabelConfig,
    #[serde(default)]
    split: SplitRatios,
    #[serde(default)]
    train: TrainConfig,
    train_rnn: Option<TrainConfig>,
}

/// Parsed experiment config with paths resolved against the config file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    /// Seed for the labelling stage (control onsets).
    pub seed: u64,
    /// One training run per seed and cell.
    pub seeds: Vec<u64>,
    pub task: Task,
    pub lab_join: LabJoin,
    pub feature_sets: Vec<FeatureSetSpec>,
    pub models: Vec<ModelKind>,
    pub regimes: Vec<Regime>,
    pub drift_report: bool,
    pub data: DataSource,
    pub label: LabelConfig,
    pub split: SplitRatios,
    pub train: TrainConfig,
    pub train_rnn: Option<TrainConfig>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| PipelineError::User(format!("{}: {e}", path.display())))
    }

    /// Parse config text; relative paths are taken relative to `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(PipelineError::user)?;
        let rel = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let data = match (raw.data.tables, raw.data.synth_config, raw.data.synth) {
            (Some(t), None, None) => DataSource::Tables(rel(&t)),
            (None, Some(p), None) => {
                let p = rel(&p);
                let cfg = SynthConfig::from_toml(&read_text(&p)?)
                    .map_err(|e| PipelineError::User(format!("{}: {e}", p.display())))?;
                DataSource::Synth(Box::new(cfg))
            }
            (None, None, Some(cfg)) => DataSource::Synth(Box::new(cfg)),
            _ => {
                return Err(PipelineError::user(
                    "[data] needs exactly one of `tables`, `synth_config` or a [data.synth] table",
                ))
            }
        };
        let mut feature_sets = Vec::new();
        for name in &raw.feature_sets {
            let spec = match FeatureSetSpec::builtin(name) {
                Ok(s) => s,
                Err(_) => FeatureSetSpec::from_path(&rel(Path::new(name))).map_err(PipelineError::user)?,
            };
            feature_sets.push(spec);
        }
        let cfg = Self {
            seed: raw.seed,
            seeds: raw.seeds,
            task: raw.task,
            lab_join: raw.lab_join,
            feature_sets,
            models: raw.models,
            regimes: raw.regimes,
            drift_report: raw.drift_report,
            data,
            label: raw.label,
            split: raw.split,
            train: raw.train,
            train_rnn: raw.train_rnn,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let empty = |what: &str| Err(PipelineError::User(format!("`{what}` must not be empty")));
        if self.seeds.is_empty() {
            return empty("seeds");
        }
        if self.feature_sets.is_empty() {
            return empty("feature_sets");
        }
        if self.models.is_empty() {
            return empty("models");
        }
        if self.regimes.is_empty() {
            return empty("regimes");
        }
        self.split.validate().map_err(PipelineError::user)?;
        self.train.validate().map_err(|e| PipelineError::User(format!("[train] {e}")))?;
        if let Some(t) = &self.train_rnn {
            t.validate().map_err(|e| PipelineError::User(format!("[train_rnn] {e}")))?;
        }
        if let DataSource::Synth(s) = &self.data {
            s.validate().map_err(PipelineError::user)?;
        }
        Ok(())
    }

    /// Replace every seed (labelling, training runs, generator) with `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.seeds = vec![seed];
        if let DataSource::Synth(s) = &mut self.data {
            s.seed = seed;
        }
    }

    pub fn sha256(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    fn train_config(&self, model: ModelKind, seed: u64) -> TrainConfig {
        let base = match model {
            ModelKind::Rnn => self.train_rnn.as_ref().unwrap_or(&self.train),
            ModelKind::Logistic => &self.train,
        };
        TrainConfig { seed, ..base.clone() }
    }
}

/// Outcome of one (feature set, model, regime, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStatus {
    pub feature_set: String,
    pub model: ModelKind,
    pub regime: Regime,
    pub seed: u64,
    pub status: String,
    pub error: Option<String>,
    pub seconds: f64,
    pub outputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub stages: Vec<StageRecord>,
    pub cells: Vec<CellStatus>,
    pub peak_rss_kb: Option<u64>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        serde_json::from_str(&read_text(path)?).map_err(|e| PipelineError::User(format!("{}: {e}", path.display())))
    }

    /// Every output path listed by stages and cells, relative to the run directory.
    pub fn all_outputs(&self) -> Vec<PathBuf> {
        self.stages
            .iter()
            .flat_map(|s| s.outputs.iter())
            .chain(self.cells.iter().flat_map(|c| c.outputs.iter()))
            .cloned()
            .collect()
    }
}

/// Generate synthetic tables into `out_dir`.
pub fn run_synth(cfg: &SynthConfig, out_dir: &Path, force: bool) -> Result<StageRecord> {
    let timer = Timer::start();
    let names: Vec<String> = synth::output_files().into_iter().map(String::from).collect();
    super::ensure_absent(out_dir, &names, force)?;
    let staging = Staging::begin(out_dir, "synth")?;
    synth::generate(cfg, staging.path()).map_err(|e| match e {
        synth::SynthError::Config(_) => PipelineError::user(e),
        _ => PipelineError::internal(e),
    })?;
    let outputs = staging.commit(force)?;
    Ok(timer.record("synth-gen", outputs))
}

fn prefixed(mut rec: StageRecord, dir: &str) -> StageRecord {
    rec.outputs = rec.outputs.into_iter().map(|p| Path::new(dir).join(p)).collect();
    rec
}

fn cell_dir(fs: &str, model: ModelKind, regime: Regime, seed: u64) -> String {
    format!("cells/{fs}-{model}-{regime}-seed{seed}")
}

fn run_cell(
    matrix: &crate::features::FeatureMatrix,
    run_dir: &Path,
    cfg: &ExperimentConfig,
    model: ModelKind,
    regime: Regime,
    seed: u64,
) -> (CellStatus, Vec<ExperimentResult>) {
    let timer = Timer::start();
    let dir = cell_dir(&matrix.header.feature_set, model, regime, seed);
    let attempt = || -> Result<(Vec<PathBuf>, Vec<ExperimentResult>)> {
        let cell = train_cell(matrix, model, regime, &cfg.split, &cfg.train_config(model, seed))?;
        let (preds, results) = evaluate_cell(matrix, &cell.checkpoint, &cell.split)?;
        let staging = Staging::begin(&run_dir.join(&dir), "cell")?;
        let p = staging.path();
        save_checkpoint(&p.join(CHECKPOINT_FILE), &cell.checkpoint).map_err(PipelineError::internal)?;
        write_curve(&p.join(CURVE_FILE), &cell.history)?;
        write_split(&p.join(SPLIT_FILE), &cell.split)?;
        write_predictions(&p.join(PREDICTIONS_FILE), &preds)?;
        write_results_csv(&p.join(RESULTS_FILE), &results).map_err(PipelineError::internal)?;
        let outputs = staging.commit(true)?;
        Ok((outputs.into_iter().map(|o| Path::new(&dir).join(o)).collect(), results))
    };
    let (status, error, outputs, results) = match attempt() {
        Ok((o, r)) => ("ok", None, o, r),
        Err(e) => ("failed", Some(e.to_string()), Vec::new(), Vec::new()),
    };
    let rec = timer.record("cell", Vec::new());
    (
        CellStatus {
            feature_set: matrix.header.feature_set.clone(),
            model,
            regime,
            seed,
            status: status.into(),
            error,
            seconds: rec.seconds,
            outputs,
        },
        results,
    )
}

/// Run every stage for `cfg` into `run_dir`: optional generation, ingest,
/// labelling, one feature extraction per feature set, the grid of training
/// cells and the drift report. A failed cell is recorded and the rest proceed.
pub fn run_experiment(cfg: &ExperimentConfig, run_dir: &Path, force: bool) -> Result<RunManifest> {
    let manifest_path = run_dir.join(RUN_MANIFEST_FILE);
    if manifest_path.exists() && !force {
        return Err(PipelineError::User(format!(
            "{} already exists; pass --force to overwrite",
            manifest_path.display()
        )));
    }
    if force && run_dir.join("cells").exists() {
        fs::remove_dir_all(run_dir.join("cells")).map_err(PipelineError::internal)?;
    }
    let mut stages = Vec::new();
    let tables = match &cfg.data {
        DataSource::Tables(p) => p.clone(),
        DataSource::Synth(s) => {
            stages.push(prefixed(run_synth(s, &run_dir.join("synth"), force)?, "synth"));
            run_dir.join("synth")
        }
    };
    let ingest_dir = run_dir.join("ingest");
    let ingest_opts = IngestOptions {
        lab_join: cfg.lab_join,
        force,
        ..IngestOptions::default()
    };
    stages.push(prefixed(run_ingest(&tables, &ingest_dir, &ingest_opts)?, "ingest"));
    let label_dir = run_dir.join("label");
    let label_opts = LabelOptions {
        config: cfg.label.clone(),
        task: cfg.task,
        seed: cfg.seed,
        force,
    };
    stages.push(prefixed(run_label(&ingest_dir, &label_dir, &label_opts)?, "label"));

    let features_dir = run_dir.join("features");
    let mut cells = Vec::new();
    let mut results = Vec::new();
    for spec in &cfg.feature_sets {
        let opts = ExtractOptions {
            spec: spec.clone(),
            task: cfg.task,
            force,
        };
        stages.push(prefixed(
            run_extract_features(&ingest_dir, &label_dir, &features_dir, &opts)?,
            "features",
        ));
        let matrix = load_features(&features_dir.join(features_file_name(&spec.name)))?;
        let grid: Vec<(ModelKind, Regime, u64)> = cfg
            .models
            .iter()
            .flat_map(|&m| cfg.regimes.iter().flat_map(move |&r| cfg.seeds.iter().map(move |&s| (m, r, s))))
            .collect();
        let out: Vec<_> = grid
            .par_iter()
            .map(|&(m, r, s)| run_cell(&matrix, run_dir, cfg, m, r, s))
            .collect();
        for (c, r) in out {
            cells.push(c);
            results.extend(r);
        }
    }

    if cfg.drift_report && cfg.task == Task::Sepsis {
        let rec = run_drift_report(
            &label_dir.join(LABELS_FILE),
            &tables,
            &run_dir.join("drift"),
            &DriftOptions {
                force,
                ..DriftOptions::default()
            },
        )?;
        stages.push(prefixed(rec, "drift"));
    }

    let timer = Timer::start();
    let staging = Staging::begin(run_dir, "results")?;
    write_results_csv(&staging.path().join(RESULTS_FILE), &results).map_err(PipelineError::internal)?;
    fs::write(
        staging.path().join(RESULTS_TABLE_FILE),
        ResultsTable::from_results(&results).to_markdown(),
    )
    .map_err(PipelineError::internal)?;
    stages.push(timer.record("results", staging.commit(force)?));

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: cfg.sha256(),
        seed: cfg.seed,
        seeds: cfg.seeds.clone(),
        stages,
        cells,
        peak_rss_kb: peak_rss_kb(),
    };
    write_json(&manifest_path, &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_path_resolution() {
        let cfg = ExperimentConfig::from_toml("[data]\ntables = \"raw\"\n", Path::new("/base")).unwrap();
        assert_eq!(cfg.seeds, vec![0, 1, 2]);
        assert_eq!(cfg.feature_sets.len(), 2);
        assert_eq!(cfg.data, DataSource::Tables(PathBuf::from("/base/raw")));
    }

    #[test]
    fn config_rejects_ambiguous_data_and_unknown_keys() {
        let both = "[data]\ntables = \"a\"\nsynth_config = \"b\"\n";
        assert!(ExperimentConfig::from_toml(both, Path::new(".")).is_err());
        let typo = "sedes = [1]\n[data]\ntables = \"a\"\n";
        let err = ExperimentConfig::from_toml(typo, Path::new(".")).unwrap_err();
        assert!(err.is_user() && err.to_string().contains("sedes"));
    }

    #[test]
    fn seed_override_reaches_every_stage() {
        let mut cfg = ExperimentConfig::from_toml("seeds = [4, 5]\n[data.synth]\nseed = 9\n", Path::new(".")).unwrap();
        cfg.override_seed(77);
        assert_eq!((cfg.seed, cfg.seeds.clone()), (77, vec![77]));
        match &cfg.data {
            DataSource::Synth(s) => assert_eq!(s.seed, 77),
            other => panic!("{other:?}"),
        }
    }
}
