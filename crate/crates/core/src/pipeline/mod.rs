//! File-to-file pipeline stages and the experiment driver.
//!
//! Every stage reads its inputs from files, writes into a private staging
//! directory and only moves its outputs into place once it has succeeded,
//! so a failed stage leaves nothing behind.

mod drift_stage;
mod experiment;
mod extract;
mod ingest_stage;
mod label_stage;
mod model_stage;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use drift_stage::{run_drift_report, DriftOptions};
pub use experiment::{
    run_experiment, run_synth, CellStatus, DataSource, ExperimentConfig, RunManifest, RESULTS_TABLE_FILE,
    RUN_MANIFEST_FILE,
};
pub use extract::{features_file_name, run_extract_features, ExtractOptions};
pub use ingest_stage::{
    default_item_filter, read_cohort, read_events, run_ingest, CohortRecord, EventRow, IngestOptions,
    COHORT_FILE, EVENTS_FILE, INGEST_SUMMARY_FILE,
};
pub use label_stage::{run_label, LabelOptions, LABELS_FILE, LABEL_SUMMARY_FILE, MANIFEST_FILE};
pub use model_stage::{
    read_split, run_evaluate, run_train, write_split, EvaluateOptions, TrainOptions, CHECKPOINT_FILE, CURVE_FILE,
    PREDICTIONS_FILE, RESULTS_FILE, SPLIT_FILE,
};

/// Stage failure, split by who has to act on it.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PipelineError {
    /// Bad input, bad config or refused overwrite.
    #[error("{0}")]
    User(String),
    /// Failure inside the tool (I/O while writing, broken invariants).
    #[error("internal error: {0}")]
    Internal(String),
}

impl PipelineError {
    pub fn user(e: impl std::fmt::Display) -> Self {
        PipelineError::User(e.to_string())
    }

    pub fn internal(e: impl std::fmt::Display) -> Self {
        PipelineError::Internal(e.to_string())
    }

    pub fn is_user(&self) -> bool {
        matches!(self, PipelineError::User(_))
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// What one stage did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: String,
    pub seconds: f64,
    /// Output files relative to the run directory.
    pub outputs: Vec<PathBuf>,
    pub peak_rss_kb: Option<u64>,
}

/// Peak resident set size of this process, from `/proc/self/status`.
pub fn peak_rss_kb() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find(|l| l.starts_with("VmHWM:"))?
        .split_whitespace()
        .nth(1)?
        .parse()
        .ok()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Private output directory for one stage run.
pub struct Staging {
    target: PathBuf,
    dir: PathBuf,
    committed: bool,
}

impl Staging {
    pub fn begin(target: &Path, stage: &str) -> Result<Self> {
        fs::create_dir_all(target).map_err(|e| PipelineError::user(format!("cannot create {}: {e}", target.display())))?;
        let dir = target.join(format!(".staging-{stage}-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(PipelineError::internal)?;
        }
        fs::create_dir_all(&dir).map_err(|e| PipelineError::internal(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            target: target.to_path_buf(),
            dir,
            committed: false,
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    /// Move every staged entry into the target directory. Returns the
    /// committed file paths relative to the target, sorted.
    pub fn commit(mut self, force: bool) -> Result<Vec<PathBuf>> {
        let mut names: Vec<_> = fs::read_dir(&self.dir)
            .map_err(PipelineError::internal)?
            .map(|e| e.map(|e| e.file_name()))
            .collect::<std::io::Result<_>>()
            .map_err(PipelineError::internal)?;
        names.sort();
        for n in &names {
            let dest = self.target.join(n);
            if dest.exists() && !force {
                return Err(PipelineError::User(format!(
                    "{} already exists; pass --force to overwrite",
                    dest.display()
                )));
            }
        }
        for n in &names {
            let dest = self.target.join(n);
            if dest.is_dir() {
                fs::remove_dir_all(&dest).map_err(PipelineError::internal)?;
            } else if dest.exists() {
                fs::remove_file(&dest).map_err(PipelineError::internal)?;
            }
            fs::rename(self.dir.join(n), &dest).map_err(PipelineError::internal)?;
        }
        fs::remove_dir_all(&self.dir).map_err(PipelineError::internal)?;
        self.committed = true;
        let mut files = Vec::new();
        for n in &names {
            collect_files(&self.target, &self.target.join(n), &mut files);
        }
        files.sort();
        Ok(files)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

fn collect_files(root: &Path, p: &Path, out: &mut Vec<PathBuf>) {
    if p.is_dir() {
        if let Ok(rd) = fs::read_dir(p) {
            for e in rd.flatten() {
                collect_files(root, &e.path(), out);
            }
        }
    } else if let Ok(rel) = p.strip_prefix(root) {
        out.push(rel.to_path_buf());
    }
}

/// Refuse to run when any of `names` already exists under `dir`.
pub fn ensure_absent(dir: &Path, names: &[String], force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    for n in names {
        let p = dir.join(n);
        if p.exists() {
            return Err(PipelineError::User(format!(
                "{} already exists; pass --force to overwrite",
                p.display()
            )));
        }
    }
    Ok(())
}

pub(crate) struct Timer(Instant);

impl Timer {
    pub(crate) fn start() -> Self {
        Timer(Instant::now())
    }

    pub(crate) fn record(&self, stage: &str, outputs: Vec<PathBuf>) -> StageRecord {
        StageRecord {
            stage: stage.to_string(),
            status: "ok".into(),
            seconds: (self.0.elapsed().as_secs_f64() * 1000.0).round() / 1000.0,
            outputs,
            peak_rss_kb: peak_rss_kb(),
        }
    }
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(PipelineError::internal)?;
    fs::write(path, text + "\n").map_err(|e| PipelineError::internal(format!("{}: {e}", path.display())))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| PipelineError::User(format!("cannot read {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn staging_commits_or_cleans_up() {
        let dir = tempfile::tempdir().unwrap();
        {
            let s = Staging::begin(dir.path(), "x").unwrap();
            fs::write(s.path().join("a.txt"), "1").unwrap();
        }
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);

        let s = Staging::begin(dir.path(), "x").unwrap();
        fs::write(s.path().join("a.txt"), "1").unwrap();
        assert_eq!(s.commit(false).unwrap(), vec![PathBuf::from("a.txt")]);

        let s = Staging::begin(dir.path(), "x").unwrap();
        fs::write(s.path().join("a.txt"), "2").unwrap();
        assert!(s.commit(false).unwrap_err().is_user());
        assert_eq!(fs::read_to_string(dir.path().join("a.txt")).unwrap(), "1");

        let s = Staging::begin(dir.path(), "x").unwrap();
        fs::write(s.path().join("a.txt"), "2").unwrap();
        s.commit(true).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("a.txt")).unwrap(), "2");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn rss_is_readable_on_linux() {
        if cfg!(target_os = "linux") {
            assert!(peak_rss_kb().unwrap() > 0);
        }
    }
}
