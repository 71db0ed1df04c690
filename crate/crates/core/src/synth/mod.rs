//! Synthetic MIMIC-shaped tables with known labels and controllable drift.
//!
//! Positive stays carry an infection workup (culture plus antibiotic) and
//! a pair of failing organ labs in the same stay hour, so the sepsis
//! labeler recovers the ground-truth onset exactly. Diagnoses switch
//! vocabulary at a configurable bucket, and daytime culture draws can be
//! thinned per bucket; thinned workups wait for the evening shift.

pub mod config;
mod stay;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    inject_icd_cutover, inject_microbio_shift, ConditionSpec, SeriesSpec, SeriesTable, SparseSpec, SparseTable,
    SynthConfig, SynthConfigError,
};
pub use stay::{
    solve_intercepts, CULTURE_ITEM, DAYTIME_END, DAYTIME_START, HADM_BASE, LAB_BILIRUBIN, LAB_CREATININE,
    LAB_PLATELETS, STAY_BASE, SUBJECT_BASE, WORKUP_DRUG, WORKUP_GSN,
};

use crate::types::{AdmissionId, PatientId, StayId, YearBucket};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const PARAMS_FILE: &str = "synth_params.json";
const CHUNK: usize = 512;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Config(#[from] SynthConfigError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRow {
    pub stay_id: StayId,
    pub subject_id: PatientId,
    pub hadm_id: AdmissionId,
    pub year_bucket: YearBucket,
    pub label: u8,
    pub onset_time: Option<f64>,
    pub deterioration_h: Option<f64>,
    pub workup_deferred: u8,
    pub severity: f64,
    pub los_hours: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub rows: Vec<GroundTruthRow>,
    pub intercepts: [f64; 4],
    pub config: SynthConfig,
}

impl GroundTruth {
    pub fn positives(&self, bucket: YearBucket) -> usize {
        self.rows.iter().filter(|r| r.year_bucket == bucket && r.label == 1).count()
    }
}

#[derive(Serialize)]
struct ParamsEcho<'a> {
    config: &'a SynthConfig,
    intercepts: [f64; 4],
    n_stays: usize,
    positives_per_bucket: [usize; 4],
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write all nine tables plus `ground_truth.csv` and `synth_params.json`
/// into `out_dir`. Stays are simulated in parallel and written in index
/// order, so the bytes depend only on the config.
pub fn generate(cfg: &SynthConfig, out_dir: &Path) -> Result<GroundTruth, SynthError> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let intercepts = solve_intercepts(cfg);

    let mut writers = Vec::with_capacity(stay::HEADERS.len());
    for (name, header) in stay::HEADERS {
        let path = out_dir.join(name);
        let mut w = BufWriter::with_capacity(1 << 20, File::create(&path).map_err(io_err(&path))?);
        writeln!(w, "{header}").map_err(io_err(&path))?;
        writers.push((path, w));
    }

    let n = cfg.n_patients_per_bucket * 4;
    let mut truth = Vec::with_capacity(n);
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let chunk: Vec<_> = (start..end)
            .into_par_iter()
            .map(|i| {
                let bucket = YearBucket::ALL[i / cfg.n_patients_per_bucket];
                stay::simulate(cfg, i, bucket, intercepts[bucket.index()])
            })
            .collect();
        for (rows, t) in chunk {
            for ((path, w), body) in writers.iter_mut().zip(rows.tables()) {
                w.write_all(body.as_bytes()).map_err(io_err(path))?;
            }
            truth.push(GroundTruthRow {
                stay_id: StayId(t.stay_id),
                subject_id: PatientId(t.subject_id),
                hadm_id: AdmissionId(t.hadm_id),
                year_bucket: t.bucket,
                label: t.label as u8,
                onset_time: t.onset_time,
                deterioration_h: t.deterioration_h,
                workup_deferred: t.workup_deferred as u8,
                severity: (t.severity * 1e6).round() / 1e6,
                los_hours: t.los_hours,
            });
        }
    }
    for (path, mut w) in writers {
        w.flush().map_err(io_err(&path))?;
    }

    let gt = GroundTruth {
        rows: truth,
        intercepts,
        config: cfg.clone(),
    };
    write_ground_truth(&out_dir.join(GROUND_TRUTH_FILE), &gt.rows)?;
    let echo = ParamsEcho {
        config: cfg,
        intercepts,
        n_stays: n,
        positives_per_bucket: YearBucket::ALL.map(|b| gt.positives(b)),
    };
    let path = out_dir.join(PARAMS_FILE);
    let text = serde_json::to_string_pretty(&echo).expect("params serialize");
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(gt)
}

pub fn write_ground_truth(path: &Path, rows: &[GroundTruthRow]) -> Result<(), SynthError> {
    let to_io = |e: csv::Error| SynthError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    let mut w = csv::Writer::from_path(path).map_err(to_io)?;
    for r in rows {
        w.serialize(r).map_err(to_io)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruthRow>, csv::Error> {
    csv::Reader::from_path(path)?.deserialize().collect()
}

/// Every file `generate` writes, relative to the output directory.
pub fn output_files() -> Vec<&'static str> {
    let mut v: Vec<&str> = stay::HEADERS.iter().map(|(n, _)| *n).collect();
    v.push(GROUND_TRUTH_FILE);
    v.push(PARAMS_FILE);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            seed,
            n_patients_per_bucket: n,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn intercepts_hit_target_prevalence() {
        let mut cfg = SynthConfig::default();
        cfg.prevalence = [0.05, 0.2, 0.5, 0.8];
        let a = solve_intercepts(&cfg);
        assert!(a[0] < a[1] && a[1] < a[2] && a[2] < a[3]);
        // Monte Carlo estimate of the implied prevalence.
        use rand::Rng;
        let mut rng = crate::rng::seeded(1);
        let n = 200_000;
        for (b, &alpha) in a.iter().enumerate() {
            let mut pos = 0usize;
            for _ in 0..n {
                let mut x = alpha + cfg.severity_coefficient * rng.sample::<f64, _>(rand_distr::StandardNormal);
                for c in &cfg.conditions {
                    if rng.random::<f64>() < c.prevalence {
                        x += c.coefficient;
                    }
                }
                pos += (rng.random::<f64>() < 1.0 / (1.0 + (-x).exp())) as usize;
            }
            let p = cfg.prevalence[b];
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((pos as f64 / n as f64 - p).abs() < 4.0 * sigma, "bucket {b}");
        }
    }

    #[test]
    fn deterministic_bytes_and_files() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let cfg = small(30, 5);
        generate(&cfg, d1.path()).unwrap();
        generate(&cfg, d2.path()).unwrap();
        for f in output_files() {
            let a = fs::read(d1.path().join(f)).unwrap();
            let b = fs::read(d2.path().join(f)).unwrap();
            assert_eq!(a, b, "{f}");
        }
        let gt = read_ground_truth(&d1.path().join(GROUND_TRUTH_FILE)).unwrap();
        assert_eq!(gt.len(), 120);
        let other = tempfile::tempdir().unwrap();
        generate(&small(30, 6), other.path()).unwrap();
        assert_ne!(
            fs::read(d1.path().join("chartevents.csv")).unwrap(),
            fs::read(other.path().join("chartevents.csv")).unwrap()
        );
    }

    #[test]
    fn icd_vocabulary_follows_cutover() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = inject_icd_cutover(&small(40, 2), 2).unwrap();
        let gt = generate(&cfg, dir.path()).unwrap();
        let bucket_of: std::collections::HashMap<i64, usize> =
            gt.rows.iter().map(|r| (r.hadm_id.0, r.year_bucket.index())).collect();
        let mut rdr = csv::Reader::from_path(dir.path().join("diagnoses_icd.csv")).unwrap();
        let mut seen = [[0usize; 2]; 4];
        for rec in rdr.records() {
            let rec = rec.unwrap();
            let b = bucket_of[&rec[1].parse::<i64>().unwrap()];
            let v: u8 = rec[4].parse().unwrap();
            seen[b][(v == 10) as usize] += 1;
        }
        assert_eq!(seen[0][1] + seen[1][1], 0);
        assert_eq!(seen[2][0] + seen[3][0], 0);
        assert!(seen.iter().all(|s| s[0] + s[1] > 0));
    }

    #[test]
    fn nonpositive_multiplier_only_affects_its_bucket() {
        let base = small(60, 3);
        let shifted = inject_microbio_shift(&base, 3, 0.0).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ga = generate(&base, a.path()).unwrap();
        let gb = generate(&shifted, b.path()).unwrap();
        for (x, y) in ga.rows.iter().zip(&gb.rows) {
            if x.year_bucket != YearBucket::Y2017 {
                assert_eq!(x, y);
            } else if let (Some(o1), Some(o2)) = (x.onset_time, y.onset_time) {
                assert!(o2 >= o1);
            }
        }
    }
}
