use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ensure_absent, sha256_hex, PipelineError, Result, StageRecord, Staging, Timer};
use crate::eval::{auc, make_split, Assignment, ExperimentResult, Regime, SplitMember, SplitPlan, SplitRatios};
use crate::eval::write_results_csv;
use crate::features::{FeatureMatrix, ModelInput, Preprocessing};
use crate::models::{load_checkpoint, save_checkpoint, train, Checkpoint, EpochStats, ModelKind, TrainConfig};
use crate::types::{StayId, YearBucket};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const CURVE_FILE: &str = "curve.csv";
pub const SPLIT_FILE: &str = "split.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const RESULTS_FILE: &str = "results.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub model: ModelKind,
    pub regime: Regime,
    pub ratios: SplitRatios,
    pub config: TrainConfig,
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvaluateOptions {
    pub force: bool,
}

pub(crate) fn load_features(path: &Path) -> Result<FeatureMatrix> {
    FeatureMatrix::read(path).map_err(|e| PipelineError::User(e.to_string()))
}

pub(crate) fn config_hash(cfg: &TrainConfig) -> String {
    sha256_hex(serde_json::to_string(cfg).expect("config serializes").as_bytes())
}

pub(crate) struct TrainedCell {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochStats>,
    pub split: SplitPlan,
}

/// Split, fit preprocessing on the training stays and train one model.
pub(crate) fn train_cell(
    matrix: &FeatureMatrix,
    kind: ModelKind,
    regime: Regime,
    ratios: &SplitRatios,
    cfg: &TrainConfig,
) -> Result<TrainedCell> {
    let members: Vec<SplitMember> = matrix
        .rows
        .iter()
        .map(|r| SplitMember {
            stay_id: r.stay_id,
            patient_id: r.patient_id,
            year_bucket: r.year_bucket,
        })
        .collect();
    let split = make_split(&members, regime, ratios, cfg.seed).map_err(PipelineError::user)?;
    let pick = |which: Assignment| -> Vec<ModelInput> {
        matrix
            .rows
            .iter()
            .filter(|r| split.get(r.stay_id) == Some(which))
            .map(|r| r.input.clone())
            .collect()
    };
    let mut train_set = pick(Assignment::Train);
    let mut val_set = pick(Assignment::Val);
    let preprocessing = Preprocessing::fit(&train_set, &matrix.header.static_kinds);
    for x in train_set.iter_mut().chain(val_set.iter_mut()) {
        preprocessing.apply(x);
    }
    let outcome = train(kind, &train_set, &val_set, cfg).map_err(PipelineError::user)?;
    Ok(TrainedCell {
        checkpoint: Checkpoint {
            model: outcome.model,
            feature_set: matrix.header.feature_set.clone(),
            config: cfg.clone(),
            config_hash: config_hash(cfg),
            preprocessing,
            best_epoch: outcome.best_epoch,
        },
        history: outcome.history,
        split,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Prediction {
    pub stay_id: StayId,
    pub year_bucket: YearBucket,
    pub label: u8,
    pub score: f64,
}

/// Score every test stay and compute the pooled and per-bucket AUCs.
/// Year-bucket runs report only per-bucket rows.
pub(crate) fn evaluate_cell(
    matrix: &FeatureMatrix,
    ck: &Checkpoint,
    split: &SplitPlan,
) -> Result<(Vec<Prediction>, Vec<ExperimentResult>)> {
    if ck.feature_set != matrix.header.feature_set {
        return Err(PipelineError::User(format!(
            "checkpoint was trained on feature set {:?}, features are {:?}",
            ck.feature_set, matrix.header.feature_set
        )));
    }
    let mut preds = Vec::new();
    for r in &matrix.rows {
        let Some(Assignment::Test(_)) = split.get(r.stay_id) else {
            continue;
        };
        let mut x = r.input.clone();
        ck.preprocessing.apply(&mut x);
        let score = ck.model.predict(&x).map_err(PipelineError::user)?;
        preds.push(Prediction {
            stay_id: r.stay_id,
            year_bucket: r.year_bucket,
            label: r.input.label as u8,
            score,
        });
    }
    let mut slices: BTreeMap<Option<YearBucket>, (Vec<f64>, Vec<bool>)> = BTreeMap::new();
    for p in &preds {
        let mut push = |k| {
            let e = slices.entry(k).or_default();
            e.0.push(p.score);
            e.1.push(p.label == 1);
        };
        push(Some(p.year_bucket));
        if split.regime == Regime::YearAgnostic {
            push(None);
        }
    }
    let results = slices
        .into_iter()
        .map(|(bucket, (scores, labels))| ExperimentResult {
            feature_set: ck.feature_set.clone(),
            model: ck.model.kind(),
            regime: split.regime,
            test_bucket: bucket,
            seed: ck.config.seed,
            auc: auc(&scores, &labels).ok(),
            n_test: labels.len(),
            n_pos: labels.iter().filter(|&&l| l).count(),
        })
        .collect();
    Ok((preds, results))
}

#[derive(Serialize, Deserialize)]
struct SplitRow {
    stay_id: StayId,
    assignment: String,
    regime: Regime,
    seed: u64,
}

fn assignment_str(a: Assignment) -> String {
    match a {
        Assignment::Train => "train".into(),
        Assignment::Val => "val".into(),
        Assignment::Test(b) => format!("test:{}", b.as_str()),
    }
}

fn parse_assignment(s: &str) -> Option<Assignment> {
    match s {
        "train" => Some(Assignment::Train),
        "val" => Some(Assignment::Val),
        _ => s.strip_prefix("test:")?.parse().ok().map(Assignment::Test),
    }
}

pub fn write_split(path: &Path, plan: &SplitPlan) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(PipelineError::internal)?;
    for (&stay_id, &a) in &plan.assignments {
        w.serialize(SplitRow {
            stay_id,
            assignment: assignment_str(a),
            regime: plan.regime,
            seed: plan.seed,
        })
        .map_err(PipelineError::internal)?;
    }
    w.flush().map_err(PipelineError::internal)
}

pub fn read_split(path: &Path) -> Result<SplitPlan> {
    let err = |e: &dyn std::fmt::Display| PipelineError::User(format!("{}: {e}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| err(&e))?;
    let mut plan: Option<SplitPlan> = None;
    for row in rdr.deserialize::<SplitRow>() {
        let row = row.map_err(|e| err(&e))?;
        let a = parse_assignment(&row.assignment).ok_or_else(|| err(&format!("bad assignment {:?}", row.assignment)))?;
        let p = plan.get_or_insert_with(|| SplitPlan {
            regime: row.regime,
            seed: row.seed,
            assignments: BTreeMap::new(),
        });
        if p.regime != row.regime || p.seed != row.seed {
            return Err(err(&"mixed regimes or seeds"));
        }
        p.assignments.insert(row.stay_id, a);
    }
    plan.ok_or_else(|| err(&"empty split file"))
}

pub(crate) fn write_curve(path: &Path, history: &[EpochStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(PipelineError::internal)?;
    for h in history {
        w.serialize(h).map_err(PipelineError::internal)?;
    }
    w.flush().map_err(PipelineError::internal)
}

pub(crate) fn write_predictions(path: &Path, preds: &[Prediction]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(PipelineError::internal)?;
    for p in preds {
        w.serialize(p).map_err(PipelineError::internal)?;
    }
    w.flush().map_err(PipelineError::internal)
}

/// Train one model on a features file; writes the checkpoint, the
/// per-epoch curve and the split used.
pub fn run_train(features: &Path, out_dir: &Path, opts: &TrainOptions) -> Result<StageRecord> {
    let timer = Timer::start();
    ensure_absent(
        out_dir,
        &[CHECKPOINT_FILE.into(), CURVE_FILE.into(), SPLIT_FILE.into()],
        opts.force,
    )?;
    let matrix = load_features(features)?;
    let cell = train_cell(&matrix, opts.model, opts.regime, &opts.ratios, &opts.config)?;
    let staging = Staging::begin(out_dir, "train")?;
    save_checkpoint(&staging.path().join(CHECKPOINT_FILE), &cell.checkpoint).map_err(PipelineError::internal)?;
    write_curve(&staging.path().join(CURVE_FILE), &cell.history)?;
    write_split(&staging.path().join(SPLIT_FILE), &cell.split)?;
    let outputs = staging.commit(opts.force)?;
    Ok(timer.record("train", outputs))
}

/// Score the test stays of `split` with a trained checkpoint.
pub fn run_evaluate(
    features: &Path,
    checkpoint: &Path,
    split: &Path,
    out_dir: &Path,
    opts: &EvaluateOptions,
) -> Result<StageRecord> {
    let timer = Timer::start();
    ensure_absent(out_dir, &[PREDICTIONS_FILE.into(), RESULTS_FILE.into()], opts.force)?;
    let matrix = load_features(features)?;
    let ck = load_checkpoint(checkpoint).map_err(PipelineError::user)?;
    let plan = read_split(split)?;
    let (preds, results) = evaluate_cell(&matrix, &ck, &plan)?;
    let staging = Staging::begin(out_dir, "evaluate")?;
    write_predictions(&staging.path().join(PREDICTIONS_FILE), &preds)?;
    write_results_csv(&staging.path().join(RESULTS_FILE), &results).map_err(PipelineError::internal)?;
    let outputs = staging.commit(opts.force)?;
    Ok(timer.record("evaluate", outputs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::PatientId;

    #[test]
    fn split_file_round_trips() {
        let members: Vec<SplitMember> = (0..40)
            .map(|i| SplitMember {
                stay_id: StayId(100 + i),
                patient_id: PatientId(i),
                year_bucket: YearBucket::ALL[i as usize % 4],
            })
            .collect();
        let plan = make_split(&members, Regime::YearBucket, &SplitRatios::default(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(SPLIT_FILE);
        write_split(&p, &plan).unwrap();
        assert_eq!(read_split(&p).unwrap(), plan);
    }

    #[test]
    fn assignment_strings() {
        for a in [Assignment::Train, Assignment::Val, Assignment::Test(YearBucket::Y2014)] {
            assert_eq!(parse_assignment(&assignment_str(a)), Some(a));
        }
        assert_eq!(parse_assignment("test:1999"), None);
    }
}
