use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sepsis_drift::drift::DEFAULT_TOP_N;
use sepsis_drift::eval::{Regime, SplitRatios};
use sepsis_drift::features::FeatureSetSpec;
use sepsis_drift::ingest::LabJoin;
use sepsis_drift::models::{ModelKind, TrainConfig};
use sepsis_drift::pipeline::{
    run_drift_report, run_evaluate, run_experiment, run_extract_features, run_ingest, run_label, run_synth,
    run_train, DriftOptions, EvaluateOptions, ExperimentConfig, ExtractOptions, IngestOptions, LabelOptions,
    PipelineError, StageRecord, TrainOptions,
};
use sepsis_drift::sepsis::LabelConfig;
use sepsis_drift::synth::SynthConfig;
use sepsis_drift::types::Task;

#[derive(Parser, Debug)]
#[command(name = "sepsis-drift", version, about = "Temporal-drift workbench for ICU sepsis prediction")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Overwrite existing outputs instead of refusing.
    #[arg(long, global = true)]
    force: bool,
    /// Replace every seed (generator, labelling, training) with this value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate MIMIC-shaped synthetic tables with known drift.
    SynthGen(SynthArgs),
    /// Filter the cohort and stream event tables into stay-relative events.
    Ingest(IngestArgs),
    /// Compute Sepsis-3 (or LOS / mortality) labels and the window manifest.
    #[command(after_long_help = label_help())]
    Label(LabelArgs),
    /// Build the hourly feature container for one feature set.
    ExtractFeatures(ExtractArgs),
    /// Train a logistic or RNN model on a feature container.
    Train(TrainArgs),
    /// Score test stays with a trained checkpoint.
    Evaluate(EvaluateArgs),
    /// Onset, specimen, hour-of-day and antibiotic drift diagnostics.
    DriftReport(DriftArgs),
    /// Run every stage for an experiment config.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Generator config (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Directory holding the CSV tables.
    #[arg(long)]
    tables: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Attach labs by `admission` (hadm_id) or `stay` (stay_id).
    #[arg(long, default_value = "admission")]
    lab_join: LabJoin,
    /// Keep every chart, lab and procedure item instead of only those the
    /// built-in feature sets and the SOFA scorer read.
    #[arg(long)]
    all_items: bool,
}

#[derive(Args, Debug)]
struct LabelArgs {
    /// Output directory of `ingest`.
    #[arg(long)]
    ingest: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Label config (TOML); see below for keys and defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Prediction target: sepsis, los or mortality.
    #[arg(long, default_value = "sepsis")]
    task: Task,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    #[arg(long)]
    ingest: PathBuf,
    /// Output directory of `label`.
    #[arg(long)]
    labels: PathBuf,
    /// Built-in name (dascena, epic, epic_minus_icd) or a TOML path.
    #[arg(long)]
    feature_set: String,
    /// Prediction target: sepsis, los or mortality.
    #[arg(long, default_value = "sepsis")]
    task: Task,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Feature container written by `extract-features`.
    #[arg(long)]
    features: PathBuf,
    /// logistic or rnn.
    #[arg(long)]
    model: ModelKind,
    /// year_agnostic or year_bucket.
    #[arg(long, default_value = "year_agnostic")]
    regime: Regime,
    /// Training hyperparameters (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Train, validation and test fractions.
    #[arg(long, default_value = "0.7,0.15,0.15")]
    split: String,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    features: PathBuf,
    /// Directory written by `train` (model.ckpt and split.csv).
    #[arg(long)]
    model_dir: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DriftArgs {
    /// labels.csv written by `label`.
    #[arg(long)]
    labels: PathBuf,
    /// Directory holding the raw CSV tables.
    #[arg(long)]
    events: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Specimen rows to keep, by absolute change.
    #[arg(long, default_value_t = DEFAULT_TOP_N)]
    top_n: usize,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Run directory (default: `runs/<config name>`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn label_help() -> String {
    format!(
        "Label config keys:\n\
         [soi]  abx_window_h      hours after a culture in which an antibiotic counts\n\
         [soi]  culture_window_h  hours after an antibiotic in which a culture counts\n\
         [sofa] window_pre_h      hours before suspicion searched for the SOFA rise\n\
         [sofa] window_post_h     hours after suspicion searched for the SOFA rise\n\
         [sofa] delta             minimum SOFA increase over baseline\n\
         [sofa] baseline          first_hour or rolling_min\n\
         [sofa] rolling_min_hours lookback for the rolling_min baseline\n\
         [sofa] default_weight_kg weight used for vasopressor doses when none is charted\n\
         [sofa_items]             item IDs per SOFA input\n\
         [antibiotics]            gsn codes and drug-name substrings\n\n\
         Defaults:\n\n{}",
        LabelConfig::default().to_toml()
    )
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::User(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| PipelineError::User(format!("{}: {e}", path.display())))
}

fn parse_split(s: &str) -> Result<SplitRatios, PipelineError> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| PipelineError::User(format!("--split {s:?}: {e}")))?;
    let [train, val, test] = parts[..] else {
        return Err(PipelineError::User(format!("--split {s:?}: expected three fractions")));
    };
    let r = SplitRatios { train, val, test };
    r.validate().map_err(PipelineError::user)?;
    Ok(r)
}

fn print_record(rec: &StageRecord) {
    println!("{}", serde_json::to_string(rec).expect("record serializes"));
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let force = cli.force;
    match cli.command {
        Command::SynthGen(a) => {
            let mut cfg = match &a.config {
                Some(p) => {
                    let text = std::fs::read_to_string(p)
                        .map_err(|e| PipelineError::User(format!("cannot read {}: {e}", p.display())))?;
                    SynthConfig::from_toml(&text).map_err(|e| PipelineError::User(format!("{}: {e}", p.display())))?
                }
                None => SynthConfig::default(),
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            print_record(&run_synth(&cfg, &a.out, force)?);
        }
        Command::Ingest(a) => {
            let opts = IngestOptions {
                lab_join: a.lab_join,
                keep_items: if a.all_items { None } else { IngestOptions::default().keep_items },
                force,
            };
            print_record(&run_ingest(&a.tables, &a.out, &opts)?);
        }
        Command::Label(a) => {
            let config = match &a.config {
                Some(p) => read_toml(p)?,
                None => LabelConfig::default(),
            };
            let opts = LabelOptions {
                config,
                task: a.task,
                seed: cli.seed.unwrap_or(0),
                force,
            };
            print_record(&run_label(&a.ingest, &a.out, &opts)?);
        }
        Command::ExtractFeatures(a) => {
            let spec = FeatureSetSpec::resolve(&a.feature_set).map_err(PipelineError::user)?;
            let opts = ExtractOptions {
                spec,
                task: a.task,
                force,
            };
            print_record(&run_extract_features(&a.ingest, &a.labels, &a.out, &opts)?);
        }
        Command::Train(a) => {
            let mut config: TrainConfig = match &a.config {
                Some(p) => read_toml(p)?,
                None => TrainConfig::default(),
            };
            if let Some(s) = cli.seed {
                config.seed = s;
            }
            let opts = TrainOptions {
                model: a.model,
                regime: a.regime,
                ratios: parse_split(&a.split)?,
                config,
                force,
            };
            print_record(&run_train(&a.features, &a.out, &opts)?);
        }
        Command::Evaluate(a) => {
            use sepsis_drift::pipeline::{CHECKPOINT_FILE, SPLIT_FILE};
            print_record(&run_evaluate(
                &a.features,
                &a.model_dir.join(CHECKPOINT_FILE),
                &a.model_dir.join(SPLIT_FILE),
                &a.out,
                &EvaluateOptions { force },
            )?);
        }
        Command::DriftReport(a) => {
            let opts = DriftOptions {
                top_n: a.top_n,
                force,
                ..DriftOptions::default()
            };
            print_record(&run_drift_report(&a.labels, &a.events, &a.out, &opts)?);
        }
        Command::Experiment(a) => {
            let mut cfg = ExperimentConfig::from_path(&a.config)?;
            if let Some(s) = cli.seed {
                cfg.override_seed(s);
            }
            let out = a.out.unwrap_or_else(|| {
                let stem = a.config.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
                PathBuf::from("runs").join(stem)
            });
            let manifest = run_experiment(&cfg, &out, force)?;
            let failed = manifest.cells.iter().filter(|c| c.status != "ok").count();
            eprintln!(
                "{} cells, {} failed; results in {}",
                manifest.cells.len(),
                failed,
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user() { 1 } else { 2 })
        }
    }
}
