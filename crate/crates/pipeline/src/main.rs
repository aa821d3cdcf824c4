use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use glioma_pipeline::config::{EvaluationMode, PipelineConfig};
use glioma_pipeline::dataset::CaseLayout;
use glioma_pipeline::error::{PipelineError, Result};
use glioma_pipeline::manifest::ManifestBuilder;
use glioma_pipeline::{artifacts, fsutil, stages, synth, tables};

#[derive(Parser)]
#[command(name = "glioma", version, about = "Glioma segmentation and overall-survival pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize every case and split the cohort.
    Preprocess {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train the whole-tumor network, then the subregion networks from it.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Segment the configured cases, or one case directory with explicit paths.
    Segment {
        #[arg(long, conflicts_with_all = ["weights_dir", "case", "out"])]
        config: Option<PathBuf>,
        #[arg(long, requires_all = ["case", "out"])]
        weights_dir: Option<PathBuf>,
        #[arg(long)]
        case: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Score predicted label maps against ground truth.
    Evaluate {
        #[arg(long, conflicts_with_all = ["pred_dir", "gt_dir", "out"])]
        config: Option<PathBuf>,
        #[arg(long, requires_all = ["gt_dir", "out"])]
        pred_dir: Option<PathBuf>,
        #[arg(long)]
        gt_dir: Option<PathBuf>,
        /// JSON report; the summary table is written beside it as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract the survival feature table from label maps.
    Features {
        #[arg(long, conflicts_with_all = ["labels", "out"])]
        config: Option<PathBuf>,
        #[arg(long, requires_all = ["out", "meta"])]
        labels: Option<PathBuf>,
        /// Case directories holding the scans used for brain masks
        /// (defaults to the labels directory).
        #[arg(long)]
        scans: Option<PathBuf>,
        #[arg(long)]
        meta: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the survival forest.
    SurvivalTrain {
        #[arg(long, conflicts_with_all = ["features", "out"])]
        config: Option<PathBuf>,
        #[arg(long, requires_all = ["meta", "out"])]
        features: Option<PathBuf>,
        #[arg(long)]
        meta: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        trees: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Predict survival days and classes.
    SurvivalPredict {
        #[arg(long, conflicts_with_all = ["model", "features", "out"])]
        config: Option<PathBuf>,
        #[arg(long, requires_all = ["features", "out"])]
        model: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 300.0)]
        short_below: f64,
        #[arg(long, default_value_t = 450.0)]
        long_above: f64,
    },
    /// Score survival predictions on gross-total-resection cases.
    SurvivalEval {
        #[arg(long, conflicts_with_all = ["pred", "meta", "out"])]
        config: Option<PathBuf>,
        #[arg(long, requires_all = ["meta", "out"])]
        pred: Option<PathBuf>,
        #[arg(long)]
        meta: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 300.0)]
        short_below: f64,
        #[arg(long, default_value_t = 450.0)]
        long_above: f64,
        /// Whether the predictions came from the training cases themselves.
        #[arg(long, value_enum, default_value_t = Mode::Resubstitution)]
        mode: Mode,
    },
    /// Render summary tables from stored artifacts.
    Report {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run every stage in order.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write a synthetic phantom dataset with survival metadata and a config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, num_args = 3, default_values_t = [64, 64, 32])]
        dims: Vec<usize>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Mode {
    Resubstitution,
    CrossValidation,
}

fn missing(flag: &str) -> PipelineError {
    PipelineError::config(flag, "either --config or this flag is required")
}

fn thresholds(short_below: f64, long_above: f64) -> Result<glioma_core::survival::ClassThresholds> {
    glioma_core::survival::ClassThresholds::new(short_below, long_above)
        .map_err(|e| PipelineError::config("--short-below", e))
}

fn manifest_dir(out: &std::path::Path) -> PathBuf {
    out.parent().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

fn stem(out: &std::path::Path) -> String {
    out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn run(command: Command) -> Result<()> {
    let load = |p: &PathBuf| PipelineConfig::load(p);
    match command {
        Command::Preprocess { config } => stages::preprocess_stage(&load(&config)?).map(drop),
        Command::Train { config } => stages::train_stage(&load(&config)?).map(drop),
        Command::Segment {
            config,
            weights_dir,
            case,
            out,
            threshold,
        } => match config {
            Some(c) => stages::segment_stage(&load(&c)?).map(drop),
            None => {
                let w = weights_dir.ok_or_else(|| missing("--weights-dir"))?;
                let case = case.ok_or_else(|| missing("--case"))?;
                let out = out.ok_or_else(|| missing("--out"))?;
                fsutil::require(&case)?;
                stages::segment_case(&w, &case, &out, &CaseLayout::default(), threshold)
            }
        },
        Command::Evaluate {
            config,
            pred_dir,
            gt_dir,
            out,
        } => match config {
            Some(c) => stages::evaluate_stage(&load(&c)?).map(drop),
            None => {
                let pred = pred_dir.ok_or_else(|| missing("--pred-dir"))?;
                let gt = gt_dir.ok_or_else(|| missing("--gt-dir"))?;
                let out = out.ok_or_else(|| missing("--out"))?;
                fsutil::require(&pred)?;
                fsutil::require(&gt)?;
                let mut m = ManifestBuilder::new("evaluate", None, None);
                let report = stages::evaluate_dirs(&pred, &gt, &CaseLayout::default(), &mut m)?;
                stages::write_evaluation(&out, &report, &mut m)?;
                m.finish(&manifest_dir(&out), &format!("{}.manifest", stem(&out))).map(drop)
            }
        },
        Command::Features {
            config,
            labels,
            scans,
            meta,
            out,
        } => match config {
            Some(c) => stages::features_stage(&load(&c)?).map(drop),
            None => {
                let labels = labels.ok_or_else(|| missing("--labels"))?;
                let meta = meta.ok_or_else(|| missing("--meta"))?;
                let out = out.ok_or_else(|| missing("--out"))?;
                let scans = scans.unwrap_or_else(|| labels.clone());
                fsutil::require(&labels)?;
                let records = stages::load_records(&meta, None)?;
                let mut m = ManifestBuilder::new("features", None, None);
                m.input(&meta);
                let table = stages::extract_features(&labels, &scans, &records, &CaseLayout::default(), &mut m)?;
                tables::write_features(&out, &table)?;
                m.output(&out);
                m.finish(&manifest_dir(&out), &format!("{}.manifest", stem(&out))).map(drop)
            }
        },
        Command::SurvivalTrain {
            config,
            features,
            meta,
            out,
            trees,
            seed,
        } => match config {
            Some(c) => stages::survival_train_stage(&load(&c)?).map(drop),
            None => {
                let features = features.ok_or_else(|| missing("--features"))?;
                let meta = meta.ok_or_else(|| missing("--meta"))?;
                let out = out.ok_or_else(|| missing("--out"))?;
                fsutil::require(&features)?;
                let table = tables::read_features(&features)?;
                let records = stages::load_records(&meta, None)?;
                let params = glioma_core::survival::ForestParams {
                    n_trees: trees,
                    ..Default::default()
                };
                let model = stages::train_survival(&table, &records, &params, seed)?;
                artifacts::save_model(&out, &model)?;
                let mut m = ManifestBuilder::new("survival-train", None, Some(seed));
                m.input(&features);
                m.input(&meta);
                m.output(&out);
                m.finish(&manifest_dir(&out), &format!("{}.manifest", stem(&out))).map(drop)
            }
        },
        Command::SurvivalPredict {
            config,
            model,
            features,
            out,
            short_below,
            long_above,
        } => match config {
            Some(c) => stages::survival_predict_stage(&load(&c)?).map(drop),
            None => {
                let model_path = model.ok_or_else(|| missing("--model"))?;
                let features = features.ok_or_else(|| missing("--features"))?;
                let out = out.ok_or_else(|| missing("--out"))?;
                fsutil::require(&model_path)?;
                fsutil::require(&features)?;
                let model = artifacts::load_model(&model_path)?;
                let table = tables::read_features(&features)?;
                let predictions = stages::predict_survival(&model, &table, thresholds(short_below, long_above)?)?;
                tables::write_predictions(&out, &predictions)?;
                let mut m = ManifestBuilder::new("survival-predict", None, None);
                m.input(&model_path);
                m.input(&features);
                m.output(&out);
                m.finish(&manifest_dir(&out), &format!("{}.manifest", stem(&out))).map(drop)
            }
        },
        Command::SurvivalEval {
            config,
            pred,
            meta,
            out,
            short_below,
            long_above,
            mode,
        } => match config {
            Some(c) => stages::survival_eval_stage(&load(&c)?).map(drop),
            None => {
                let pred = pred.ok_or_else(|| missing("--pred"))?;
                let meta = meta.ok_or_else(|| missing("--meta"))?;
                let out = out.ok_or_else(|| missing("--out"))?;
                fsutil::require(&pred)?;
                let predictions = tables::read_predictions(&pred)?;
                let records = stages::load_records(&meta, None)?;
                let mode = match mode {
                    Mode::Resubstitution => EvaluationMode::Resubstitution,
                    Mode::CrossValidation => EvaluationMode::CrossValidation,
                };
                let e = stages::evaluate_survival(&predictions, &records, thresholds(short_below, long_above)?, mode)?;
                let mut m = ManifestBuilder::new("survival-eval", None, None);
                m.input(&pred);
                m.input(&meta);
                stages::write_survival_evaluation(&out, &e, &mut m)?;
                m.finish(&manifest_dir(&out), &format!("{}.manifest", stem(&out))).map(drop)
            }
        },
        Command::Report { config } => stages::report_stage(&load(&config)?),
        Command::Pipeline { config } => stages::run_pipeline(&load(&config)?),
        Command::Synth { out, cases, seed, dims } => {
            let dims = [dims[0], dims[1], dims[2]];
            synth::write_synthetic_dataset(&out, cases, dims, seed).map(drop)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
