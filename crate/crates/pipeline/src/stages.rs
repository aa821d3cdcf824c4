//! Pipeline stages. Each `*_stage` function runs one stage from a
//! [`PipelineConfig`] and writes its outputs plus a manifest under the
//! configured output directory; the plain functions are the same operations
//! on explicit paths.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use glioma_core::features::build_feature_vector;
use glioma_core::metrics::{aggregate, evaluate_case, CaseMetrics, Metric, SummaryTable, SUMMARY_ROWS};
use glioma_core::nn::NetworkSpec;
use glioma_core::preprocess::{normalize_scan, split_dataset};
use glioma_core::survival::{
    classify, cross_validated_predictions, evaluate_os, filter_gtr, fit_rfr, ClassThresholds, ForestModel,
    ForestParams, OSReport,
};
use glioma_core::trainer::{run_cascade_prepared, segment_volume, CascadeData, SubregionWeights, TrainReport};
use glioma_core::{Case, LabelMap, SubregionId, SurvivalRecord};
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, WeightFile};
use crate::config::{CaseSelection, EvaluationMode, LabelSource, PipelineConfig};
use crate::dataset::{self, CaseLayout};
use crate::error::{PipelineError, Result};
use crate::fsutil;
use crate::manifest::ManifestBuilder;
use crate::nifti_io;
use crate::tables::{self, FeatureTable, Prediction};

/// Locations of every artifact under the output root.
#[derive(Debug, Clone)]
pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        OutputLayout { root: root.into() }
    }
    pub fn preprocess_dir(&self) -> PathBuf {
        self.root.join("preprocess")
    }
    pub fn normalized_cases(&self) -> PathBuf {
        self.preprocess_dir().join("cases")
    }
    pub fn split(&self) -> PathBuf {
        self.preprocess_dir().join("split.json")
    }
    pub fn train_dir(&self) -> PathBuf {
        self.root.join("train")
    }
    pub fn weights(&self, region: SubregionId) -> PathBuf {
        self.train_dir().join(format!("{}.glwt", region.name()))
    }
    pub fn segment_dir(&self) -> PathBuf {
        self.root.join("segment")
    }
    pub fn evaluate_dir(&self) -> PathBuf {
        self.root.join("evaluate")
    }
    pub fn metrics_json(&self) -> PathBuf {
        self.evaluate_dir().join("metrics.json")
    }
    pub fn features_dir(&self) -> PathBuf {
        self.root.join("features")
    }
    pub fn features_csv(&self) -> PathBuf {
        self.features_dir().join("features.csv")
    }
    pub fn survival_dir(&self) -> PathBuf {
        self.root.join("survival")
    }
    pub fn model(&self) -> PathBuf {
        self.survival_dir().join("model.bin")
    }
    pub fn predictions(&self) -> PathBuf {
        self.survival_dir().join("predictions.csv")
    }
    pub fn os_report(&self) -> PathBuf {
        self.survival_dir().join("os_report.json")
    }
    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }
}

fn builder(stage: &str, config: &PipelineConfig) -> ManifestBuilder {
    ManifestBuilder::new(stage, Some(config.hash()), Some(config.seed))
}

fn case_files(dir: &Path, case_id: &str, layout: &CaseLayout, with_seg: bool) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = glioma_core::Modality::ALL
        .iter()
        .map(|&m| layout.modality_path(dir, case_id, m))
        .collect();
    if with_seg {
        files.push(layout.seg_path(dir, case_id));
    }
    files
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub fraction: f64,
    pub train: Vec<String>,
    pub val: Vec<String>,
}

/// Normalizes every case, stores the normalized cases with their labels and
/// the train/validation split.
pub fn preprocess_stage(config: &PipelineConfig) -> Result<Split> {
    let out = OutputLayout::new(&config.output_dir);
    let layout = &config.data.layout;
    let mut m = builder("preprocess", config);
    fsutil::require(&config.data.cases_dir)?;
    let dirs = dataset::list_cases(&config.data.cases_dir)?;
    let mut ids = Vec::with_capacity(dirs.len());
    for dir in &dirs {
        let case = dataset::load_case(dir, layout)?;
        for f in case_files(dir, case.case_id(), layout, true) {
            m.input(f);
        }
        let normalized = Case::new(normalize_scan(&case.scan), case.labels.clone())?;
        let saved = dataset::save_case(&out.normalized_cases(), &normalized, layout)?;
        for f in case_files(&saved, case.case_id(), layout, true) {
            m.output(f);
        }
        log::info!("preprocessed {}", case.case_id());
        ids.push(case.case_id().to_string());
    }
    let fraction = config.training.split_fraction;
    let (train, val) = split_dataset(&ids, fraction, config.seed)?;
    let split = Split {
        seed: config.seed,
        fraction,
        train,
        val,
    };
    fsutil::write_json(&out.split(), &split)?;
    m.output(out.split());
    m.finish(&out.preprocess_dir(), "manifest")?;
    Ok(split)
}

fn load_split(out: &OutputLayout) -> Result<Split> {
    fsutil::require(&out.split())?;
    fsutil::read_json(&out.split())
}

fn load_normalized(out: &OutputLayout, ids: &[String], layout: &CaseLayout, m: &mut ManifestBuilder) -> Result<Vec<Case>> {
    ids.iter()
        .map(|id| {
            let dir = out.normalized_cases().join(id);
            for f in case_files(&dir, id, layout, true) {
                fsutil::require(&f)?;
                m.input(f);
            }
            dataset::load_case(&dir, layout)
        })
        .collect()
}

/// Training curves and selection results without wall-clock fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub spec: NetworkSpec,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub stages: Vec<StageSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub region: SubregionId,
    pub parent: Option<SubregionId>,
    pub weights_sha256: String,
    pub report: TrainReport,
}

pub fn train_stage(config: &PipelineConfig) -> Result<TrainSummary> {
    let out = OutputLayout::new(&config.output_dir);
    let layout = &config.data.layout;
    let mut m = builder("train", config);
    let split = load_split(&out)?;
    m.input(out.split());
    let all: Vec<String> = split.train.iter().chain(&split.val).cloned().collect();
    let cases = load_normalized(&out, &all, layout, &mut m)?;
    let dims = cases[0].scan.dims();
    if let Some(c) = cases.iter().find(|c| c.scan.dims() != dims) {
        return Err(PipelineError::ShapeMismatch {
            case: c.case_id().into(),
            detail: format!("{:?} differs from the cohort's {:?}", c.scan.dims(), dims),
        });
    }
    let spec = config.network.spec(dims[1], dims[0]);
    let data = CascadeData::from_normalized(&cases, split.train.clone(), split.val.clone())?;
    let outcome = run_cascade_prepared(&spec, &config.cascade(), data)?;
    let mut checksums: BTreeMap<SubregionId, String> = BTreeMap::new();
    let mut stages = Vec::new();
    let mut timings = Vec::new();
    for stage in &outcome.stages {
        let parent = stage.parent.map(|p| (p, checksums[&p].clone()));
        let header = artifacts::header_for(&spec, &stage.weights, stage.region, parent);
        let path = out.weights(stage.region);
        let sha = artifacts::save_weights(&path, &header, &stage.weights)?;
        m.output(&path);
        checksums.insert(stage.region, sha.clone());
        let mut report = stage.report.clone();
        timings.push((stage.region, report.wall_clock_secs.take()));
        stages.push(StageSummary {
            region: stage.region,
            parent: stage.parent,
            weights_sha256: sha,
            report,
        });
    }
    let summary = TrainSummary {
        spec,
        train_ids: outcome.train_ids,
        val_ids: outcome.val_ids,
        stages,
    };
    let report_path = out.train_dir().join("train_report.json");
    fsutil::write_json(&report_path, &summary)?;
    m.output(&report_path);
    let curves = out.train_dir().join("train_curves.csv");
    write_curves(&curves, &summary)?;
    m.output(&curves);
    fsutil::write_json(&out.train_dir().join("stage_timings.json"), &timings)?;
    m.finish(&out.train_dir(), "manifest")?;
    Ok(summary)
}

fn write_curves(path: &Path, summary: &TrainSummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let map = |e: csv::Error| PipelineError::format(path, e);
    w.write_record(["region", "epoch", "train_loss", "val_loss"]).map_err(map)?;
    for s in &summary.stages {
        w.write_record([s.region.name(), "0", "", &s.report.initial_val_loss.to_string()])
            .map_err(map)?;
        for (e, (t, v)) in s.report.train_loss.iter().zip(&s.report.val_loss).enumerate() {
            w.write_record([s.region.name(), &(e + 1).to_string(), &t.to_string(), &v.to_string()])
                .map_err(map)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| PipelineError::format(path, e))?;
    fsutil::write_atomic(path, &bytes)
}

/// The three subregion weight files needed for segmentation.
pub struct SegmentationModel {
    pub ncr: WeightFile,
    pub ed: WeightFile,
    pub et: WeightFile,
}

impl SegmentationModel {
    pub fn paths(dir: &Path) -> [PathBuf; 3] {
        [SubregionId::NCR, SubregionId::ED, SubregionId::ET].map(|r| dir.join(format!("{}.glwt", r.name())))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let [ncr, ed, et] = Self::paths(dir);
        for p in [&ncr, &ed, &et] {
            fsutil::require(p)?;
        }
        Ok(SegmentationModel {
            ncr: artifacts::load_weights(&ncr)?,
            ed: artifacts::load_weights(&ed)?,
            et: artifacts::load_weights(&et)?,
        })
    }

    /// Segments a normalized scan.
    pub fn segment(&self, scan: &glioma_core::MultiModalScan, threshold: f64, batch_size: usize) -> Result<LabelMap> {
        let weights = SubregionWeights {
            ncr: &self.ncr.weights,
            ed: &self.ed.weights,
            et: &self.et.weights,
        };
        Ok(segment_volume(&self.ncr.header.spec, weights, scan, threshold, batch_size)?)
    }
}

/// Segments one raw case directory and writes the label map to `out`.
pub fn segment_case(weights_dir: &Path, case_dir: &Path, out: &Path, layout: &CaseLayout, threshold: f64) -> Result<()> {
    let model = SegmentationModel::load(weights_dir)?;
    let scan = normalize_scan(&dataset::load_scan(case_dir, layout)?);
    let labels = model.segment(&scan, threshold, 8)?;
    nifti_io::write_label_map(out, &labels)
}

pub fn segment_stage(config: &PipelineConfig) -> Result<Vec<String>> {
    let out = OutputLayout::new(&config.output_dir);
    let layout = &config.data.layout;
    let mut m = builder("segment", config);
    let split = load_split(&out)?;
    m.input(out.split());
    for p in SegmentationModel::paths(&out.train_dir()) {
        fsutil::require(&p)?;
        m.input(p);
    }
    let model = SegmentationModel::load(&out.train_dir())?;
    let ids: Vec<String> = match config.segmentation.cases {
        CaseSelection::All => split.train.iter().chain(&split.val).cloned().collect(),
        CaseSelection::Validation => split.val.clone(),
    };
    let mut ids = ids;
    ids.sort();
    for id in &ids {
        let dir = out.normalized_cases().join(id);
        for f in case_files(&dir, id, layout, false) {
            fsutil::require(&f)?;
            m.input(f);
        }
        let scan = dataset::load_scan(&dir, layout)?;
        let labels = model.segment(&scan, config.training.threshold, config.segmentation.batch_size)?;
        let path = layout.seg_path(&out.segment_dir().join(id), id);
        nifti_io::write_label_map(&path, &labels)?;
        m.output(path);
        log::info!("segmented {id}");
    }
    m.finish(&out.segment_dir(), "manifest")?;
    Ok(ids)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub cases: Vec<CaseMetrics>,
    pub summary: SummaryTable,
}

/// Scores every case under `pred_dir` against the same case under `gt_dir`.
pub fn evaluate_dirs(pred_dir: &Path, gt_dir: &Path, layout: &CaseLayout, m: &mut ManifestBuilder) -> Result<EvaluationReport> {
    let mut cases = Vec::new();
    for dir in dataset::list_cases(pred_dir)? {
        let id = dataset::case_id_of(&dir)?;
        let pred_path = layout.seg_path(&dir, &id);
        let gt_path = layout.seg_path(&gt_dir.join(&id), &id);
        fsutil::require(&pred_path)?;
        fsutil::require(&gt_path)?;
        let pred = nifti_io::read_label_map(&pred_path, &id)?;
        let gt = nifti_io::read_label_map(&gt_path, &id)?;
        m.input(&pred_path);
        m.input(&gt_path);
        cases.push(evaluate_case(&pred, &gt)?);
    }
    let summary = aggregate(&cases)?;
    Ok(EvaluationReport { cases, summary })
}

fn column_name(metric: Metric, region: SubregionId) -> String {
    format!("{}_{}", metric.name(), region.name())
}

/// Rows are the summary statistics plus an exclusion count; columns are
/// metric x region.
pub fn summary_csv(summary: &SummaryTable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fmt = |e: csv::Error| PipelineError::format("summary table", e);
    let mut header = vec!["Statistic".to_string()];
    header.extend(summary.columns.iter().map(|c| column_name(c.metric, c.region)));
    w.write_record(&header).map_err(fmt)?;
    for (i, row) in SUMMARY_ROWS.iter().enumerate() {
        let mut rec = vec![row.to_string()];
        rec.extend(summary.columns.iter().map(|c| c.rows()[i].to_string()));
        w.write_record(&rec).map_err(fmt)?;
    }
    let mut rec = vec!["Excluded".to_string()];
    rec.extend(summary.columns.iter().map(|c| c.excluded.to_string()));
    w.write_record(&rec).map_err(fmt)?;
    w.into_inner().map_err(|e| PipelineError::format("summary table", e))
}

fn per_case_csv(cases: &[CaseMetrics]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fmt = |e: csv::Error| PipelineError::format("per-case table", e);
    let mut header = vec!["case_id".to_string()];
    for metric in Metric::ALL {
        for region in SubregionId::EVALUATED {
            header.push(column_name(metric, region));
        }
    }
    w.write_record(&header).map_err(fmt)?;
    for c in cases {
        let mut rec = vec![c.case_id.clone()];
        for metric in Metric::ALL {
            for region in SubregionId::EVALUATED {
                let r = c.region(region).expect("evaluated region");
                rec.push(match metric {
                    Metric::Dice => r.dice.to_string(),
                    Metric::Sensitivity => r.sensitivity.to_string(),
                    Metric::Hausdorff95 => r.hausdorff95.map(|v| v.to_string()).unwrap_or_else(|| "undefined".into()),
                });
            }
        }
        w.write_record(&rec).map_err(fmt)?;
    }
    w.into_inner().map_err(|e| PipelineError::format("per-case table", e))
}

/// Writes `<out>` (JSON), the summary table next to it with a `.csv`
/// extension, and a per-case CSV.
pub fn write_evaluation(out: &Path, report: &EvaluationReport, m: &mut ManifestBuilder) -> Result<()> {
    fsutil::write_json(out, report)?;
    let table = out.with_extension("csv");
    fsutil::write_atomic(&table, &summary_csv(&report.summary)?)?;
    let per_case = out.with_file_name(format!(
        "{}_per_case.csv",
        out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    ));
    fsutil::write_atomic(&per_case, &per_case_csv(&report.cases)?)?;
    for p in [out.to_path_buf(), table, per_case] {
        m.output(p);
    }
    Ok(())
}

pub fn evaluate_stage(config: &PipelineConfig) -> Result<EvaluationReport> {
    let out = OutputLayout::new(&config.output_dir);
    let mut m = builder("evaluate", config);
    fsutil::require(&out.segment_dir())?;
    let report = evaluate_dirs(&out.segment_dir(), &config.data.cases_dir, &config.data.layout, &mut m)?;
    write_evaluation(&out.metrics_json(), &report, &mut m)?;
    m.finish(&out.evaluate_dir(), "manifest")?;
    Ok(report)
}

/// Feature rows for every labelled case under `labels_dir` that has survival
/// metadata. The brain mask is the nonzero region of the case's scan under
/// `scans_dir`.
pub fn extract_features(
    labels_dir: &Path,
    scans_dir: &Path,
    records: &[SurvivalRecord],
    layout: &CaseLayout,
    m: &mut ManifestBuilder,
) -> Result<FeatureTable> {
    let mut rows = Vec::new();
    for dir in dataset::list_cases(labels_dir)? {
        let id = dataset::case_id_of(&dir)?;
        let Some(record) = records.iter().find(|r| r.case_id == id) else {
            log::warn!("{id}: no survival metadata, skipped");
            continue;
        };
        let seg = layout.seg_path(&dir, &id);
        fsutil::require(&seg)?;
        let labels = nifti_io::read_label_map(&seg, &id)?;
        m.input(&seg);
        let scan_dir = scans_dir.join(&id);
        let scan = dataset::load_scan(&scan_dir, layout)?;
        for f in case_files(&scan_dir, &id, layout, false) {
            m.input(f);
        }
        rows.push(build_feature_vector(&labels, &scan.brain_mask(), record.age)?);
    }
    Ok(FeatureTable::new(rows))
}

pub fn load_records(path: &Path, config: Option<&PipelineConfig>) -> Result<Vec<SurvivalRecord>> {
    fsutil::require(path)?;
    let default = tables::SurvivalColumns::default();
    let columns = config.map(|c| &c.data.survival_columns).unwrap_or(&default);
    tables::load_survival_table(path, columns)
}

fn survival_csv(config: &PipelineConfig) -> Result<&Path> {
    config
        .data
        .survival_csv
        .as_deref()
        .ok_or_else(|| PipelineError::config("data.survival_csv", "required by the survival stages"))
}

pub fn features_stage(config: &PipelineConfig) -> Result<FeatureTable> {
    let out = OutputLayout::new(&config.output_dir);
    let mut m = builder("features", config);
    let meta = survival_csv(config)?;
    let records = load_records(meta, Some(config))?;
    m.input(meta);
    let labels_dir = match config.features.source {
        LabelSource::GroundTruth => config.data.cases_dir.clone(),
        LabelSource::Predicted => {
            fsutil::require(&out.segment_dir())?;
            out.segment_dir()
        }
    };
    let table = extract_features(&labels_dir, &config.data.cases_dir, &records, &config.data.layout, &mut m)?;
    tables::write_features(&out.features_csv(), &table)?;
    m.output(out.features_csv());
    m.finish(&out.features_dir(), "manifest")?;
    Ok(table)
}

/// Feature rows joined with known survival, in feature-table order.
fn training_rows(table: &FeatureTable, records: &[SurvivalRecord]) -> (Vec<String>, Vec<Vec<f64>>, Vec<f64>) {
    let mut ids = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for row in &table.rows {
        if let Some(days) = records.iter().find(|r| r.case_id == row.case_id).and_then(|r| r.survival_days) {
            ids.push(row.case_id.clone());
            x.push(row.values.clone());
            y.push(days);
        }
    }
    (ids, x, y)
}

/// Fits the forest on every case with known survival.
pub fn train_survival(table: &FeatureTable, records: &[SurvivalRecord], params: &ForestParams, seed: u64) -> Result<ForestModel> {
    let (_, x, y) = training_rows(table, records);
    Ok(fit_rfr(&table.names, &x, &y, params, seed)?)
}

pub fn survival_train_stage(config: &PipelineConfig) -> Result<ForestModel> {
    let out = OutputLayout::new(&config.output_dir);
    let mut m = builder("survival-train", config);
    fsutil::require(&out.features_csv())?;
    let table = tables::read_features(&out.features_csv())?;
    m.input(out.features_csv());
    let meta = survival_csv(config)?;
    let records = load_records(meta, Some(config))?;
    m.input(meta);
    let model = train_survival(&table, &records, &config.survival.forest(), config.seed)?;
    artifacts::save_model(&out.model(), &model)?;
    m.output(out.model());
    m.finish(&out.survival_dir(), "manifest_train")?;
    Ok(model)
}

pub fn predict_survival(model: &ForestModel, table: &FeatureTable, thresholds: ClassThresholds) -> Result<Vec<Prediction>> {
    model.check_schema(&table.names)?;
    table
        .rows
        .iter()
        .map(|r| {
            let days = model.predict_days(&table.names, &r.values)?;
            Ok(Prediction {
                case_id: r.case_id.clone(),
                predicted_days: days,
                predicted_class: classify(days, thresholds)?,
            })
        })
        .collect()
}

pub fn survival_predict_stage(config: &PipelineConfig) -> Result<Vec<Prediction>> {
    let out = OutputLayout::new(&config.output_dir);
    let mut m = builder("survival-predict", config);
    for p in [out.model(), out.features_csv()] {
        fsutil::require(&p)?;
        m.input(p);
    }
    let model = artifacts::load_model(&out.model())?;
    let table = tables::read_features(&out.features_csv())?;
    let thresholds = config.survival.thresholds()?;
    let mut predictions = predict_survival(&model, &table, thresholds)?;
    if config.survival.evaluation == EvaluationMode::CrossValidation {
        let meta = survival_csv(config)?;
        let records = load_records(meta, Some(config))?;
        m.input(meta);
        let (ids, x, y) = training_rows(&table, &records);
        let folds = config.survival.folds.min(x.len());
        let oof = cross_validated_predictions(&table.names, &x, &y, &config.survival.forest(), folds, config.seed)?;
        for (id, days) in ids.iter().zip(oof) {
            let p = predictions.iter_mut().find(|p| &p.case_id == id).expect("row present");
            p.predicted_days = days;
            p.predicted_class = classify(days, thresholds)?;
        }
    }
    tables::write_predictions(&out.predictions(), &predictions)?;
    m.output(out.predictions());
    m.finish(&out.survival_dir(), "manifest_predict")?;
    Ok(predictions)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalEvaluation {
    pub evaluation: EvaluationMode,
    pub thresholds: ClassThresholds,
    pub case_ids: Vec<String>,
    pub report: OSReport,
}

/// Scores predictions on gross-total-resection cases with known survival.
pub fn evaluate_survival(
    predictions: &[Prediction],
    records: &[SurvivalRecord],
    thresholds: ClassThresholds,
    evaluation: EvaluationMode,
) -> Result<SurvivalEvaluation> {
    let mut ids = Vec::new();
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for r in filter_gtr(records) {
        if let Some(p) = predictions.iter().find(|p| p.case_id == r.case_id) {
            ids.push(r.case_id.clone());
            pred.push(p.predicted_days);
            truth.push(r.survival_days.expect("filtered on known survival"));
        }
    }
    let report = evaluate_os(&pred, &truth, thresholds)?;
    Ok(SurvivalEvaluation {
        evaluation,
        thresholds,
        case_ids: ids,
        report,
    })
}

pub fn os_report_csv(e: &SurvivalEvaluation) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fmt = |err: csv::Error| PipelineError::format("survival table", err);
    w.write_record(["Evaluation", "Accuracy", "MSE", "MedianSE", "StdSE", "SpearmanR", "Cases"])
        .map_err(fmt)?;
    let r = &e.report;
    let mode = match e.evaluation {
        EvaluationMode::Resubstitution => "resubstitution",
        EvaluationMode::CrossValidation => "cross_validation",
    };
    w.write_record([
        mode.to_string(),
        r.accuracy.to_string(),
        r.mse.to_string(),
        r.median_se.to_string(),
        r.std_se.to_string(),
        r.spearman_r.to_string(),
        r.n_cases.to_string(),
    ])
    .map_err(fmt)?;
    w.into_inner().map_err(|err| PipelineError::format("survival table", err))
}

pub fn write_survival_evaluation(out: &Path, e: &SurvivalEvaluation, m: &mut ManifestBuilder) -> Result<()> {
    fsutil::write_json(out, e)?;
    let csv_path = out.with_extension("csv");
    fsutil::write_atomic(&csv_path, &os_report_csv(e)?)?;
    m.output(out);
    m.output(csv_path);
    Ok(())
}

pub fn survival_eval_stage(config: &PipelineConfig) -> Result<SurvivalEvaluation> {
    let out = OutputLayout::new(&config.output_dir);
    let mut m = builder("survival-eval", config);
    fsutil::require(&out.predictions())?;
    let predictions = tables::read_predictions(&out.predictions())?;
    m.input(out.predictions());
    let meta = survival_csv(config)?;
    let records = load_records(meta, Some(config))?;
    m.input(meta);
    let e = evaluate_survival(&predictions, &records, config.survival.thresholds()?, config.survival.evaluation)?;
    write_survival_evaluation(&out.os_report(), &e, &mut m)?;
    m.finish(&out.survival_dir(), "manifest_eval")?;
    Ok(e)
}

/// Renders the summary tables from stored artifacts without recomputing
/// anything.
pub fn report_stage(config: &PipelineConfig) -> Result<()> {
    let out = OutputLayout::new(&config.output_dir);
    let mut m = builder("report", config);
    fsutil::require(&out.metrics_json())?;
    let eval: EvaluationReport = fsutil::read_json(&out.metrics_json())?;
    m.input(out.metrics_json());
    let dir = out.report_dir();
    let seg = dir.join("segmentation_table.csv");
    fsutil::write_atomic(&seg, &summary_csv(&eval.summary)?)?;
    m.output(&seg);
    let train_report = out.train_dir().join("train_report.json");
    if train_report.exists() {
        let summary: TrainSummary = fsutil::read_json(&train_report)?;
        m.input(&train_report);
        let path = dir.join("training_table.csv");
        let mut w = csv::Writer::from_writer(Vec::new());
        let fmt = |e: csv::Error| PipelineError::format(&path, e);
        w.write_record(["Region", "Parent", "InitialValLoss", "BestValLoss", "BestEpoch", "Steps"])
            .map_err(fmt)?;
        for s in &summary.stages {
            w.write_record([
                s.region.name().to_string(),
                s.parent.map(|p| p.name().to_string()).unwrap_or_default(),
                s.report.initial_val_loss.to_string(),
                s.report.best_val_loss.to_string(),
                s.report.best_epoch.to_string(),
                s.report.steps.to_string(),
            ])
            .map_err(fmt)?;
        }
        let bytes = w.into_inner().map_err(|e| PipelineError::format(&path, e))?;
        fsutil::write_atomic(&path, &bytes)?;
        m.output(&path);
    }
    if out.os_report().exists() {
        let e: SurvivalEvaluation = fsutil::read_json(&out.os_report())?;
        m.input(out.os_report());
        let json = dir.join("survival_table.json");
        fsutil::write_json(&json, &e.report)?;
        let csv_path = dir.join("survival_table.csv");
        fsutil::write_atomic(&csv_path, &os_report_csv(&e)?)?;
        m.output(json);
        m.output(csv_path);
    }
    m.finish(&dir, "manifest")?;
    Ok(())
}

/// Runs every stage in order. Survival stages are skipped when no survival
/// metadata is configured.
pub fn run_pipeline(config: &PipelineConfig) -> Result<()> {
    preprocess_stage(config)?;
    train_stage(config)?;
    segment_stage(config)?;
    evaluate_stage(config)?;
    if config.data.survival_csv.is_some() {
        features_stage(config)?;
        survival_train_stage(config)?;
        survival_predict_stage(config)?;
        survival_eval_stage(config)?;
    }
    report_stage(config)
}
