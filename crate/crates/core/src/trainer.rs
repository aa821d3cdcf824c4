//! The whole-tumor to subregion transfer-learning cascade and inference.
//!
//! The whole-tumor network is trained from scratch first. Every other
//! subregion network starts from the whole-tumor weights and is fine-tuned on
//! its own binary target. At inference the NCR, ED and ET networks are run per
//! slice, thresholded and merged into one label map.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data_model::{merge_subregion_masks, Case, LabelMap, MultiModalScan, SubregionId};
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::nn::{Adam, AdamConfig, Network, NetworkSpec, Tensor, WeightSet};
use crate::preprocess::{self, SliceSample};
use crate::volume::{BinaryMask, Volume};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CascadeConfig {
    pub loss: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    /// Stops a stage after this many optimizer steps even mid-epoch.
    pub max_steps: Option<usize>,
    pub seed: u64,
    pub split_fraction: f64,
    /// Training order; must start with the whole tumor.
    pub regions: Vec<SubregionId>,
    /// Probability at or above which a pixel counts as foreground.
    pub threshold: f64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            loss: LossKind::Dice,
            epochs: 50,
            batch_size: 8,
            optimizer: AdamConfig::default(),
            max_steps: None,
            seed: 0,
            split_fraction: 0.75,
            regions: vec![SubregionId::WT, SubregionId::NCR, SubregionId::ED, SubregionId::ET],
            threshold: 0.5,
        }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.regions.first() != Some(&SubregionId::WT) {
            return Err(Error::Config("the cascade must train WT first".into()));
        }
        for (i, r) in self.regions.iter().enumerate() {
            if self.regions[..i].contains(r) {
                return Err(Error::Config(format!("region {r} listed twice")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.optimizer.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::Config("split fraction must be in (0, 1)".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config("threshold must be in (0, 1)".into()));
        }
        if let LossKind::Focal(p) = self.loss {
            crate::losses::FocalParams::new(p.alpha, p.gamma).map_err(|e| Error::Config(format!("{e}")))?;
        }
        Ok(())
    }

    /// Seed for the network initialization and shuffling of one stage.
    pub fn stage_seed(&self, region: SubregionId) -> u64 {
        let salt = (region as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        self.seed ^ salt
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainReport {
    pub region: SubregionId,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Validation loss of the starting weights, before any update.
    pub initial_val_loss: f64,
    /// Epoch of the returned weights; 0 means the starting weights.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub steps: usize,
    pub seed: u64,
    /// Not part of the deterministic payload.
    pub wall_clock_secs: Option<f64>,
}

/// Training and validation slices for one stage.
#[derive(Debug, Clone, Copy)]
pub struct StageData<'a> {
    pub train: &'a [SliceSample],
    pub val: &'a [SliceSample],
}

fn batch_tensor(samples: &[&SliceSample]) -> Result<(Tensor<f32>, Vec<f32>)> {
    let first = samples.first().ok_or(Error::EmptyInput)?;
    let (h, w) = (first.height, first.width);
    let mut image = Vec::with_capacity(samples.len() * 4 * h * w);
    let mut target = Vec::with_capacity(samples.len() * h * w);
    for s in samples {
        if s.height != h || s.width != w || s.image.len() != 4 * h * w || s.target.len() != h * w {
            return Err(Error::shape(format!(
                "slice {}#{} does not match batch geometry {h}x{w}",
                s.case_id, s.slice_index
            )));
        }
        image.extend_from_slice(&s.image);
        target.extend_from_slice(&s.target);
    }
    Ok((Tensor::from_vec(samples.len(), 4, h, w, image), target))
}

/// Mean loss over `samples`, evaluated in consecutive batches and weighted by
/// batch size.
pub fn evaluate_loss(net: &Network<f32>, samples: &[SliceSample], loss: LossKind, batch_size: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut total = 0.0;
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&SliceSample> = chunk.iter().collect();
        let (x, y) = batch_tensor(&refs)?;
        let p = net.forward(&x)?;
        total += loss.value(&p.data, &y)? as f64 * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

#[cfg(feature = "std")]
struct Clock(std::time::Instant);
#[cfg(feature = "std")]
impl Clock {
    fn start() -> Self {
        Clock(std::time::Instant::now())
    }
    fn secs(&self) -> Option<f64> {
        Some(self.0.elapsed().as_secs_f64())
    }
}
#[cfg(not(feature = "std"))]
struct Clock;
#[cfg(not(feature = "std"))]
impl Clock {
    fn start() -> Self {
        Clock
    }
    fn secs(&self) -> Option<f64> {
        None
    }
}

/// Trains one subregion network with Adam and returns the weights with the
/// lowest validation loss (the starting weights included). Without
/// validation slices the training loss selects instead.
pub fn train_stage(
    spec: &NetworkSpec,
    region: SubregionId,
    data: StageData<'_>,
    init: Option<&WeightSet>,
    config: &CascadeConfig,
) -> Result<(WeightSet, TrainReport)> {
    let clock = Clock::start();
    if data.train.is_empty() {
        return Err(Error::EmptyInput);
    }
    let seed = config.stage_seed(region);
    let mut net = Network::<f32>::new(spec, seed)?;
    if let Some(w) = init {
        net.set_weights(w)?;
    }
    let selection_set = if data.val.is_empty() { data.train } else { data.val };
    let initial = evaluate_loss(&net, selection_set, config.loss, config.batch_size)?;
    if !initial.is_finite() {
        return Err(Error::TrainingDiverged { epoch: 0 });
    }
    let mut best_weights = net.get_weights();
    let mut best_loss = initial;
    let mut best_epoch = 0;

    let mut adam = Adam::new(config.optimizer, &net);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut train_curve = Vec::with_capacity(config.epochs);
    let mut val_curve = Vec::with_capacity(config.epochs);
    let mut steps = 0usize;
    let step_cap = config.max_steps.unwrap_or(usize::MAX);

    for epoch in 1..=config.epochs {
        if steps >= step_cap {
            break;
        }
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(config.batch_size) {
            if steps >= step_cap {
                break;
            }
            let refs: Vec<&SliceSample> = chunk.iter().map(|&i| &data.train[i]).collect();
            let (x, y) = batch_tensor(&refs)?;
            net.zero_grad();
            let cache = net.forward_train(&x)?;
            let (loss, grad) = config.loss.value_and_grad(&cache.probabilities().data, &y)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingDiverged { epoch });
            }
            net.backward(&cache, &grad);
            adam.step(&mut net);
            steps += 1;
            epoch_loss += loss as f64 * chunk.len() as f64;
            seen += chunk.len();
        }
        let train_loss = epoch_loss / seen.max(1) as f64;
        let val_loss = if data.val.is_empty() {
            evaluate_loss(&net, data.train, config.loss, config.batch_size)?
        } else {
            evaluate_loss(&net, data.val, config.loss, config.batch_size)?
        };
        if !val_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        log::info!("{region} epoch {epoch}: train {train_loss:.5} val {val_loss:.5} ({steps} steps)");
        train_curve.push(train_loss);
        val_curve.push(val_loss);
        if val_loss < best_loss {
            best_loss = val_loss;
            best_epoch = epoch;
            best_weights = net.get_weights();
        }
    }

    let report = TrainReport {
        region,
        train_loss: train_curve,
        val_loss: val_curve,
        initial_val_loss: initial,
        best_epoch,
        best_val_loss: best_loss,
        steps,
        seed,
        wall_clock_secs: clock.secs(),
    };
    Ok((best_weights, report))
}

#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub region: SubregionId,
    /// Stage whose weights initialized this one.
    pub parent: Option<SubregionId>,
    pub weights: WeightSet,
    pub report: TrainReport,
}

#[derive(Debug, Clone)]
pub struct CascadeOutcome {
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub stages: Vec<StageOutcome>,
}

impl CascadeOutcome {
    pub fn stage(&self, region: SubregionId) -> Option<&StageOutcome> {
        self.stages.iter().find(|s| s.region == region)
    }
}

/// Slices of the cascade's train and validation cases, normalized once and
/// shared between stages.
pub struct CascadeData {
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    normalized: Vec<(MultiModalScan, LabelMap, Vec<alloc::sync::Arc<[f32]>>, bool)>,
}

impl CascadeData {
    /// Normalizes every case and splits them with the configured fraction
    /// and seed.
    pub fn prepare(cases: &[Case], config: &CascadeConfig) -> Result<Self> {
        let ids: Vec<String> = cases.iter().map(|c| String::from(c.case_id())).collect();
        let (train_ids, val_ids) = preprocess::split_dataset(&ids, config.split_fraction, config.seed)?;
        let normalized: Vec<Case> = cases
            .iter()
            .map(|c| Case::new(preprocess::normalize_scan(&c.scan), c.labels.clone()))
            .collect::<Result<_>>()?;
        Self::from_normalized(&normalized, train_ids, val_ids)
    }

    /// Uses cases that are already normalized and an existing split. Cases
    /// named in neither list are ignored.
    pub fn from_normalized(cases: &[Case], train_ids: Vec<String>, val_ids: Vec<String>) -> Result<Self> {
        if train_ids.is_empty() {
            return Err(Error::TooFewCases(0));
        }
        let mut normalized = Vec::with_capacity(cases.len());
        for id in train_ids.iter().chain(&val_ids) {
            let case = cases
                .iter()
                .find(|c| c.case_id() == id)
                .ok_or_else(|| Error::InvalidInput(format!("split names unknown case {id}")))?;
            let images = preprocess::slice_images(&case.scan)?;
            let is_train = train_ids.contains(id);
            normalized.push((case.scan.clone(), case.labels.clone(), images, is_train));
        }
        Ok(CascadeData {
            train_ids,
            val_ids,
            normalized,
        })
    }

    /// `(train, val)` slices with targets for `region`.
    pub fn slices(&self, region: SubregionId) -> Result<(Vec<SliceSample>, Vec<SliceSample>)> {
        let mut train = Vec::new();
        let mut val = Vec::new();
        for (scan, labels, images, is_train) in &self.normalized {
            let samples = preprocess::with_targets(scan, images, labels, region)?;
            if *is_train {
                train.extend(samples);
            } else {
                val.extend(samples);
            }
        }
        Ok((train, val))
    }
}

/// Trains WT from scratch, then every other configured region from the WT
/// weights.
pub fn run_cascade(spec: &NetworkSpec, config: &CascadeConfig, cases: &[Case]) -> Result<CascadeOutcome> {
    config.validate()?;
    if cases.len() < 2 {
        return Err(Error::TooFewCases(cases.len()));
    }
    let data = CascadeData::prepare(cases, config)?;
    run_cascade_prepared(spec, config, data)
}

/// [`run_cascade`] on prepared slices.
pub fn run_cascade_prepared(spec: &NetworkSpec, config: &CascadeConfig, data: CascadeData) -> Result<CascadeOutcome> {
    config.validate()?;
    let mut stages: Vec<StageOutcome> = Vec::with_capacity(config.regions.len());
    for &region in &config.regions {
        let wrap = |e: Error| Error::Stage {
            region,
            source: Box::new(e),
        };
        let (train, val) = data.slices(region).map_err(wrap)?;
        let parent = (region != SubregionId::WT).then_some(SubregionId::WT);
        let init = parent.and_then(|p| stages.iter().find(|s| s.region == p)).map(|s| &s.weights);
        let (weights, report) = train_stage(spec, region, StageData { train: &train, val: &val }, init, config).map_err(wrap)?;
        stages.push(StageOutcome {
            region,
            parent,
            weights,
            report,
        });
    }
    Ok(CascadeOutcome {
        train_ids: data.train_ids,
        val_ids: data.val_ids,
        stages,
    })
}

/// Per-voxel foreground probabilities of one network over a normalized scan.
/// The dropped top slices are left at 0.
pub fn predict_probabilities(net: &Network<f32>, scan: &MultiModalScan, batch_size: usize) -> Result<Volume<f32>> {
    let [w, h, d] = scan.dims();
    let kept = preprocess::kept_slices(d)?;
    let plane = w * h;
    let mut out = Volume::filled(scan.dims(), 0.0f32);
    let mut k = 0;
    while k < kept {
        let end = (k + batch_size.max(1)).min(kept);
        let mut image = Vec::with_capacity((end - k) * 4 * plane);
        for s in k..end {
            image.extend(preprocess::slice_image(scan, s));
        }
        let p = net.forward(&Tensor::from_vec(end - k, 4, h, w, image))?;
        out.data_mut()[k * plane..end * plane].copy_from_slice(&p.data);
        k = end;
    }
    Ok(out)
}

/// The architecture of `spec` sized for this scan's slices.
pub fn spec_for_scan(spec: &NetworkSpec, scan: &MultiModalScan) -> NetworkSpec {
    NetworkSpec {
        height: scan.dims()[1],
        width: scan.dims()[0],
        ..spec.clone()
    }
}

pub fn predict_mask(
    spec: &NetworkSpec,
    weights: &WeightSet,
    scan: &MultiModalScan,
    threshold: f64,
    batch_size: usize,
) -> Result<BinaryMask> {
    let mut net = Network::<f32>::new(&spec_for_scan(spec, scan), 0)?;
    net.set_weights(weights)?;
    let p = predict_probabilities(&net, scan, batch_size)?;
    Ok(p.map(|&v| v as f64 >= threshold))
}

/// Weights of the three subregion networks used for the final label map.
#[derive(Debug, Clone, Copy)]
pub struct SubregionWeights<'a> {
    pub ncr: &'a WeightSet,
    pub ed: &'a WeightSet,
    pub et: &'a WeightSet,
}

/// Segments a scan normalized the same way as the training data.
pub fn segment_volume(
    spec: &NetworkSpec,
    weights: SubregionWeights<'_>,
    scan: &MultiModalScan,
    threshold: f64,
    batch_size: usize,
) -> Result<LabelMap> {
    let ncr = predict_mask(spec, weights.ncr, scan, threshold, batch_size)?;
    let ed = predict_mask(spec, weights.ed, scan, threshold, batch_size)?;
    let et = predict_mask(spec, weights.et, scan, threshold, batch_size)?;
    merge_subregion_masks(scan.case_id(), &ncr, &ed, &et, scan.spacing())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cascade_must_start_with_wt() {
        let mut c = CascadeConfig::default();
        c.regions = vec![SubregionId::ET, SubregionId::WT];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.regions = vec![];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.regions = vec![SubregionId::WT, SubregionId::ET, SubregionId::ET];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        assert!(CascadeConfig::default().validate().is_ok());
    }

    #[test]
    fn stage_seeds_differ() {
        let c = CascadeConfig::default();
        assert_ne!(c.stage_seed(SubregionId::WT), c.stage_seed(SubregionId::ET));
    }
}
