//! Random-forest regression of overall-survival days and the three-class
//! survival report.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use crate::data_model::{filter_gtr, filter_gtr_for_prediction};
use crate::error::{Error, Result};
use crate::features::names_fingerprint;
use crate::stats;

pub const MIN_TRAINING_SAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves cannot be split further.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features tried per split; `None` means `ceil(sqrt(F))`.
    pub max_features: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 2,
            max_features: None,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be positive".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("min_samples_leaf must be positive".into()));
        }
        if self.max_features == Some(0) {
            return Err(Error::Config("max_features must be positive".into()));
        }
        Ok(())
    }

    fn mtry(&self, n_features: usize) -> usize {
        let default = libm::ceil(libm::sqrt(n_features as f64)) as usize;
        self.max_features.unwrap_or(default).clamp(1, n_features)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Node {
    Split {
        feature: usize,
        /// Samples with `x[feature] <= threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tree {
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    params: ForestParams,
    mtry: usize,
    n_features: usize,
}

impl Builder<'_> {
    fn grow(&self, rng: &mut ChaCha8Rng, samples: &mut [usize], depth: usize, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        let mean = samples.iter().map(|&i| self.y[i]).sum::<f64>() / samples.len() as f64;
        nodes.push(Node::Leaf(mean));
        let min_leaf = self.params.min_samples_leaf;
        let pure = samples.iter().all(|&i| self.y[i] == self.y[samples[0]]);
        if pure || samples.len() < 2 * min_leaf || self.params.max_depth.is_some_and(|d| depth >= d) {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(rng, samples) else {
            return id;
        };
        let mut lo = 0;
        for k in 0..samples.len() {
            if self.x[samples[k]][feature] <= threshold {
                samples.swap(lo, k);
                lo += 1;
            }
        }
        let (l, r) = samples.split_at_mut(lo);
        let left = self.grow(rng, l, depth + 1, nodes);
        let right = self.grow(rng, r, depth + 1, nodes);
        nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&self, rng: &mut ChaCha8Rng, samples: &[usize]) -> Option<(usize, f64)> {
        let mut features: Vec<usize> = (0..self.n_features).collect();
        for i in 0..self.mtry {
            let j = rng.gen_range(i..self.n_features);
            features.swap(i, j);
        }
        let n = samples.len();
        let total: f64 = samples.iter().map(|&i| self.y[i]).sum();
        let min_leaf = self.params.min_samples_leaf;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<usize> = samples.to_vec();
        for &f in &features[..self.mtry] {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += self.y[order[k]];
                let nl = k + 1;
                let nr = n - nl;
                let (a, b) = (self.x[order[k]][f], self.x[order[k + 1]][f]);
                if nl < min_leaf || nr < min_leaf || a == b {
                    continue;
                }
                // Maximizing this is equivalent to minimizing the children's summed squared error.
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64;
                if best.is_none_or(|(s, _, _)| score > s) {
                    let mid = a + (b - a) / 2.0;
                    let threshold = if mid < b { mid } else { a };
                    best = Some((score, f, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ForestModel {
    pub params: ForestParams,
    pub seed: u64,
    pub feature_names: Vec<String>,
    pub fingerprint: String,
    pub trees: Vec<Tree>,
    /// Out-of-bag coefficient of determination; `None` if no sample was ever
    /// out of bag.
    pub oob_r2: Option<f64>,
    pub oob_mse: Option<f64>,
}

fn validate_matrix(x: &[Vec<f64>], n_features: usize) -> Result<()> {
    for row in x {
        if row.len() != n_features {
            return Err(Error::shape(alloc::format!(
                "feature row has {} values, expected {n_features}",
                row.len()
            )));
        }
        if let Some(index) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidFeature { index });
        }
    }
    Ok(())
}

/// Fits a bagged regression forest. Tree `t` draws its bootstrap and feature
/// subsets from a stream seeded by `(seed, t)`.
pub fn fit_rfr<S: AsRef<str>>(
    feature_names: &[S],
    x: &[Vec<f64>],
    y: &[f64],
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel> {
    params.validate()?;
    if x.len() != y.len() {
        return Err(Error::shape(alloc::format!("{} feature rows vs {} targets", x.len(), y.len())));
    }
    if x.len() < MIN_TRAINING_SAMPLES {
        return Err(Error::TooFewSamples {
            min: MIN_TRAINING_SAMPLES,
            got: x.len(),
        });
    }
    let n_features = feature_names.len();
    if n_features == 0 {
        return Err(Error::InvalidInput("at least one feature is required".into()));
    }
    validate_matrix(x, n_features)?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("survival targets must be finite".into()));
    }
    let builder = Builder {
        x,
        y,
        params: *params,
        mtry: params.mtry(n_features),
        n_features,
    };
    let n = x.len();
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut oob_sum = vec![0.0; n];
    let mut oob_count = vec![0usize; n];
    for t in 0..params.n_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        let mut in_bag = vec![false; n];
        let mut samples: Vec<usize> = (0..n)
            .map(|_| {
                let i = rng.gen_range(0..n);
                in_bag[i] = true;
                i
            })
            .collect();
        let mut nodes = Vec::new();
        builder.grow(&mut rng, &mut samples, 0, &mut nodes);
        let tree = Tree { nodes };
        for i in (0..n).filter(|&i| !in_bag[i]) {
            oob_sum[i] += tree.predict(&x[i]);
            oob_count[i] += 1;
        }
        trees.push(tree);
    }
    let (mut pred, mut truth) = (Vec::new(), Vec::new());
    for i in (0..n).filter(|&i| oob_count[i] > 0) {
        pred.push(oob_sum[i] / oob_count[i] as f64);
        truth.push(y[i]);
    }
    let (oob_r2, oob_mse) = if pred.is_empty() {
        (None, None)
    } else {
        let m = stats::mean(&truth);
        let sse: f64 = pred.iter().zip(&truth).map(|(p, t)| (p - t) * (p - t)).sum();
        let sst: f64 = truth.iter().map(|t| (t - m) * (t - m)).sum();
        let r2 = if sst > 0.0 { 1.0 - sse / sst } else if sse == 0.0 { 1.0 } else { 0.0 };
        (Some(r2), Some(sse / pred.len() as f64))
    };
    Ok(ForestModel {
        params: *params,
        seed,
        feature_names: feature_names.iter().map(|s| String::from(s.as_ref())).collect(),
        fingerprint: names_fingerprint(feature_names),
        trees,
        oob_r2,
        oob_mse,
    })
}

impl ForestModel {
    /// Mean tree output without schema checks.
    pub fn predict_raw(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn check_schema<S: AsRef<str>>(&self, feature_names: &[S]) -> Result<()> {
        let got = names_fingerprint(feature_names);
        if got != self.fingerprint {
            return Err(Error::FeatureSchemaMismatch {
                expected: self.fingerprint.clone(),
                got,
            });
        }
        Ok(())
    }

    /// Predicted survival in days, clamped at 0.
    pub fn predict_days<S: AsRef<str>>(&self, feature_names: &[S], x: &[f64]) -> Result<f64> {
        self.check_schema(feature_names)?;
        if x.len() != self.feature_names.len() {
            return Err(Error::shape(alloc::format!(
                "feature row has {} values, expected {}",
                x.len(),
                self.feature_names.len()
            )));
        }
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidFeature { index });
        }
        Ok(self.predict_raw(x).max(0.0))
    }
}

/// Out-of-fold predictions from `folds`-fold cross-validation with a seeded
/// fold assignment.
pub fn cross_validated_predictions<S: AsRef<str>>(
    feature_names: &[S],
    x: &[Vec<f64>],
    y: &[f64],
    params: &ForestParams,
    folds: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if folds < 2 || folds > x.len() {
        return Err(Error::Config(alloc::format!("folds must be in [2, {}]", x.len())));
    }
    if x.len() != y.len() {
        return Err(Error::shape(alloc::format!("{} feature rows vs {} targets", x.len(), y.len())));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let mut out = vec![0.0; x.len()];
    for fold in 0..folds {
        let held: Vec<usize> = order.iter().copied().skip(fold).step_by(folds).collect();
        let (tx, ty): (Vec<Vec<f64>>, Vec<f64>) = order
            .iter()
            .copied()
            .filter(|i| !held.contains(i))
            .map(|i| (x[i].clone(), y[i]))
            .unzip();
        let model = fit_rfr(feature_names, &tx, &ty, params, seed.wrapping_add(fold as u64))?;
        for &i in &held {
            out[i] = model.predict_raw(&x[i]).max(0.0);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SurvivalClass {
    Short,
    Medium,
    Long,
}

impl SurvivalClass {
    pub fn name(self) -> &'static str {
        match self {
            SurvivalClass::Short => "short",
            SurvivalClass::Medium => "medium",
            SurvivalClass::Long => "long",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassThresholds {
    /// Below this many days is short.
    pub short_below: f64,
    /// Above this many days is long.
    pub long_above: f64,
}

impl Default for ClassThresholds {
    fn default() -> Self {
        ClassThresholds {
            short_below: 300.0,
            long_above: 450.0,
        }
    }
}

impl ClassThresholds {
    pub fn new(short_below: f64, long_above: f64) -> Result<Self> {
        if !(short_below.is_finite() && long_above.is_finite() && short_below < long_above) {
            return Err(Error::Config(alloc::format!(
                "survival thresholds must satisfy t1 < t2, got {short_below} and {long_above}"
            )));
        }
        Ok(ClassThresholds {
            short_below,
            long_above,
        })
    }
}

pub fn classify(days: f64, thresholds: ClassThresholds) -> Result<SurvivalClass> {
    if days.is_nan() || days < 0.0 {
        return Err(Error::InvalidInput(alloc::format!("survival days {days} must be non-negative")));
    }
    Ok(if days < thresholds.short_below {
        SurvivalClass::Short
    } else if days <= thresholds.long_above {
        SurvivalClass::Medium
    } else {
        SurvivalClass::Long
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OSReport {
    pub accuracy: f64,
    pub mse: f64,
    pub median_se: f64,
    pub std_se: f64,
    pub spearman_r: f64,
    pub n_cases: usize,
}

pub fn evaluate_os(pred_days: &[f64], true_days: &[f64], thresholds: ClassThresholds) -> Result<OSReport> {
    if pred_days.len() != true_days.len() {
        return Err(Error::shape(alloc::format!(
            "{} predictions vs {} ground-truth values",
            pred_days.len(),
            true_days.len()
        )));
    }
    if pred_days.len() < 2 {
        return Err(Error::TooFewSamples {
            min: 2,
            got: pred_days.len(),
        });
    }
    let mut hits = 0;
    let mut se = Vec::with_capacity(pred_days.len());
    for (&p, &t) in pred_days.iter().zip(true_days) {
        hits += (classify(p, thresholds)? == classify(t, thresholds)?) as usize;
        se.push((p - t) * (p - t));
    }
    Ok(OSReport {
        accuracy: hits as f64 / pred_days.len() as f64,
        mse: stats::mean(&se),
        median_se: stats::median(&se),
        std_se: stats::std_pop(&se),
        spearman_r: stats::spearman(pred_days, true_days),
        n_cases: pred_days.len(),
    })
}
