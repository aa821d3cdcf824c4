//! Overlap and surface-distance scores for segmentation masks and their
//! cohort-level summary.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data_model::{subregion_mask, LabelMap, SubregionId};
use crate::error::{Error, Result};
use crate::stats;
use crate::volume::{BinaryMask, Spacing};

fn counts(pred: &BinaryMask, gt: &BinaryMask) -> Result<(usize, usize, usize)> {
    pred.ensure_same_dims(gt)?;
    let mut inter = 0;
    let mut p = 0;
    let mut g = 0;
    for (&a, &b) in pred.data().iter().zip(gt.data()) {
        p += a as usize;
        g += b as usize;
        inter += (a && b) as usize;
    }
    Ok((inter, p, g))
}

/// `2|P∩G| / (|P|+|G|)`, 1 when both masks are empty.
pub fn dice(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let (inter, p, g) = counts(pred, gt)?;
    Ok(if p + g == 0 { 1.0 } else { 2.0 * inter as f64 / (p + g) as f64 })
}

/// `|P∩G| / |G|`; with an empty ground truth, 1 if the prediction is also
/// empty and 0 otherwise.
pub fn sensitivity(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let (inter, p, g) = counts(pred, gt)?;
    Ok(match (g, p) {
        (0, 0) => 1.0,
        (0, _) => 0.0,
        _ => inter as f64 / g as f64,
    })
}

/// One-dimensional squared distance transform of a sampled function
/// (lower envelope of parabolas) with sample spacing `step`.
fn edt_1d(f: &[f64], step: f64, out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let pos = |q: usize| q as f64 * step;
    let mut k = 0usize;
    let mut first = None;
    for q in 0..n {
        if f[q].is_finite() {
            first = Some(q);
            break;
        }
    }
    let Some(start) = first else {
        out.fill(f64::INFINITY);
        return;
    };
    v[0] = start;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in start + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let r = v[k];
            let s = ((f[q] + pos(q) * pos(q)) - (f[r] + pos(r) * pos(r))) / (2.0 * (pos(q) - pos(r)));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < pos(q) {
            k += 1;
        }
        let d = pos(q) - pos(v[k]);
        *o = d * d + f[v[k]];
    }
}

/// Exact squared Euclidean distance from every voxel center to the nearest
/// voxel of `mask`, with anisotropic spacing. Infinite everywhere for an
/// empty mask.
pub fn squared_distance_transform(mask: &BinaryMask, spacing: Spacing) -> Vec<f64> {
    let dims = mask.dims();
    let mut d: Vec<f64> = mask.data().iter().map(|&m| if m { 0.0 } else { f64::INFINITY }).collect();
    let longest = dims.iter().copied().max().unwrap_or(0);
    let mut line = vec![0.0; longest];
    let mut out = vec![0.0; longest];
    let mut v = vec![0usize; longest];
    let mut z = vec![0.0; longest + 1];
    let strides = [1, dims[0], dims[0] * dims[1]];
    for axis in 0..3 {
        let n = dims[axis];
        if n == 0 {
            return d;
        }
        let stride = strides[axis];
        for base in 0..d.len() {
            if !(base / stride).is_multiple_of(n) {
                continue;
            }
            for q in 0..n {
                line[q] = d[base + q * stride];
            }
            edt_1d(&line[..n], spacing[axis], &mut out[..n], &mut v, &mut z);
            for q in 0..n {
                d[base + q * stride] = out[q];
            }
        }
    }
    d
}

fn directed_p95(from: &BinaryMask, to_sq_dist: &[f64], spacing: Spacing) -> f64 {
    let _ = spacing;
    let mut ds: Vec<f64> = from
        .boundary()
        .into_iter()
        .map(|c| libm::sqrt(to_sq_dist[from.index(c)]))
        .collect();
    ds.sort_by(|a, b| a.total_cmp(b));
    stats::quantile_sorted(&ds, 0.95)
}

/// Symmetric 95th-percentile distance (mm) between the boundary voxels of
/// each mask and the other mask. `Some(0.0)` when both are empty, `None` when
/// exactly one is.
pub fn hausdorff95(pred: &BinaryMask, gt: &BinaryMask, spacing: Spacing) -> Result<Option<f64>> {
    let (_, p, g) = counts(pred, gt)?;
    match (p, g) {
        (0, 0) => return Ok(Some(0.0)),
        (0, _) | (_, 0) => return Ok(None),
        _ => {}
    }
    let to_gt = squared_distance_transform(gt, spacing);
    let to_pred = squared_distance_transform(pred, spacing);
    let a = directed_p95(pred, &to_gt, spacing);
    let b = directed_p95(gt, &to_pred, spacing);
    Ok(Some(a.max(b)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegionMetrics {
    pub dice: f64,
    pub sensitivity: f64,
    /// `None` when exactly one of the masks is empty.
    pub hausdorff95: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CaseMetrics {
    pub case_id: String,
    pub wt: RegionMetrics,
    pub tc: RegionMetrics,
    pub et: RegionMetrics,
}

impl CaseMetrics {
    pub fn region(&self, region: SubregionId) -> Option<&RegionMetrics> {
        match region {
            SubregionId::WT => Some(&self.wt),
            SubregionId::TC => Some(&self.tc),
            SubregionId::ET => Some(&self.et),
            _ => None,
        }
    }
}

pub fn evaluate_region(pred: &BinaryMask, gt: &BinaryMask, spacing: Spacing) -> Result<RegionMetrics> {
    Ok(RegionMetrics {
        dice: dice(pred, gt)?,
        sensitivity: sensitivity(pred, gt)?,
        hausdorff95: hausdorff95(pred, gt, spacing)?,
    })
}

pub fn evaluate_case(pred: &LabelMap, gt: &LabelMap) -> Result<CaseMetrics> {
    if pred.dims() != gt.dims() {
        return Err(Error::shape(alloc::format!(
            "prediction {:?} vs ground truth {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    if pred.spacing() != gt.spacing() {
        return Err(Error::shape(alloc::format!(
            "prediction spacing {:?} vs ground truth {:?}",
            pred.spacing(),
            gt.spacing()
        )));
    }
    let region = |r| evaluate_region(&subregion_mask(pred, r), &subregion_mask(gt, r), gt.spacing());
    Ok(CaseMetrics {
        case_id: gt.case_id().into(),
        wt: region(SubregionId::WT)?,
        tc: region(SubregionId::TC)?,
        et: region(SubregionId::ET)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Metric {
    Dice,
    Sensitivity,
    Hausdorff95,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Dice, Metric::Sensitivity, Metric::Hausdorff95];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Dice => "Dice",
            Metric::Sensitivity => "Sensitivity",
            Metric::Hausdorff95 => "Hausdorff95",
        }
    }

    fn of(self, m: &RegionMetrics) -> Option<f64> {
        match self {
            Metric::Dice => Some(m.dice),
            Metric::Sensitivity => Some(m.sensitivity),
            Metric::Hausdorff95 => m.hausdorff95,
        }
    }
}

/// Summary rows in table order.
pub const SUMMARY_ROWS: [&str; 5] = ["Mean", "StdDev", "Median", "25quantile", "75quantile"];

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SummaryColumn {
    pub metric: Metric,
    pub region: SubregionId,
    pub mean: f64,
    pub std_dev: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    /// Cases whose value was undefined and left out.
    pub excluded: usize,
}

impl SummaryColumn {
    /// Values in [`SUMMARY_ROWS`] order.
    pub fn rows(&self) -> [f64; 5] {
        [self.mean, self.std_dev, self.median, self.q25, self.q75]
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SummaryTable {
    pub cases: usize,
    /// Metric-major, then WT, TC, ET.
    pub columns: Vec<SummaryColumn>,
}

impl SummaryTable {
    pub fn column(&self, metric: Metric, region: SubregionId) -> Option<&SummaryColumn> {
        self.columns.iter().find(|c| c.metric == metric && c.region == region)
    }
}

/// Population statistics per metric and region. Columns with no defined
/// value hold NaN.
pub fn aggregate(cases: &[CaseMetrics]) -> Result<SummaryTable> {
    if cases.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut columns = Vec::with_capacity(9);
    for metric in Metric::ALL {
        for region in SubregionId::EVALUATED {
            let mut values: Vec<f64> = cases
                .iter()
                .filter_map(|c| c.region(region).and_then(|m| metric.of(m)))
                .collect();
            let excluded = cases.len() - values.len();
            values.sort_by(|a, b| a.total_cmp(b));
            columns.push(SummaryColumn {
                metric,
                region,
                mean: stats::mean(&values),
                std_dev: stats::std_pop(&values),
                median: stats::quantile_sorted(&values, 0.5),
                q25: stats::quantile_sorted(&values, 0.25),
                q75: stats::quantile_sorted(&values, 0.75),
                excluded,
            });
        }
    }
    Ok(SummaryTable {
        cases: cases.len(),
        columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Volume;

    fn mask(dims: [usize; 3], on: &[[usize; 3]]) -> BinaryMask {
        let mut m = Volume::filled(dims, false);
        for &c in on {
            m.set(c, true);
        }
        m
    }

    #[test]
    fn dice_and_sensitivity_examples() {
        let d = [4, 1, 1];
        let p = mask(d, &[[0, 0, 0], [1, 0, 0]]);
        let g = mask(d, &[[1, 0, 0], [2, 0, 0]]);
        assert_eq!(dice(&p, &g).unwrap(), 0.5);
        let e = mask(d, &[]);
        assert_eq!(dice(&e, &e).unwrap(), 1.0);
        assert_eq!(sensitivity(&e, &e).unwrap(), 1.0);
        assert_eq!(sensitivity(&p, &e).unwrap(), 0.0);
        let g4 = mask(d, &[[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]]);
        assert_eq!(sensitivity(&p, &g4).unwrap(), 0.5);
        assert_eq!(sensitivity(&g4, &p).unwrap(), 1.0);
    }

    #[test]
    fn hausdorff_single_voxels() {
        let d = [8, 8, 8];
        let p = mask(d, &[[1, 2, 3]]);
        let g = mask(d, &[[4, 2, 3]]);
        assert_eq!(hausdorff95(&p, &g, [1.0; 3]).unwrap(), Some(3.0));
        assert_eq!(hausdorff95(&p, &g, [2.0, 1.0, 1.0]).unwrap(), Some(6.0));
        assert_eq!(hausdorff95(&p, &p, [1.0; 3]).unwrap(), Some(0.0));
        let e = mask(d, &[]);
        assert_eq!(hausdorff95(&e, &e, [1.0; 3]).unwrap(), Some(0.0));
        assert_eq!(hausdorff95(&p, &e, [1.0; 3]).unwrap(), None);
    }

    #[test]
    fn distance_transform_is_exact() {
        let d = [5, 4, 3];
        let m = mask(d, &[[0, 0, 0], [4, 3, 2]]);
        let sp = [0.5, 1.5, 2.0];
        let dt = squared_distance_transform(&m, sp);
        for idx in 0..m.len() {
            let c = m.coords(idx);
            let best = [[0usize, 0, 0], [4, 3, 2]]
                .iter()
                .map(|s| {
                    (0..3)
                        .map(|a| {
                            let x = (c[a] as f64 - s[a] as f64) * sp[a];
                            x * x
                        })
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            assert!((dt[idx] - best).abs() < 1e-12, "{c:?}");
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = mask([2, 2, 2], &[]);
        let b = mask([2, 2, 3], &[]);
        assert!(matches!(dice(&a, &b), Err(Error::Shape(_))));
        assert!(matches!(hausdorff95(&a, &b, [1.0; 3]), Err(Error::Shape(_))));
    }

    #[test]
    fn aggregate_quantiles() {
        let mk = |v: f64| CaseMetrics {
            case_id: "c".into(),
            wt: RegionMetrics {
                dice: v,
                sensitivity: v,
                hausdorff95: Some(v),
            },
            tc: RegionMetrics {
                dice: v,
                sensitivity: v,
                hausdorff95: None,
            },
            et: RegionMetrics {
                dice: v,
                sensitivity: v,
                hausdorff95: Some(v),
            },
        };
        let cases: Vec<_> = [1.0, 2.0, 3.0, 4.0].iter().map(|&v| mk(v)).collect();
        let t = aggregate(&cases).unwrap();
        let c = t.column(Metric::Dice, SubregionId::WT).unwrap();
        assert_eq!((c.median, c.q25, c.q75), (2.5, 1.75, 3.25));
        assert!((c.std_dev - 1.25f64.sqrt()).abs() < 1e-12);
        assert_eq!(t.column(Metric::Hausdorff95, SubregionId::TC).unwrap().excluded, 4);
        assert!(matches!(aggregate(&[]), Err(Error::EmptyInput)));
        let one = aggregate(&cases[..1]).unwrap();
        let c = one.column(Metric::Dice, SubregionId::ET).unwrap();
        assert_eq!(c.rows(), [1.0, 0.0, 1.0, 1.0, 1.0]);
    }
}
