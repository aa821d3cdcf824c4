//! Intensity normalization, slice extraction and the case-level split.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data_model::{subregion_mask, LabelMap, MultiModalScan, SubregionId};
use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Volume};

/// Number of highest-index axial slices dropped from every volume.
pub const DROPPED_SLICES: usize = 10;

pub const ZSCORE_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Normalized {
    pub volume: Volume<f32>,
    /// True when the region had zero variance (or was empty) and the output
    /// collapsed to zeros.
    pub degenerate: bool,
}

/// Z-score normalization over `mask` voxels, or over nonzero voxels when no
/// mask is given. Voxels outside the region are set to 0.
pub fn zscore_normalize(volume: &Volume<f32>, mask: Option<&BinaryMask>) -> Result<Normalized> {
    if let Some(m) = mask {
        volume.ensure_same_dims(m)?;
    }
    let in_region = |idx: usize| match mask {
        Some(m) => m.data()[idx],
        None => volume.data()[idx] != 0.0,
    };
    let mut n = 0usize;
    let mut sum = 0.0f64;
    for (idx, &v) in volume.data().iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::InvalidInput(alloc::format!(
                "non-finite intensity at voxel {idx}"
            )));
        }
        if in_region(idx) {
            n += 1;
            sum += v as f64;
        }
    }
    if n == 0 {
        log::warn!("z-score region is empty; output is all zeros");
        return Ok(Normalized {
            volume: Volume::filled(volume.dims(), 0.0),
            degenerate: true,
        });
    }
    let mu = sum / n as f64;
    let var = volume
        .data()
        .iter()
        .enumerate()
        .filter(|(idx, _)| in_region(*idx))
        .map(|(_, &v)| (v as f64 - mu) * (v as f64 - mu))
        .sum::<f64>()
        / n as f64;
    let sigma = libm::sqrt(var);
    let degenerate = sigma == 0.0;
    if degenerate {
        log::warn!("z-score region has zero variance; output is all zeros");
    }
    let data = volume
        .data()
        .iter()
        .enumerate()
        .map(|(idx, &v)| {
            if in_region(idx) && !degenerate {
                ((v as f64 - mu) / (sigma + ZSCORE_EPS)) as f32
            } else {
                0.0
            }
        })
        .collect();
    Ok(Normalized {
        volume: Volume::from_vec(volume.dims(), data)?,
        degenerate,
    })
}

/// Normalizes every modality independently over its own nonzero voxels.
pub fn normalize_scan(scan: &MultiModalScan) -> MultiModalScan {
    scan.map_volumes(|v| {
        zscore_normalize(v, None)
            .expect("scan volumes are finite by construction")
            .volume
    })
}

/// One axial slice across the four modalities plus a binary target.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSample {
    pub case_id: String,
    pub slice_index: usize,
    pub height: usize,
    pub width: usize,
    /// Channel-first `4 x height x width`, modalities in fixed order. Shared
    /// between the samples of different subregions for the same slice.
    pub image: Arc<[f32]>,
    /// `height x width`, values 0 or 1.
    pub target: Vec<f32>,
}

/// Number of slices kept from a volume of the given depth.
pub fn kept_slices(depth: usize) -> Result<usize> {
    if depth <= DROPPED_SLICES {
        return Err(Error::EmptyDataset {
            depth,
            dropped: DROPPED_SLICES,
        });
    }
    Ok(depth - DROPPED_SLICES)
}

/// The four-channel image of axial slice `k`.
pub fn slice_image(scan: &MultiModalScan, k: usize) -> Vec<f32> {
    let mut image = Vec::with_capacity(4 * scan.dims()[0] * scan.dims()[1]);
    for v in scan.volumes() {
        image.extend_from_slice(v.slice(k));
    }
    image
}

/// Axial slices `0..D-10`, each paired with the region mask of that slice.
/// Tumor-free slices are kept.
pub fn extract_slices(
    scan: &MultiModalScan,
    labels: &LabelMap,
    region: SubregionId,
) -> Result<Vec<SliceSample>> {
    let images = slice_images(scan)?;
    with_targets(scan, &images, labels, region)
}

/// The kept slice images of a scan, for reuse across subregions.
pub fn slice_images(scan: &MultiModalScan) -> Result<Vec<Arc<[f32]>>> {
    let kept = kept_slices(scan.dims()[2])?;
    Ok((0..kept).map(|k| slice_image(scan, k).into()).collect())
}

/// Pairs previously extracted slice images with the targets of `region`.
pub fn with_targets(
    scan: &MultiModalScan,
    images: &[Arc<[f32]>],
    labels: &LabelMap,
    region: SubregionId,
) -> Result<Vec<SliceSample>> {
    if scan.dims() != labels.dims() {
        return Err(Error::shape(alloc::format!(
            "scan {:?} vs labels {:?}",
            scan.dims(),
            labels.dims()
        )));
    }
    let [w, h, d] = scan.dims();
    if images.len() != kept_slices(d)? {
        return Err(Error::shape("slice image count does not match the scan depth"));
    }
    let mask = subregion_mask(labels, region);
    Ok(images
        .iter()
        .enumerate()
        .map(|(k, image)| SliceSample {
            case_id: String::from(scan.case_id()),
            slice_index: k,
            height: h,
            width: w,
            image: image.clone(),
            target: mask.slice(k).iter().map(|&b| b as u8 as f32).collect(),
        })
        .collect())
}

/// Case-level split. The training share is `round(fraction * N)`, clamped so
/// both sides keep at least one case.
pub fn split_dataset(
    case_ids: &[String],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>)> {
    if case_ids.len() < 2 {
        return Err(Error::TooFewCases(case_ids.len()));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidInput(alloc::format!(
            "split fraction must be in (0, 1), got {fraction}"
        )));
    }
    let n = case_ids.len();
    let n_train = (libm::round(fraction * n as f64) as usize).clamp(1, n - 1);
    let mut ids = case_ids.to_vec();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let val = ids.split_off(n_train);
    Ok((ids, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn constant_volume_collapses() {
        let v = Volume::filled([4, 4, 4], 5.0f32);
        let n = zscore_normalize(&v, None).unwrap();
        assert!(n.degenerate);
        assert!(n.volume.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn two_values_map_to_unit_scores() {
        let v = Volume::from_vec([3, 1, 1], vec![1.0f32, 3.0, 0.0]).unwrap();
        let n = zscore_normalize(&v, None).unwrap();
        assert!((n.volume.data()[0] + 1.0).abs() < 1e-6);
        assert!((n.volume.data()[1] - 1.0).abs() < 1e-6);
        assert_eq!(n.volume.data()[2], 0.0);
    }

    #[test]
    fn explicit_mask_sets_background_to_zero() {
        let v = Volume::from_vec([4, 1, 1], vec![1.0f32, 3.0, 9.0, 9.0]).unwrap();
        let m = Volume::from_vec([4, 1, 1], vec![true, true, false, false]).unwrap();
        let n = zscore_normalize(&v, Some(&m)).unwrap();
        assert_eq!(&n.volume.data()[2..], &[0.0, 0.0]);
        assert!((n.volume.data()[0] + 1.0).abs() < 1e-6);
    }

    fn scan_and_labels(depth: usize, tumor: bool) -> (MultiModalScan, LabelMap) {
        let dims = [4, 4, depth];
        let v = Volume::from_fn(dims, |[i, j, k]| (1 + i + j + k) as f32);
        let scan = MultiModalScan::new("c", [v.clone(), v.clone(), v.clone(), v], [1.0; 3]).unwrap();
        let g = Volume::from_fn(dims, |[i, _, k]| if tumor && i == 1 && k % 2 == 0 { 4u8 } else { 0 });
        (scan, LabelMap::new("c", g, [1.0; 3]).unwrap())
    }

    #[test]
    fn drops_last_ten_slices() {
        let (scan, labels) = scan_and_labels(155, true);
        let s = extract_slices(&scan, &labels, SubregionId::WT).unwrap();
        assert_eq!(s.len(), 145);
        assert_eq!(s.last().unwrap().slice_index, 144);
    }

    #[test]
    fn too_shallow_volume() {
        let (scan, labels) = scan_and_labels(10, true);
        assert!(matches!(
            extract_slices(&scan, &labels, SubregionId::WT),
            Err(Error::EmptyDataset { depth: 10, .. })
        ));
    }

    #[test]
    fn tumor_free_slices_are_kept() {
        let (scan, labels) = scan_and_labels(23, false);
        let s = extract_slices(&scan, &labels, SubregionId::ET).unwrap();
        assert_eq!(s.len(), 13);
        assert!(s.iter().all(|x| x.target.iter().all(|&t| t == 0.0)));
    }

    #[test]
    fn targets_restack_to_mask() {
        let (scan, labels) = scan_and_labels(14, true);
        for region in SubregionId::ALL {
            let s = extract_slices(&scan, &labels, region).unwrap();
            let mask = subregion_mask(&labels, region);
            let restacked: Vec<f32> = s.iter().flat_map(|x| x.target.iter().copied()).collect();
            let truncated: Vec<f32> = mask.data()[..4 * 4 * 4].iter().map(|&b| b as u8 as f32).collect();
            assert_eq!(restacked, truncated);
        }
    }

    #[test]
    fn split_sizes() {
        let ids: Vec<String> = (0..100).map(|i| format!("case_{i:03}")).collect();
        let (t, v) = split_dataset(&ids, 0.75, 3).unwrap();
        assert_eq!((t.len(), v.len()), (75, 25));
        assert_eq!(split_dataset(&ids, 0.75, 3).unwrap(), (t, v));
        assert!(matches!(split_dataset(&ids[..1], 0.75, 3), Err(Error::TooFewCases(1))));
    }

    proptest! {
        #[test]
        fn split_is_partition(n in 2usize..60, seed in any::<u64>(), frac in 0.05f64..0.95) {
            let ids: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
            let (t, v) = split_dataset(&ids, frac, seed).unwrap();
            prop_assert!(!t.is_empty() && !v.is_empty());
            prop_assert_eq!(t.len() + v.len(), n);
            let mut all: Vec<String> = t.iter().chain(v.iter()).cloned().collect();
            all.sort();
            let mut expect = ids.clone();
            expect.sort();
            prop_assert_eq!(all, expect);
        }

        #[test]
        fn zscore_moments(values in proptest::collection::vec(1.0f32..1000.0, 16..400)) {
            let v = Volume::from_vec([values.len(), 1, 1], values).unwrap();
            let out = zscore_normalize(&v, None).unwrap();
            prop_assume!(!out.degenerate);
            let xs: Vec<f64> = out.volume.data().iter().map(|&x| x as f64).collect();
            prop_assert!(crate::stats::mean(&xs).abs() < 1e-6);
            prop_assert!((crate::stats::std_pop(&xs) - 1.0).abs() < 1e-3);
        }

        #[test]
        fn zscore_idempotent(values in proptest::collection::vec(1.0f32..1000.0, 16..400)) {
            let v = Volume::from_vec([values.len(), 1, 1], values).unwrap();
            let once = zscore_normalize(&v, None).unwrap();
            prop_assume!(!once.degenerate);
            let twice = zscore_normalize(&once.volume, None).unwrap();
            for (a, b) in once.volume.data().iter().zip(twice.volume.data()) {
                prop_assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0));
            }
        }
    }
}
