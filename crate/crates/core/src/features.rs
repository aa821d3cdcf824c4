//! Whole-tumor statistics, tumor-core shape descriptors and age, assembled
//! into the fixed-order vector consumed by the survival regressor.

use alloc::string::String;
use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use crate::data_model::{subregion_mask, LabelMap, SubregionId};
use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Spacing};

pub const FEATURE_NAMES: [&str; 17] = [
    "edema_voxels",
    "necrosis_voxels",
    "enhancing_voxels",
    "tumor_extent",
    "tumor_proportion",
    "elongation",
    "flatness",
    "minor_axis_mm",
    "major_axis_mm",
    "diam2d_row_mm",
    "diam2d_col_mm",
    "diam2d_slice_mm",
    "diam3d_mm",
    "sphericity",
    "surface_area_mm2",
    "mesh_volume_mm3",
    "age_years",
];

pub const NUM_FEATURES: usize = FEATURE_NAMES.len();

/// Hex sha256 prefix identifying an ordered list of feature names.
pub fn names_fingerprint<S: AsRef<str>>(names: &[S]) -> String {
    let mut h = Sha256::new();
    for n in names {
        h.update(n.as_ref().as_bytes());
        h.update([0u8]);
    }
    h.finalize()[..16].iter().map(|b| alloc::format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StatisticalFeatures {
    pub edema_voxels: f64,
    pub necrosis_voxels: f64,
    pub enhancing_voxels: f64,
    /// Whole-tumor bounding-box volume over brain voxel count.
    pub tumor_extent: f64,
    /// Whole-tumor voxel count over brain voxel count.
    pub tumor_proportion: f64,
}

impl StatisticalFeatures {
    pub fn to_array(&self) -> [f64; 5] {
        [
            self.edema_voxels,
            self.necrosis_voxels,
            self.enhancing_voxels,
            self.tumor_extent,
            self.tumor_proportion,
        ]
    }
}

pub fn statistical_features(labels: &LabelMap, brain_mask: &BinaryMask) -> Result<StatisticalFeatures> {
    labels.grid().ensure_same_dims(brain_mask)?;
    let brain = brain_mask.count();
    if brain == 0 {
        return Err(Error::EmptyBrainMask);
    }
    let wt = subregion_mask(labels, SubregionId::WT);
    let bbox = wt
        .bounding_box()
        .map(|(lo, hi)| (0..3).map(|a| (hi[a] - lo[a] + 1) as f64).product::<f64>())
        .unwrap_or(0.0);
    Ok(StatisticalFeatures {
        edema_voxels: labels.count(2) as f64,
        necrosis_voxels: labels.count(1) as f64,
        enhancing_voxels: labels.count(4) as f64,
        tumor_extent: bbox / brain as f64,
        tumor_proportion: wt.count() as f64 / brain as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ShapeFeatures {
    pub elongation: f64,
    pub flatness: f64,
    pub minor_axis_mm: f64,
    pub major_axis_mm: f64,
    /// Largest in-plane diameter over planes of fixed axis-1 index.
    pub diam2d_row_mm: f64,
    /// Largest in-plane diameter over planes of fixed axis-0 index.
    pub diam2d_col_mm: f64,
    /// Largest in-plane diameter over axial planes (fixed axis-2 index).
    pub diam2d_slice_mm: f64,
    pub diam3d_mm: f64,
    pub sphericity: f64,
    pub surface_area_mm2: f64,
    pub mesh_volume_mm3: f64,
}

impl ShapeFeatures {
    pub fn to_array(&self) -> [f64; 11] {
        [
            self.elongation,
            self.flatness,
            self.minor_axis_mm,
            self.major_axis_mm,
            self.diam2d_row_mm,
            self.diam2d_col_mm,
            self.diam2d_slice_mm,
            self.diam3d_mm,
            self.sphericity,
            self.surface_area_mm2,
            self.mesh_volume_mm3,
        ]
    }
}

/// Eigenvalues of a symmetric 3x3 matrix in descending order (cyclic Jacobi).
pub fn symmetric_eigenvalues(mut a: [[f64; 3]; 3]) -> [f64; 3] {
    for _ in 0..64 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        let scale = a[0][0].abs() + a[1][1].abs() + a[2][2].abs();
        if off <= 1e-30 * scale * scale || off == 0.0 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / libm::sqrt(t * t + 1.0);
            let s = t * c;
            let mut r = a;
            for k in 0..3 {
                r[k][p] = c * a[k][p] - s * a[k][q];
                r[k][q] = s * a[k][p] + c * a[k][q];
            }
            let mut b = r;
            for k in 0..3 {
                b[p][k] = c * r[p][k] - s * r[q][k];
                b[q][k] = s * r[p][k] + c * r[q][k];
            }
            a = b;
        }
    }
    let mut ev = [a[0][0], a[1][1], a[2][2]];
    ev.sort_by(|x, y| y.total_cmp(x));
    ev.map(|v| v.max(0.0))
}

fn physical(c: [usize; 3], spacing: Spacing) -> [f64; 3] {
    [c[0] as f64 * spacing[0], c[1] as f64 * spacing[1], c[2] as f64 * spacing[2]]
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum()
}

/// Voxels that are first or last along every axis-aligned line through the
/// mask in the given axes. Every convex-hull vertex survives this filter, so
/// farthest pairs are preserved.
fn line_extremes(mask: &BinaryMask, axes: &[usize]) -> Vec<[usize; 3]> {
    let dims = mask.dims();
    let mut keep = alloc::vec![true; mask.len()];
    for &axis in axes {
        let stride = [1, dims[0], dims[0] * dims[1]][axis];
        let n = dims[axis];
        for base in 0..mask.len() {
            if !(base / stride).is_multiple_of(n) {
                continue;
            }
            let mut first = None;
            let mut last = None;
            for q in 0..n {
                if mask.data()[base + q * stride] {
                    first.get_or_insert(q);
                    last = Some(q);
                }
            }
            if let (Some(f), Some(l)) = (first, last) {
                for q in f + 1..l {
                    keep[base + q * stride] = false;
                }
            }
        }
    }
    (0..mask.len())
        .filter(|&i| mask.data()[i] && keep[i])
        .map(|i| mask.coords(i))
        .collect()
}

fn max_pairwise(points: &[[f64; 3]]) -> f64 {
    let mut best = 0.0f64;
    for (i, &a) in points.iter().enumerate() {
        for &b in &points[i + 1..] {
            best = best.max(dist2(a, b));
        }
    }
    libm::sqrt(best)
}

/// Largest pairwise distance between voxel centers of the mask.
pub fn diameter_3d(mask: &BinaryMask, spacing: Spacing) -> f64 {
    let pts: Vec<[f64; 3]> = line_extremes(mask, &[0, 1, 2]).into_iter().map(|c| physical(c, spacing)).collect();
    max_pairwise(&pts)
}

/// Largest in-plane diameter over all planes with a fixed index on `axis`.
pub fn diameter_2d(mask: &BinaryMask, spacing: Spacing, axis: usize) -> f64 {
    let in_plane: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
    let mut planes: Vec<Vec<[f64; 3]>> = alloc::vec![Vec::new(); mask.dims()[axis]];
    for c in line_extremes(mask, &in_plane) {
        planes[c[axis]].push(physical(c, spacing));
    }
    planes.iter().map(|p| max_pairwise(p)).fold(0.0, f64::max)
}

/// Faces between a mask voxel and a non-mask voxel or the grid edge, in mm².
pub fn surface_area(mask: &BinaryMask, spacing: Spacing) -> f64 {
    let dims = mask.dims();
    let face = [spacing[1] * spacing[2], spacing[0] * spacing[2], spacing[0] * spacing[1]];
    let mut area = 0.0;
    for idx in 0..mask.len() {
        if !mask.data()[idx] {
            continue;
        }
        let c = mask.coords(idx);
        for axis in 0..3 {
            for up in [false, true] {
                let exposed = if up {
                    c[axis] + 1 == dims[axis] || {
                        let mut n = c;
                        n[axis] += 1;
                        !*mask.get(n)
                    }
                } else {
                    c[axis] == 0 || {
                        let mut n = c;
                        n[axis] -= 1;
                        !*mask.get(n)
                    }
                };
                if exposed {
                    area += face[axis];
                }
            }
        }
    }
    area
}

pub fn shape_features(mask: &BinaryMask, spacing: Spacing) -> Result<ShapeFeatures> {
    let n = mask.count();
    if n == 0 {
        return Err(Error::EmptyRegion);
    }
    let pts: Vec<[f64; 3]> = (0..mask.len())
        .filter(|&i| mask.data()[i])
        .map(|i| physical(mask.coords(i), spacing))
        .collect();
    let mut mean = [0.0; 3];
    for p in &pts {
        for a in 0..3 {
            mean[a] += p[a];
        }
    }
    mean = mean.map(|m| m / n as f64);
    let mut cov = [[0.0; 3]; 3];
    for p in &pts {
        let d = [p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]];
        for i in 0..3 {
            for j in 0..3 {
                cov[i][j] += d[i] * d[j];
            }
        }
    }
    for row in cov.iter_mut() {
        for v in row.iter_mut() {
            *v /= n as f64;
        }
    }
    let [l1, l2, l3] = symmetric_eigenvalues(cov);
    let (elongation, flatness) = if l1 > 0.0 {
        (libm::sqrt(l2 / l1), libm::sqrt(l3 / l1))
    } else {
        (1.0, 1.0)
    };
    let area = surface_area(mask, spacing);
    let volume = n as f64 * spacing[0] * spacing[1] * spacing[2];
    let sphericity = libm::cbrt(36.0 * core::f64::consts::PI * volume * volume) / area;
    Ok(ShapeFeatures {
        elongation,
        flatness,
        minor_axis_mm: 4.0 * libm::sqrt(l2),
        major_axis_mm: 4.0 * libm::sqrt(l1),
        diam2d_row_mm: diameter_2d(mask, spacing, 1),
        diam2d_col_mm: diameter_2d(mask, spacing, 0),
        diam2d_slice_mm: diameter_2d(mask, spacing, 2),
        diam3d_mm: diameter_3d(mask, spacing),
        sphericity,
        surface_area_mm2: area,
        mesh_volume_mm3: volume,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureVector {
    pub case_id: String,
    /// Values in [`FEATURE_NAMES`] order.
    pub values: Vec<f64>,
    /// Set when the tumor core is empty and the shape slots are zero.
    pub empty_core: bool,
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|n| *n == name).map(|i| self.values[i])
    }
}

pub fn build_feature_vector(labels: &LabelMap, brain_mask: &BinaryMask, age_years: f64) -> Result<FeatureVector> {
    if !age_years.is_finite() || age_years < 0.0 {
        return Err(Error::InvalidInput(alloc::format!("age {age_years} must be a non-negative number")));
    }
    let stats = statistical_features(labels, brain_mask)?;
    let tc = subregion_mask(labels, SubregionId::TC);
    let (shape, empty_core) = match shape_features(&tc, labels.spacing()) {
        Ok(s) => (s, false),
        Err(Error::EmptyRegion) => (ShapeFeatures::default(), true),
        Err(e) => return Err(e),
    };
    let mut values = Vec::with_capacity(NUM_FEATURES);
    values.extend_from_slice(&stats.to_array());
    values.extend_from_slice(&shape.to_array());
    values.push(age_years);
    Ok(FeatureVector {
        case_id: labels.case_id().into(),
        values,
        empty_core,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Volume;

    #[test]
    fn eigenvalues_of_known_matrix() {
        let ev = symmetric_eigenvalues([[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 5.0]]);
        for (a, b) in ev.iter().zip([5.0, 3.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_voxel() {
        let mut m = Volume::filled([3, 3, 3], false);
        m.set([1, 1, 1], true);
        let s = shape_features(&m, [1.0; 3]).unwrap();
        assert_eq!((s.major_axis_mm, s.minor_axis_mm, s.diam3d_mm), (0.0, 0.0, 0.0));
        assert_eq!(s.surface_area_mm2, 6.0);
        assert!(s.sphericity > 0.0 && s.sphericity <= 1.0);
    }

    #[test]
    fn empty_region() {
        let m = Volume::filled([3, 3, 3], false);
        assert!(matches!(shape_features(&m, [1.0; 3]), Err(Error::EmptyRegion)));
    }

    #[test]
    fn fingerprint_depends_on_order() {
        assert_ne!(names_fingerprint(&["a", "b"]), names_fingerprint(&["b", "a"]));
        assert_eq!(names_fingerprint(&FEATURE_NAMES).len(), 32);
    }
}
