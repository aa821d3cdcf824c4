//! Scans, label maps, tumor subregions and survival metadata.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Spacing, Volume};

/// The four MR sequences, in the fixed channel order used everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Modality {
    T1,
    T2,
    T1c,
    Flair,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::T1, Modality::T2, Modality::T1c, Modality::Flair];

    pub fn name(self) -> &'static str {
        match self {
            Modality::T1 => "t1",
            Modality::T2 => "t2",
            Modality::T1c => "t1c",
            Modality::Flair => "flair",
        }
    }
}

/// Tumor subregions and the label values each one covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SubregionId {
    /// Whole tumor: labels 1, 2, 4.
    WT,
    /// Tumor core: labels 1, 4.
    TC,
    /// Enhancing tumor: label 4.
    ET,
    /// Necrotic and non-enhancing core: label 1.
    NCR,
    /// Peritumoral edema: label 2.
    ED,
}

impl SubregionId {
    pub const ALL: [SubregionId; 5] = [
        SubregionId::WT,
        SubregionId::TC,
        SubregionId::ET,
        SubregionId::NCR,
        SubregionId::ED,
    ];

    /// The three regions used for evaluation.
    pub const EVALUATED: [SubregionId; 3] = [SubregionId::WT, SubregionId::TC, SubregionId::ET];

    pub const fn labels(self) -> &'static [u8] {
        match self {
            SubregionId::WT => &[1, 2, 4],
            SubregionId::TC => &[1, 4],
            SubregionId::ET => &[4],
            SubregionId::NCR => &[1],
            SubregionId::ED => &[2],
        }
    }

    #[inline]
    pub fn contains(self, label: u8) -> bool {
        match self {
            SubregionId::WT => matches!(label, 1 | 2 | 4),
            SubregionId::TC => matches!(label, 1 | 4),
            SubregionId::ET => label == 4,
            SubregionId::NCR => label == 1,
            SubregionId::ED => label == 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SubregionId::WT => "WT",
            SubregionId::TC => "TC",
            SubregionId::ET => "ET",
            SubregionId::NCR => "NCR",
            SubregionId::ED => "ED",
        }
    }
}

impl fmt::Display for SubregionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SubregionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SubregionId::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown subregion {s:?}")))
    }
}

fn check_spacing(spacing: &Spacing) -> Result<()> {
    if spacing.iter().all(|s| s.is_finite() && *s > 0.0) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "voxel spacing must be positive, got {spacing:?}"
        )))
    }
}

/// Four co-registered volumes in `Modality::ALL` order.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiModalScan {
    case_id: String,
    volumes: [Volume<f32>; 4],
    spacing: Spacing,
}

impl MultiModalScan {
    pub fn new(case_id: impl Into<String>, volumes: [Volume<f32>; 4], spacing: Spacing) -> Result<Self> {
        check_spacing(&spacing)?;
        for v in &volumes[1..] {
            volumes[0].ensure_same_dims(v)?;
        }
        for (m, v) in Modality::ALL.iter().zip(&volumes) {
            if let Some(idx) = v.data().iter().position(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{} volume has a non-finite value at voxel {idx}",
                    m.name()
                )));
            }
        }
        Ok(MultiModalScan {
            case_id: case_id.into(),
            volumes,
            spacing,
        })
    }

    pub fn case_id(&self) -> &str {
        &self.case_id
    }

    pub fn dims(&self) -> [usize; 3] {
        self.volumes[0].dims()
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn volumes(&self) -> &[Volume<f32>; 4] {
        &self.volumes
    }

    pub fn modality(&self, m: Modality) -> &Volume<f32> {
        &self.volumes[m as usize]
    }

    /// Voxels that are nonzero in at least one modality.
    pub fn brain_mask(&self) -> BinaryMask {
        let dims = self.dims();
        let mut data = alloc::vec![false; dims[0] * dims[1] * dims[2]];
        for v in &self.volumes {
            for (d, x) in data.iter_mut().zip(v.data()) {
                *d |= *x != 0.0;
            }
        }
        Volume::from_vec(dims, data).expect("dims match")
    }

    pub(crate) fn map_volumes(&self, mut f: impl FnMut(&Volume<f32>) -> Volume<f32>) -> Self {
        MultiModalScan {
            case_id: self.case_id.clone(),
            volumes: [
                f(&self.volumes[0]),
                f(&self.volumes[1]),
                f(&self.volumes[2]),
                f(&self.volumes[3]),
            ],
            spacing: self.spacing,
        }
    }
}

/// A segmentation with voxels in {0, 1, 2, 4}.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    case_id: String,
    grid: Volume<u8>,
    spacing: Spacing,
}

impl LabelMap {
    /// Validates raw label values. The smallest offending value is reported
    /// together with the number of voxels carrying it.
    pub fn from_raw(case_id: impl Into<String>, raw: &Volume<i64>, spacing: Spacing) -> Result<Self> {
        check_spacing(&spacing)?;
        let mut bad: Option<(i64, usize)> = None;
        for &v in raw.data() {
            if !matches!(v, 0 | 1 | 2 | 4) {
                bad = match bad {
                    Some((b, n)) if b == v => Some((b, n + 1)),
                    Some((b, n)) if b < v => Some((b, n)),
                    _ => Some((v, 1)),
                };
            }
        }
        if let Some((value, _)) = bad {
            let count = raw.data().iter().filter(|&&v| v == value).count();
            return Err(Error::InvalidLabel { value, count });
        }
        Ok(LabelMap {
            case_id: case_id.into(),
            grid: raw.map(|&v| v as u8),
            spacing,
        })
    }

    pub fn new(case_id: impl Into<String>, grid: Volume<u8>, spacing: Spacing) -> Result<Self> {
        check_spacing(&spacing)?;
        if let Some(&value) = grid.data().iter().find(|&&v| !matches!(v, 0 | 1 | 2 | 4)) {
            let count = grid.data().iter().filter(|&&v| v == value).count();
            return Err(Error::InvalidLabel {
                value: value as i64,
                count,
            });
        }
        Ok(LabelMap {
            case_id: case_id.into(),
            grid,
            spacing,
        })
    }

    pub fn case_id(&self) -> &str {
        &self.case_id
    }

    pub fn grid(&self) -> &Volume<u8> {
        &self.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims()
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn count(&self, label: u8) -> usize {
        self.grid.data().iter().filter(|&&v| v == label).count()
    }
}

pub fn subregion_mask(labels: &LabelMap, region: SubregionId) -> BinaryMask {
    labels.grid.map(|&v| region.contains(v))
}

/// Combines per-subregion predictions into one label map with priority
/// ET > NCR > ED.
pub fn merge_subregion_masks(
    case_id: &str,
    ncr: &BinaryMask,
    ed: &BinaryMask,
    et: &BinaryMask,
    spacing: Spacing,
) -> Result<LabelMap> {
    ncr.ensure_same_dims(ed)?;
    ncr.ensure_same_dims(et)?;
    let data = ncr
        .data()
        .iter()
        .zip(ed.data())
        .zip(et.data())
        .map(|((&n, &e), &t)| {
            if t {
                4
            } else if n {
                1
            } else if e {
                2
            } else {
                0
            }
        })
        .collect();
    LabelMap::new(case_id, Volume::from_vec(ncr.dims(), data)?, spacing)
}

/// A paired scan and ground-truth segmentation.
#[derive(Debug, Clone)]
pub struct Case {
    pub scan: MultiModalScan,
    pub labels: LabelMap,
}

impl Case {
    pub fn new(scan: MultiModalScan, labels: LabelMap) -> Result<Self> {
        if scan.dims() != labels.dims() {
            return Err(Error::shape(format!(
                "case {}: scan {:?} vs labels {:?}",
                scan.case_id(),
                scan.dims(),
                labels.dims()
            )));
        }
        Ok(Case { scan, labels })
    }

    pub fn case_id(&self) -> &str {
        self.scan.case_id()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ResectionStatus {
    GTR,
    STR,
    NA,
}

impl ResectionStatus {
    /// "GTR" and "STR" (case-insensitive, surrounding whitespace ignored);
    /// anything else is `NA`.
    pub fn parse(s: &str) -> Self {
        let s = s.trim();
        if s.eq_ignore_ascii_case("GTR") {
            ResectionStatus::GTR
        } else if s.eq_ignore_ascii_case("STR") {
            ResectionStatus::STR
        } else {
            ResectionStatus::NA
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SurvivalRecord {
    pub case_id: String,
    pub age: f64,
    pub survival_days: Option<f64>,
    pub resection: ResectionStatus,
}

impl SurvivalRecord {
    pub fn new(
        case_id: impl Into<String>,
        age: f64,
        survival_days: Option<f64>,
        resection: ResectionStatus,
    ) -> Result<Self> {
        if !(age.is_finite() && age > 0.0) {
            return Err(Error::InvalidInput(format!("age must be positive, got {age}")));
        }
        if let Some(d) = survival_days {
            if !(d.is_finite() && d >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "survival days must be non-negative, got {d}"
                )));
            }
        }
        Ok(SurvivalRecord {
            case_id: case_id.into(),
            age,
            survival_days,
            resection,
        })
    }
}

/// Records usable for survival evaluation: gross-total resection with known
/// survival.
pub fn filter_gtr(records: &[SurvivalRecord]) -> Vec<SurvivalRecord> {
    records
        .iter()
        .filter(|r| r.resection == ResectionStatus::GTR && r.survival_days.is_some())
        .cloned()
        .collect()
}

/// Records eligible for prediction: gross-total resection regardless of
/// whether survival is known.
pub fn filter_gtr_for_prediction(records: &[SurvivalRecord]) -> Vec<SurvivalRecord> {
    records
        .iter()
        .filter(|r| r.resection == ResectionStatus::GTR)
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn labels_1d(values: &[u8]) -> LabelMap {
        let grid = Volume::from_vec([values.len(), 1, 1], values.to_vec()).unwrap();
        LabelMap::new("c", grid, [1.0; 3]).unwrap()
    }

    fn mask_vec(m: &BinaryMask) -> Vec<u8> {
        m.data().iter().map(|&b| b as u8).collect()
    }

    #[test]
    fn subregion_definitions() {
        let l = labels_1d(&[0, 1, 2, 4]);
        assert_eq!(mask_vec(&subregion_mask(&l, SubregionId::WT)), [0, 1, 1, 1]);
        assert_eq!(mask_vec(&subregion_mask(&l, SubregionId::TC)), [0, 1, 0, 1]);
        assert_eq!(mask_vec(&subregion_mask(&l, SubregionId::ET)), [0, 0, 0, 1]);
        assert_eq!(mask_vec(&subregion_mask(&l, SubregionId::NCR)), [0, 1, 0, 0]);
        assert_eq!(mask_vec(&subregion_mask(&l, SubregionId::ED)), [0, 0, 1, 0]);
    }

    #[test]
    fn label_three_is_rejected() {
        let raw = Volume::from_vec([5, 1, 1], vec![0i64, 3, 3, 1, 7]).unwrap();
        match LabelMap::from_raw("c", &raw, [1.0; 3]) {
            Err(Error::InvalidLabel { value: 3, count: 2 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn all_zero_is_valid() {
        let raw = Volume::filled([4, 4, 4], 0i64);
        let l = LabelMap::from_raw("c", &raw, [1.0; 3]).unwrap();
        assert_eq!(subregion_mask(&l, SubregionId::WT).count(), 0);
    }

    #[test]
    fn scan_rejects_mismatched_shapes() {
        let a = Volume::filled([2, 2, 3], 1.0f32);
        let b = Volume::filled([2, 2, 2], 1.0f32);
        let r = MultiModalScan::new("c", [a.clone(), a.clone(), a, b], [1.0; 3]);
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn merge_priority() {
        let m = |v: &[bool]| Volume::from_vec([v.len(), 1, 1], v.to_vec()).unwrap();
        // voxels: (ncr,ed,et) = (1,0,1), (1,1,0), (0,1,0), (0,0,0)
        let ncr = m(&[true, true, false, false]);
        let ed = m(&[false, true, true, false]);
        let et = m(&[true, false, false, false]);
        let l = merge_subregion_masks("c", &ncr, &ed, &et, [1.0; 3]).unwrap();
        assert_eq!(l.grid().data(), &[4, 1, 2, 0]);
    }

    #[test]
    fn merge_of_disjoint_masks_reproduces_each() {
        let m = |v: &[bool]| Volume::from_vec([v.len(), 1, 1], v.to_vec()).unwrap();
        let ncr = m(&[true, false, false, false]);
        let ed = m(&[false, true, false, false]);
        let et = m(&[false, false, true, false]);
        let l = merge_subregion_masks("c", &ncr, &ed, &et, [1.0; 3]).unwrap();
        assert_eq!(subregion_mask(&l, SubregionId::NCR), ncr);
        assert_eq!(subregion_mask(&l, SubregionId::ED), ed);
        assert_eq!(subregion_mask(&l, SubregionId::ET), et);
    }

    #[test]
    fn resection_parsing() {
        assert_eq!(ResectionStatus::parse("GTR"), ResectionStatus::GTR);
        assert_eq!(ResectionStatus::parse(" str "), ResectionStatus::STR);
        assert_eq!(ResectionStatus::parse(""), ResectionStatus::NA);
        assert_eq!(ResectionStatus::parse("GTR?"), ResectionStatus::NA);
    }

    #[test]
    fn gtr_filter() {
        let r = |s, d| SurvivalRecord::new("c", 50.0, d, s).unwrap();
        let recs = vec![
            r(ResectionStatus::GTR, Some(100.0)),
            r(ResectionStatus::STR, Some(100.0)),
            r(ResectionStatus::NA, Some(100.0)),
            r(ResectionStatus::GTR, None),
        ];
        assert_eq!(filter_gtr(&recs).len(), 1);
        assert_eq!(filter_gtr_for_prediction(&recs).len(), 2);
        assert!(filter_gtr(&[]).is_empty());
    }

    proptest! {
        #[test]
        fn wt_is_union_and_tc_contains_et(values in proptest::collection::vec(prop::sample::select(vec![0u8, 1, 2, 4]), 1..200)) {
            let l = labels_1d(&values);
            let wt = subregion_mask(&l, SubregionId::WT);
            let ncr = subregion_mask(&l, SubregionId::NCR);
            let ed = subregion_mask(&l, SubregionId::ED);
            let et = subregion_mask(&l, SubregionId::ET);
            let tc = subregion_mask(&l, SubregionId::TC);
            for i in 0..values.len() {
                prop_assert_eq!(wt.data()[i], ncr.data()[i] || ed.data()[i] || et.data()[i]);
                prop_assert!(!et.data()[i] || tc.data()[i]);
            }
        }
    }
}
