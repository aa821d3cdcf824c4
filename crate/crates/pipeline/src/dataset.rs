//! Directory-per-case dataset layout:
//! `<root>/<case>/<case>_<suffix>.<extension>` for every modality plus the
//! segmentation.

use std::fs;
use std::path::{Path, PathBuf};

use glioma_core::{Case, LabelMap, Modality, MultiModalScan, Spacing, Volume};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};
use crate::nifti_io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaseLayout {
    pub extension: String,
    pub t1: String,
    pub t2: String,
    pub t1c: String,
    pub flair: String,
    pub seg: String,
}

impl Default for CaseLayout {
    fn default() -> Self {
        CaseLayout {
            extension: "nii.gz".into(),
            t1: "t1".into(),
            t2: "t2".into(),
            t1c: "t1ce".into(),
            flair: "flair".into(),
            seg: "seg".into(),
        }
    }
}

impl CaseLayout {
    pub fn suffix(&self, m: Modality) -> &str {
        match m {
            Modality::T1 => &self.t1,
            Modality::T2 => &self.t2,
            Modality::T1c => &self.t1c,
            Modality::Flair => &self.flair,
        }
    }

    pub fn file_name(&self, case_id: &str, suffix: &str) -> String {
        format!("{case_id}_{suffix}.{}", self.extension)
    }

    pub fn modality_path(&self, case_dir: &Path, case_id: &str, m: Modality) -> PathBuf {
        case_dir.join(self.file_name(case_id, self.suffix(m)))
    }

    pub fn seg_path(&self, case_dir: &Path, case_id: &str) -> PathBuf {
        case_dir.join(self.file_name(case_id, &self.seg))
    }
}

pub fn case_id_of(case_dir: &Path) -> Result<String> {
    case_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| PipelineError::format(case_dir, "not a case directory"))
}

/// Loads the four modalities of a case in fixed order. Spacing comes from the
/// first modality's header.
pub fn load_scan(case_dir: &Path, layout: &CaseLayout) -> Result<MultiModalScan> {
    let case = case_id_of(case_dir)?;
    let mut volumes: Vec<Volume<f32>> = Vec::with_capacity(4);
    let mut spacing: Option<Spacing> = None;
    for m in Modality::ALL {
        let path = layout.modality_path(case_dir, &case, m);
        if !path.exists() {
            return Err(PipelineError::MissingModality {
                case,
                modality: m,
                path,
            });
        }
        let (v, s) = nifti_io::read_volume(&path)?;
        if let Some(first) = volumes.first() {
            if first.dims() != v.dims() {
                return Err(PipelineError::ShapeMismatch {
                    case,
                    detail: format!(
                        "{} is {:?} but {} is {:?}",
                        Modality::ALL[0].name(),
                        first.dims(),
                        m.name(),
                        v.dims()
                    ),
                });
            }
        }
        spacing.get_or_insert(s);
        volumes.push(v);
    }
    let volumes: [Volume<f32>; 4] = volumes.try_into().expect("four modalities");
    Ok(MultiModalScan::new(case, volumes, spacing.unwrap_or([1.0; 3]))?)
}

pub fn load_labels(case_dir: &Path, layout: &CaseLayout) -> Result<LabelMap> {
    let case = case_id_of(case_dir)?;
    nifti_io::read_label_map(&layout.seg_path(case_dir, &case), &case)
}

pub fn load_case(case_dir: &Path, layout: &CaseLayout) -> Result<Case> {
    let scan = load_scan(case_dir, layout)?;
    let labels = load_labels(case_dir, layout)?;
    if labels.dims() != scan.dims() {
        return Err(PipelineError::ShapeMismatch {
            case: scan.case_id().into(),
            detail: format!("segmentation is {:?} but the scan is {:?}", labels.dims(), scan.dims()),
        });
    }
    Ok(Case::new(scan, labels)?)
}

/// Case directories under `root`, sorted by name.
pub fn list_cases(root: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(root).map_err(|e| PipelineError::io(root, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| PipelineError::io(root, e))?;
        let path = entry.path();
        if path.is_dir() && !entry.file_name().to_string_lossy().starts_with('.') {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

pub fn save_scan(case_dir: &Path, scan: &MultiModalScan, layout: &CaseLayout) -> Result<()> {
    for m in Modality::ALL {
        let path = layout.modality_path(case_dir, scan.case_id(), m);
        nifti_io::write_volume(&path, scan.modality(m), scan.spacing())?;
    }
    Ok(())
}

pub fn save_case(root: &Path, case: &Case, layout: &CaseLayout) -> Result<PathBuf> {
    let dir = root.join(case.case_id());
    save_scan(&dir, &case.scan, layout)?;
    nifti_io::write_label_map(&layout.seg_path(&dir, case.case_id()), &case.labels)?;
    Ok(dir)
}
