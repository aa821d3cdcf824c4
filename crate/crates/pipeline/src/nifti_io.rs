//! NIfTI-1 volume reading and writing.

use std::path::Path;

use glioma_core::{LabelMap, Spacing, Volume};
use ndarray::{Array3, ShapeBuilder};
use nifti::writer::WriterOptions;
use nifti::{IntoNdArray, NiftiHeader, NiftiObject, ReaderOptions};

use crate::error::{PipelineError, Result};
use crate::fsutil;

fn read_object(path: &Path) -> Result<nifti::InMemNiftiObject> {
    if !path.exists() {
        return Err(PipelineError::io(path, std::io::ErrorKind::NotFound.into()));
    }
    ReaderOptions::new().read_file(path).map_err(|e| match e {
        nifti::NiftiError::Io(io) => PipelineError::io(path, io),
        other => PipelineError::format(path, other),
    })
}

/// Voxel size from the header; missing or non-positive entries become 1 mm.
fn header_spacing(header: &NiftiHeader) -> Spacing {
    let mut s = [1.0; 3];
    for (a, v) in s.iter_mut().enumerate() {
        let p = header.pixdim[a + 1] as f64;
        if p.is_finite() && p > 0.0 {
            *v = p;
        }
    }
    s
}

fn to_volume<T: Copy>(path: &Path, array: ndarray::ArrayD<T>) -> Result<Volume<T>> {
    let shape = array.shape().to_vec();
    let dims = match shape.as_slice() {
        [x, y] => [*x, *y, 1],
        [x, y, z] => [*x, *y, *z],
        [x, y, z, rest @ ..] if rest.iter().all(|&d| d == 1) => [*x, *y, *z],
        _ => return Err(PipelineError::format(path, format!("expected a 3D volume, found shape {shape:?}"))),
    };
    let nd = shape.len();
    Ok(Volume::from_fn(dims, |[i, j, k]| {
        let mut idx = vec![0usize; nd];
        idx[0] = i;
        idx[1] = j;
        if nd > 2 {
            idx[2] = k;
        }
        array[ndarray::IxDyn(&idx)]
    }))
}

/// Reads a scalar volume (any stored numeric type, scaled by the header
/// slope and intercept) with its voxel spacing.
pub fn read_volume(path: &Path) -> Result<(Volume<f32>, Spacing)> {
    let obj = read_object(path)?;
    let spacing = header_spacing(obj.header());
    let array = obj.into_volume().into_ndarray::<f32>().map_err(|e| PipelineError::format(path, e))?;
    Ok((to_volume(path, array)?, spacing))
}

/// Reads an integer label volume. Values that are not whole numbers are
/// rejected.
pub fn read_raw_labels(path: &Path) -> Result<(Volume<i64>, Spacing)> {
    let obj = read_object(path)?;
    let spacing = header_spacing(obj.header());
    let array = obj.into_volume().into_ndarray::<f64>().map_err(|e| PipelineError::format(path, e))?;
    let v = to_volume(path, array)?;
    if let Some(bad) = v.data().iter().find(|x| x.fract() != 0.0 || !x.is_finite()) {
        return Err(PipelineError::format(path, format!("label value {bad} is not an integer")));
    }
    Ok((v.map(|&x| x as i64), spacing))
}

pub fn read_label_map(path: &Path, case_id: &str) -> Result<LabelMap> {
    let (raw, spacing) = read_raw_labels(path)?;
    Ok(LabelMap::from_raw(case_id, &raw, spacing)?)
}

fn header_for(spacing: Spacing) -> NiftiHeader {
    let mut h = NiftiHeader::default();
    h.pixdim = [1.0, spacing[0] as f32, spacing[1] as f32, spacing[2] as f32, 1.0, 1.0, 1.0, 1.0];
    h.xyzt_units = 2;
    h.sform_code = 1;
    h.srow_x = [spacing[0] as f32, 0.0, 0.0, 0.0];
    h.srow_y = [0.0, spacing[1] as f32, 0.0, 0.0];
    h.srow_z = [0.0, 0.0, spacing[2] as f32, 0.0];
    h
}

fn to_array<T: Copy>(v: &Volume<T>) -> Array3<T> {
    let [x, y, z] = v.dims();
    Array3::from_shape_vec((x, y, z).f(), v.data().to_vec()).expect("volume length matches dims")
}

pub fn write_volume(path: &Path, volume: &Volume<f32>, spacing: Spacing) -> Result<()> {
    let header = header_for(spacing);
    let array = to_array(volume);
    fsutil::write_atomic_with(path, |tmp| {
        WriterOptions::new(tmp)
            .reference_header(&header)
            .write_nifti(&array)
            .map_err(|e| PipelineError::format(path, e))
    })
}

pub fn write_label_map(path: &Path, labels: &LabelMap) -> Result<()> {
    let header = header_for(labels.spacing());
    let array = to_array(labels.grid());
    fsutil::write_atomic_with(path, |tmp| {
        WriterOptions::new(tmp)
            .reference_header(&header)
            .write_nifti(&array)
            .map_err(|e| PipelineError::format(path, e))
    })
}
