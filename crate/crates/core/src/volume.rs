//! Dense 3D grids.
//!
//! Voxels are stored with the first axis varying fastest, the same order used
//! on disk by the common neuroimaging formats. Slicing happens along axis 2,
//! so axial slice `k` is one contiguous block of `dims[0] * dims[1]` values
//! and reads as a row-major image of height `dims[1]` and width `dims[0]`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Physical voxel size in millimetres along each axis.
pub type Spacing = [f64; 3];

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Volume<T> {
    dims: [usize; 3],
    data: Vec<T>,
}

pub type BinaryMask = Volume<bool>;

impl<T: Clone> Volume<T> {
    pub fn filled(dims: [usize; 3], value: T) -> Self {
        Volume {
            dims,
            data: vec![value; dims[0] * dims[1] * dims[2]],
        }
    }
}

impl<T> Volume<T> {
    pub fn from_vec(dims: [usize; 3], data: Vec<T>) -> Result<Self> {
        let n = dims[0] * dims[1] * dims[2];
        if data.len() != n {
            return Err(Error::shape(alloc::format!(
                "{dims:?} needs {n} voxels, got {}",
                data.len()
            )));
        }
        Ok(Volume { dims, data })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut([usize; 3]) -> T) -> Self {
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data.push(f([i, j, k]));
                }
            }
        }
        Volume { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, [i, j, k]: [usize; 3]) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let plane = self.dims[0] * self.dims[1];
        let k = idx / plane;
        let r = idx % plane;
        [r % self.dims[0], r / self.dims[0], k]
    }

    #[inline]
    pub fn get(&self, ijk: [usize; 3]) -> &T {
        &self.data[self.index(ijk)]
    }

    #[inline]
    pub fn set(&mut self, ijk: [usize; 3], value: T) {
        let idx = self.index(ijk);
        self.data[idx] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// The contiguous voxels of axial slice `k`.
    pub fn slice(&self, k: usize) -> &[T] {
        let plane = self.dims[0] * self.dims[1];
        &self.data[k * plane..(k + 1) * plane]
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Volume<U> {
        Volume {
            dims: self.dims,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn ensure_same_dims<U>(&self, other: &Volume<U>) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::shape(alloc::format!(
                "{:?} vs {:?}",
                self.dims,
                other.dims
            )));
        }
        Ok(())
    }
}

impl Volume<bool> {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    /// Voxels of the mask with at least one 6-neighbour outside the mask.
    /// Neighbours beyond the grid edge count as outside.
    pub fn boundary(&self) -> Vec<[usize; 3]> {
        let [n0, n1, n2] = self.dims;
        let mut out = Vec::new();
        for k in 0..n2 {
            for j in 0..n1 {
                for i in 0..n0 {
                    if !*self.get([i, j, k]) {
                        continue;
                    }
                    let interior = i > 0
                        && i + 1 < n0
                        && j > 0
                        && j + 1 < n1
                        && k > 0
                        && k + 1 < n2
                        && *self.get([i - 1, j, k])
                        && *self.get([i + 1, j, k])
                        && *self.get([i, j - 1, k])
                        && *self.get([i, j + 1, k])
                        && *self.get([i, j, k - 1])
                        && *self.get([i, j, k + 1]);
                    if !interior {
                        out.push([i, j, k]);
                    }
                }
            }
        }
        out
    }

    /// Inclusive bounding box `(min, max)` of the set voxels.
    pub fn bounding_box(&self) -> Option<([usize; 3], [usize; 3])> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for (idx, &v) in self.data.iter().enumerate() {
            if v {
                any = true;
                let c = self.coords(idx);
                for a in 0..3 {
                    lo[a] = lo[a].min(c[a]);
                    hi[a] = hi[a].max(c[a]);
                }
            }
        }
        any.then_some((lo, hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip() {
        let v = Volume::filled([3, 4, 5], 0u8);
        for idx in 0..v.len() {
            assert_eq!(v.index(v.coords(idx)), idx);
        }
        assert_eq!(v.index([1, 0, 0]), 1);
        assert_eq!(v.index([0, 1, 0]), 3);
        assert_eq!(v.index([0, 0, 1]), 12);
    }

    #[test]
    fn cube_boundary_excludes_interior() {
        let m = Volume::from_fn([5, 5, 5], |[i, j, k]| {
            (1..4).contains(&i) && (1..4).contains(&j) && (1..4).contains(&k)
        });
        // 27 voxels, only the centre is interior
        assert_eq!(m.boundary().len(), 26);
        assert_eq!(m.bounding_box(), Some(([1, 1, 1], [3, 3, 3])));
    }

    #[test]
    fn grid_edge_counts_as_outside() {
        let m = Volume::filled([3, 3, 3], true);
        assert_eq!(m.boundary().len(), 26);
    }
}
