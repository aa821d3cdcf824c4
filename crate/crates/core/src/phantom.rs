//! Synthetic multi-modal phantoms with nested ellipsoidal tumors.
//!
//! Each phantom is an ellipsoidal "brain" containing an edema ellipsoid, a
//! tumor-core ellipsoid inside it and an enhancing rim around a necrotic
//! centre. Every subregion has its own intensity signature per modality plus
//! Gaussian noise, so a small network can learn them quickly.

use alloc::format;
use alloc::string::String;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data_model::{Case, LabelMap, MultiModalScan};
use crate::volume::{Spacing, Volume};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomConfig {
    pub dims: [usize; 3],
    pub spacing: Spacing,
    pub noise: f32,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            dims: [64, 64, 32],
            spacing: [1.0; 3],
            noise: 0.05,
        }
    }
}

// intensity per label (background brain, NCR, ED, ET) and modality (T1, T2, T1c, FLAIR)
const INTENSITY: [[f32; 4]; 4] = [
    [0.60, 0.50, 0.55, 0.45],
    [0.35, 0.90, 0.40, 0.70],
    [0.50, 0.85, 0.55, 0.95],
    [0.55, 0.70, 1.00, 0.65],
];

fn label_slot(label: u8) -> usize {
    match label {
        1 => 1,
        2 => 2,
        4 => 3,
        _ => 0,
    }
}

/// Generates one phantom case; identical `(config, seed)` give identical data.
pub fn phantom_case(case_id: &str, config: &PhantomConfig, seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [n0, n1, n2] = config.dims;
    let dimsf = [n0 as f64, n1 as f64, n2 as f64];
    // tumor placement leaves room for the dropped top slices
    let usable_z = (n2 as f64 - 10.0).max(n2 as f64 * 0.5);
    let centre = [
        dimsf[0] * rng.gen_range(0.40..0.60),
        dimsf[1] * rng.gen_range(0.40..0.60),
        usable_z * rng.gen_range(0.45..0.55),
    ];
    let ed_r = [
        dimsf[0] * rng.gen_range(0.16..0.22),
        dimsf[1] * rng.gen_range(0.16..0.22),
        usable_z * rng.gen_range(0.25..0.32),
    ];
    let tc_scale = rng.gen_range(0.55..0.70);
    let ncr_scale = rng.gen_range(0.45..0.60);
    let brain_r = [dimsf[0] * 0.46, dimsf[1] * 0.46, dimsf[2] * 0.48];
    let brain_c = [dimsf[0] / 2.0, dimsf[1] / 2.0, dimsf[2] / 2.0];

    let ellipsoid = |p: [f64; 3], c: [f64; 3], r: [f64; 3]| -> f64 {
        (0..3)
            .map(|a| {
                let d = (p[a] - c[a]) / r[a];
                d * d
            })
            .sum()
    };
    let labels = Volume::from_fn(config.dims, |[i, j, k]| {
        let p = [i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5];
        let e = ellipsoid(p, centre, ed_r);
        if e <= (tc_scale * ncr_scale) * (tc_scale * ncr_scale) {
            1
        } else if e <= tc_scale * tc_scale {
            4
        } else if e <= 1.0 {
            2
        } else {
            0
        }
    });
    let brain = Volume::from_fn(config.dims, |[i, j, k]| {
        let p = [i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5];
        ellipsoid(p, brain_c, brain_r) <= 1.0
    });

    let noise = Normal::new(0.0f32, config.noise.max(0.0)).expect("valid noise level");
    let volumes = core::array::from_fn(|m| {
        let mut v = Volume::filled(config.dims, 0.0f32);
        for idx in 0..v.len() {
            let label = labels.data()[idx];
            if brain.data()[idx] || label != 0 {
                let base = INTENSITY[label_slot(label)][m];
                // keep brain voxels strictly positive so they survive z-scoring
                v.data_mut()[idx] = (base + noise.sample(&mut rng)).max(0.01);
            }
        }
        v
    });
    let scan = MultiModalScan::new(case_id, volumes, config.spacing).expect("phantom volumes are valid");
    let labels = LabelMap::new(case_id, labels, config.spacing).expect("phantom labels are valid");
    Case::new(scan, labels).expect("matching dims")
}

/// `count` phantoms named `phantom_000`, `phantom_001`, ...
pub fn phantom_cohort(count: usize, config: &PhantomConfig, seed: u64) -> alloc::vec::Vec<Case> {
    (0..count)
        .map(|i| {
            let id: String = format!("phantom_{i:03}");
            phantom_case(&id, config, seed.wrapping_mul(1_000_003).wrapping_add(i as u64))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{subregion_mask, SubregionId};

    #[test]
    fn phantom_has_nested_regions() {
        let case = phantom_case("p", &PhantomConfig::default(), 1);
        let l = &case.labels;
        assert!(l.count(1) > 0 && l.count(2) > 0 && l.count(4) > 0);
        let wt = subregion_mask(l, SubregionId::WT);
        // tumor stays below the dropped slices
        let d = l.dims()[2];
        for k in d - 10..d {
            assert!(wt.slice(k).iter().all(|&b| !b));
        }
    }

    #[test]
    fn deterministic() {
        let a = phantom_case("p", &PhantomConfig::default(), 9);
        let b = phantom_case("p", &PhantomConfig::default(), 9);
        assert_eq!(a.scan, b.scan);
        assert_eq!(a.labels, b.labels);
    }
}
