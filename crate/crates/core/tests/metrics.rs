use glioma_core::metrics::*;
use glioma_core::{BinaryMask, LabelMap, Volume};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_mask(rng: &mut ChaCha8Rng, dims: [usize; 3], density: f64) -> BinaryMask {
    Volume::from_fn(dims, |_| rng.gen_bool(density))
}

fn brute_boundary(m: &BinaryMask) -> Vec<[usize; 3]> {
    let d = m.dims();
    let mut out = Vec::new();
    for idx in 0..m.len() {
        let c = m.coords(idx);
        if !*m.get(c) {
            continue;
        }
        let mut edge = false;
        for a in 0..3 {
            if c[a] == 0 || c[a] + 1 == d[a] {
                edge = true;
                continue;
            }
            let mut lo = c;
            lo[a] -= 1;
            let mut hi = c;
            hi[a] += 1;
            edge |= !*m.get(lo) || !*m.get(hi);
        }
        if edge {
            out.push(c);
        }
    }
    out
}

fn brute_directed(from: &BinaryMask, to: &BinaryMask, sp: [f64; 3]) -> f64 {
    let targets: Vec<[usize; 3]> = (0..to.len()).filter(|&i| to.data()[i]).map(|i| to.coords(i)).collect();
    let mut ds: Vec<f64> = brute_boundary(from)
        .iter()
        .map(|a| {
            targets
                .iter()
                .map(|b| (0..3).map(|k| ((a[k] as f64 - b[k] as f64) * sp[k]).powi(2)).sum::<f64>().sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = 0.95 * (ds.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(ds.len() - 1);
    ds[lo] + (ds[hi] - ds[lo]) * (pos - lo as f64)
}

#[test]
fn matches_brute_force_on_random_masks() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..40 {
        let dims = [10, 9, 8];
        let p = random_mask(&mut rng, dims, 0.1 + 0.01 * trial as f64);
        let g = random_mask(&mut rng, dims, 0.3);
        let sp = [1.0, 0.5 + 0.1 * (trial % 4) as f64, 2.0];
        let inter = p.data().iter().zip(g.data()).filter(|(a, b)| **a && **b).count();
        let (np, ng) = (p.count(), g.count());
        assert_eq!(dice(&p, &g).unwrap(), 2.0 * inter as f64 / (np + ng) as f64);
        assert_eq!(sensitivity(&p, &g).unwrap(), inter as f64 / ng as f64);
        let expect = brute_directed(&p, &g, sp).max(brute_directed(&g, &p, sp));
        let got = hausdorff95(&p, &g, sp).unwrap().unwrap();
        assert!((got - expect).abs() < 1e-9, "{got} vs {expect}");
    }
}

#[test]
fn symmetry_and_asymmetric_sensitivity() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let p = random_mask(&mut rng, [8, 8, 8], 0.2);
    let g = random_mask(&mut rng, [8, 8, 8], 0.4);
    assert_eq!(dice(&p, &g).unwrap(), dice(&g, &p).unwrap());
    assert_eq!(hausdorff95(&p, &g, [1.0; 3]).unwrap(), hausdorff95(&g, &p, [1.0; 3]).unwrap());
    assert_ne!(sensitivity(&p, &g).unwrap(), sensitivity(&g, &p).unwrap());
}

#[test]
fn hausdorff_axis_permutation_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let dims = [6, 7, 8];
    let p = random_mask(&mut rng, dims, 0.2);
    let g = random_mask(&mut rng, dims, 0.2);
    let sp = [0.7, 1.3, 2.1];
    let perm = |m: &BinaryMask| Volume::from_fn([8, 6, 7], |[k, i, j]| *m.get([i, j, k]));
    let a = hausdorff95(&p, &g, sp).unwrap().unwrap();
    let b = hausdorff95(&perm(&p), &perm(&g), [sp[2], sp[0], sp[1]]).unwrap().unwrap();
    assert!((a - b).abs() < 1e-9);
}

fn label_map(dims: [usize; 3], f: impl FnMut([usize; 3]) -> u8) -> LabelMap {
    LabelMap::new("c", Volume::from_fn(dims, f), [1.0; 3]).unwrap()
}

#[test]
fn evaluate_identical_and_empty_predictions() {
    let gt = label_map([8, 8, 8], |[i, j, k]| match (i, j, k) {
        (2..=5, 2..=5, 2..=5) if i == 3 && j == 3 => 4,
        (2..=5, 2..=5, 2..=5) => 1,
        (1..=6, 1..=6, 1..=6) => 2,
        _ => 0,
    });
    let m = evaluate_case(&gt, &gt).unwrap();
    for r in [m.wt, m.tc, m.et] {
        assert_eq!((r.dice, r.sensitivity, r.hausdorff95), (1.0, 1.0, Some(0.0)));
    }
    let empty = label_map([8, 8, 8], |_| 0);
    let m = evaluate_case(&empty, &gt).unwrap();
    for r in [m.wt, m.tc, m.et] {
        assert_eq!((r.dice, r.sensitivity, r.hausdorff95), (0.0, 0.0, None));
    }
}

#[test]
fn evaluate_hand_computed_case() {
    // Ground truth: edema column x=1..=4 at (y,z)=(0,0), enhancing voxel at x=5.
    // Prediction: edema at x=2..=4, enhancing at x=5 and x=6.
    let gt = label_map([8, 8, 8], |[i, j, k]| match (i, j, k) {
        (1..=4, 0, 0) => 2,
        (5, 0, 0) => 4,
        _ => 0,
    });
    let pred = label_map([8, 8, 8], |[i, j, k]| match (i, j, k) {
        (2..=4, 0, 0) => 2,
        (5..=6, 0, 0) => 4,
        _ => 0,
    });
    let m = evaluate_case(&pred, &gt).unwrap();
    // WT: |P|=5, |G|=5, overlap 4.
    assert!((m.wt.dice - 0.8).abs() < 1e-12);
    assert!((m.wt.sensitivity - 0.8).abs() < 1e-12);
    // Every voxel touches the grid edge, so all are boundary. Directed distances
    // P->G are {0,0,0,0,1}, G->P are {1,0,0,0,0}; P95 of each is 0.8.
    assert!((m.wt.hausdorff95.unwrap() - 0.8).abs() < 1e-12);
    // ET: P={5,6}, G={5}.
    assert!((m.et.dice - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(m.et.sensitivity, 1.0);
    assert!((m.et.hausdorff95.unwrap() - 0.95).abs() < 1e-12);
    assert_eq!(m.tc, m.et);
}

#[test]
fn aggregate_excludes_undefined_distances() {
    let gt = label_map([4, 4, 4], |[i, _, _]| if i < 2 { 4 } else { 0 });
    let empty = label_map([4, 4, 4], |_| 0);
    let cases = vec![evaluate_case(&gt, &gt).unwrap(), evaluate_case(&empty, &gt).unwrap()];
    let t = aggregate(&cases).unwrap();
    let hd = t.column(Metric::Hausdorff95, glioma_core::SubregionId::ET).unwrap();
    assert_eq!(hd.excluded, 1);
    assert_eq!(hd.mean, 0.0);
    let d = t.column(Metric::Dice, glioma_core::SubregionId::ET).unwrap();
    assert_eq!((d.mean, d.std_dev, d.median), (0.5, 0.5, 0.5));
    assert_eq!(t.columns.len(), 9);
}
