use glioma_core::losses::*;
use glioma_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_map(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let p = (0..n).map(|_| rng.gen_range(0.02..0.98)).collect();
    let t = (0..n).map(|_| if rng.gen_bool(0.4) { 1.0 } else { 0.0 }).collect();
    (p, t)
}

fn max_rel_err(f: impl Fn(&[f64]) -> f64, grad: &[f64], p: &[f64]) -> f64 {
    let h = 1e-6;
    let scale = grad.iter().map(|g| g.abs()).fold(0.0, f64::max).max(1e-12);
    let mut worst = 0.0f64;
    let mut q = p.to_vec();
    for i in 0..p.len() {
        q[i] = p[i] + h;
        let up = f(&q);
        q[i] = p[i] - h;
        let down = f(&q);
        q[i] = p[i];
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs() / grad[i].abs().max(scale * 1e-3));
    }
    worst
}

#[test]
fn dice_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (p, t) = random_map(&mut rng, 64);
        let (_, g) = soft_dice_loss_grad(&p, &t).unwrap();
        let err = max_rel_err(|q| soft_dice_loss(q, &t).unwrap(), &g, &p);
        assert!(err < 1e-4, "relative error {err}");
    }
}

#[test]
fn focal_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for i in 0..100 {
        let (p, t) = random_map(&mut rng, 64);
        let params = FocalParams::new(0.1 + 0.008 * i as f64, 0.5 * (i % 5) as f64).unwrap();
        let (_, g) = focal_loss_grad(&p, &t, params).unwrap();
        let err = max_rel_err(|q| focal_loss(q, &t, params).unwrap(), &g, &p);
        assert!(err < 1e-4, "relative error {err} for {params:?}");
    }
}

#[test]
fn focal_without_focusing_is_weighted_cross_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..50 {
        let (p, t) = random_map(&mut rng, 64);
        let alpha = rng.gen_range(0.05..1.0);
        let fl = focal_loss(&p, &t, FocalParams::new(alpha, 0.0).unwrap()).unwrap();
        let ce = weighted_cross_entropy(&p, &t, alpha).unwrap();
        assert!((fl - ce).abs() < 1e-10);
    }
}

#[test]
fn dice_is_zero_at_perfect_agreement_and_one_when_disjoint() {
    let t: Vec<f64> = (0..64).map(|i| (i % 3 == 0) as u8 as f64).collect();
    assert!(soft_dice_loss(&t, &t).unwrap().abs() < 1e-5);
    let inv: Vec<f64> = t.iter().map(|v| 1.0 - v).collect();
    assert!((soft_dice_loss(&inv, &t).unwrap() - 1.0).abs() < 1e-5);
}

#[test]
fn dice_hand_example() {
    let p = [1.0f64, 0.0, 1.0, 0.0];
    let t = [1.0, 1.0, 0.0, 0.0];
    assert!((soft_dice_loss(&p, &t).unwrap() - 0.5).abs() < 1e-5);
}

#[test]
fn losses_are_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let (p, t) = random_map(&mut rng, 64);
    let mut idx: Vec<usize> = (0..64).collect();
    idx.reverse();
    idx.swap(3, 40);
    let pp: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
    let tp: Vec<f64> = idx.iter().map(|&i| t[i]).collect();
    let f = FocalParams::default();
    assert!((soft_dice_loss(&p, &t).unwrap() - soft_dice_loss(&pp, &tp).unwrap()).abs() < 1e-12);
    assert!((focal_loss(&p, &t, f).unwrap() - focal_loss(&pp, &tp, f).unwrap()).abs() < 1e-12);
}

#[test]
fn focal_is_finite_at_saturated_predictions() {
    let p = [0.0f64, 1.0, 0.0, 1.0];
    let t = [1.0, 0.0, 0.0, 1.0];
    let (v, g) = focal_loss_grad(&p, &t, FocalParams::default()).unwrap();
    assert!(v.is_finite() && g.iter().all(|x| x.is_finite()));
}

#[test]
fn shape_mismatch_and_bad_params_are_rejected() {
    assert!(matches!(soft_dice_loss(&[0.5, 0.5], &[1.0]), Err(Error::Shape(_))));
    assert!(matches!(focal_loss(&[0.5], &[1.0, 0.0], FocalParams::default()), Err(Error::Shape(_))));
    assert!(FocalParams::new(0.0, 2.0).is_err());
    assert!(FocalParams::new(0.25, -1.0).is_err());
}
