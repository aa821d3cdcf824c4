//! Soft-dice and focal losses over probability maps, with analytic gradients
//! with respect to the predicted probabilities.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};

/// Smoothing term added to both numerator and denominator of the soft dice.
pub const DICE_EPS: f64 = 1e-6;
/// Probabilities are clamped to `[FOCAL_DELTA, 1 - FOCAL_DELTA]` before the log.
pub const FOCAL_DELTA: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FocalParams {
    /// Weight of the positive class; negatives get `1 - alpha`.
    pub alpha: f64,
    /// Focusing exponent of the modulating factor `(1 - p_t)^gamma`.
    pub gamma: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        FocalParams {
            alpha: 0.25,
            gamma: 2.0,
        }
    }
}

impl FocalParams {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) || !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidInput(alloc::format!(
                "focal parameters need alpha in (0, 1] and gamma >= 0, got ({alpha}, {gamma})"
            )));
        }
        Ok(FocalParams { alpha, gamma })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum LossKind {
    Dice,
    Focal(FocalParams),
}

impl LossKind {
    pub fn value<T: Float>(&self, pred: &[T], target: &[T]) -> Result<T> {
        match self {
            LossKind::Dice => soft_dice_loss(pred, target),
            LossKind::Focal(p) => focal_loss(pred, target, *p),
        }
    }

    pub fn value_and_grad<T: Float>(&self, pred: &[T], target: &[T]) -> Result<(T, Vec<T>)> {
        match self {
            LossKind::Dice => soft_dice_loss_grad(pred, target),
            LossKind::Focal(p) => focal_loss_grad(pred, target, *p),
        }
    }
}

fn check_shapes<T>(pred: &[T], target: &[T]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::shape(alloc::format!(
            "prediction has {} values, target {}",
            pred.len(),
            target.len()
        )));
    }
    Ok(())
}

#[inline]
fn c<T: Float>(x: f64) -> T {
    T::from(x).expect("representable constant")
}

struct DiceSums<T> {
    pq: T,
    pp: T,
    qq: T,
}

fn dice_sums<T: Float>(pred: &[T], target: &[T]) -> DiceSums<T> {
    let mut s = DiceSums {
        pq: T::zero(),
        pp: T::zero(),
        qq: T::zero(),
    };
    for (&p, &q) in pred.iter().zip(target) {
        s.pq = s.pq + p * q;
        s.pp = s.pp + p * p;
        s.qq = s.qq + q * q;
    }
    s
}

/// `1 - (2 sum(p q) + eps) / (sum(p^2) + sum(q^2) + eps)`.
pub fn soft_dice_loss<T: Float>(pred: &[T], target: &[T]) -> Result<T> {
    check_shapes(pred, target)?;
    let eps = c::<T>(DICE_EPS);
    let s = dice_sums(pred, target);
    Ok(T::one() - (c::<T>(2.0) * s.pq + eps) / (s.pp + s.qq + eps))
}

pub fn soft_dice_loss_grad<T: Float>(pred: &[T], target: &[T]) -> Result<(T, Vec<T>)> {
    check_shapes(pred, target)?;
    let eps = c::<T>(DICE_EPS);
    let two = c::<T>(2.0);
    let s = dice_sums(pred, target);
    let num = two * s.pq + eps;
    let den = s.pp + s.qq + eps;
    let loss = T::one() - num / den;
    let den2 = den * den;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &q)| -(two * q * den - num * two * p) / den2)
        .collect();
    Ok((loss, grad))
}

/// Per-voxel `(p_t, alpha_t)` for a prediction and binary target.
#[inline]
fn focal_terms<T: Float>(p: T, q: T, alpha: T) -> (T, T, bool) {
    let delta = c::<T>(FOCAL_DELTA);
    let p = p.max(delta).min(T::one() - delta);
    if q > c::<T>(0.5) {
        (p, alpha, true)
    } else {
        (T::one() - p, T::one() - alpha, false)
    }
}

/// Mean over voxels of `-alpha_t (1 - p_t)^gamma ln(p_t)`.
pub fn focal_loss<T: Float>(pred: &[T], target: &[T], params: FocalParams) -> Result<T> {
    check_shapes(pred, target)?;
    if pred.is_empty() {
        return Ok(T::zero());
    }
    let alpha = c::<T>(params.alpha);
    let gamma = c::<T>(params.gamma);
    let mut sum = T::zero();
    for (&p, &q) in pred.iter().zip(target) {
        let (pt, at, _) = focal_terms(p, q, alpha);
        sum = sum - at * (T::one() - pt).powf(gamma) * pt.ln();
    }
    Ok(sum / c::<T>(pred.len() as f64))
}

/// The gradient is evaluated at the clamped probability, so saturated outputs
/// still receive a signal.
pub fn focal_loss_grad<T: Float>(
    pred: &[T],
    target: &[T],
    params: FocalParams,
) -> Result<(T, Vec<T>)> {
    check_shapes(pred, target)?;
    if pred.is_empty() {
        return Ok((T::zero(), Vec::new()));
    }
    let n = c::<T>(pred.len() as f64);
    let alpha = c::<T>(params.alpha);
    let gamma = c::<T>(params.gamma);
    let mut sum = T::zero();
    let mut grad = vec![T::zero(); pred.len()];
    for ((&p, &q), g) in pred.iter().zip(target).zip(grad.iter_mut()) {
        let (pt, at, positive) = focal_terms(p, q, alpha);
        let one_m = T::one() - pt;
        let ln_pt = pt.ln();
        let modulating = one_m.powf(gamma);
        sum = sum - at * modulating * ln_pt;
        // d/dp_t of -a (1-p_t)^g ln p_t
        let mut d_pt = -at * modulating / pt;
        if gamma != T::zero() {
            d_pt = d_pt + at * gamma * one_m.powf(gamma - T::one()) * ln_pt;
        }
        *g = if positive { d_pt } else { -d_pt } / n;
    }
    Ok((sum / n, grad))
}

/// Mean over voxels of `-alpha_t ln(p_t)`: the `gamma = 0` special case,
/// written out independently.
pub fn weighted_cross_entropy<T: Float>(pred: &[T], target: &[T], alpha: f64) -> Result<T> {
    check_shapes(pred, target)?;
    if pred.is_empty() {
        return Ok(T::zero());
    }
    let delta = c::<T>(FOCAL_DELTA);
    let a = c::<T>(alpha);
    let mut sum = T::zero();
    for (&p, &q) in pred.iter().zip(target) {
        let p = p.max(delta).min(T::one() - delta);
        sum = sum - (q * a * p.ln() + (T::one() - q) * (T::one() - a) * (T::one() - p).ln());
    }
    Ok(sum / c::<T>(pred.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dice_perfect_overlap() {
        let t = [1.0, 0.0, 1.0, 1.0];
        assert!(soft_dice_loss(&t, &t).unwrap().abs() < 1e-6);
    }

    #[test]
    fn dice_half_prediction() {
        // 1 - (2*0.5 + eps)/(0.5 + 1 + eps)
        let l: f64 = soft_dice_loss(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        let expect = 1.0 - (1.0 + DICE_EPS) / (1.5 + DICE_EPS);
        assert!((l - expect).abs() < 1e-15);
        assert!((l - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn dice_both_empty_is_zero() {
        let l: f64 = soft_dice_loss(&[0.0; 5], &[0.0; 5]).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn dice_shape_error() {
        assert!(matches!(soft_dice_loss(&[0.0f64; 3], &[0.0; 2]), Err(Error::Shape(_))));
    }

    #[test]
    fn focal_reduces_to_log_loss() {
        let l: f64 = focal_loss(&[0.5], &[1.0], FocalParams::new(1.0, 0.0).unwrap()).unwrap();
        assert!((l - core::f64::consts::LN_2).abs() < 1e-12);
        assert!((l - 0.6931).abs() < 1e-4);
    }

    #[test]
    fn focal_direct_evaluation() {
        let l: f64 = focal_loss(&[0.9], &[1.0], FocalParams::default()).unwrap();
        let expect = 0.25 * 0.1f64.powi(2) * -(0.9f64.ln());
        assert!((l - expect).abs() < 1e-15);
        assert!((l - 2.634e-4).abs() < 1e-7);
    }

    #[test]
    fn focal_confident_is_near_zero() {
        let l: f64 = focal_loss(&[1.0, 0.0, 1.0], &[1.0, 0.0, 1.0], FocalParams::default()).unwrap();
        assert!(l < 1e-12);
    }

    #[test]
    fn invalid_focal_params() {
        assert!(FocalParams::new(0.0, 2.0).is_err());
        assert!(FocalParams::new(0.5, -1.0).is_err());
        assert!(FocalParams::new(1.0, 0.0).is_ok());
    }

    #[test]
    fn dice_monotone_in_positive_confidence() {
        let target = [1.0, 1.0, 1.0, 0.0, 0.0];
        let mut prev = f64::INFINITY;
        for step in 0..=10 {
            let v = step as f64 / 10.0;
            let pred = [v, v, v, 0.0, 0.0];
            let l = soft_dice_loss(&pred, &target).unwrap();
            assert!(l < prev || step == 0);
            prev = l;
        }
    }
}
