use alloc::vec;
use alloc::vec::Vec;

use super::Scalar;

/// A batch of feature maps in `N x C x H x W` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor {
            n,
            c,
            h,
            w,
            data: vec![T::zero(); n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), n * c * h * w, "tensor data length");
        Tensor { n, c, h, w, data }
    }

    #[inline]
    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    #[inline]
    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    #[inline]
    pub fn sample(&self, s: usize) -> &[T] {
        let len = self.sample_len();
        &self.data[s * len..(s + 1) * len]
    }

    #[inline]
    pub fn sample_mut(&mut self, s: usize) -> &mut [T] {
        let len = self.sample_len();
        &mut self.data[s * len..(s + 1) * len]
    }

    /// Channels `[from, to)` of sample `s`.
    #[inline]
    pub fn channels(&self, s: usize, from: usize, to: usize) -> &[T] {
        let p = self.plane();
        &self.sample(s)[from * p..to * p]
    }

    #[inline]
    pub fn channels_mut(&mut self, s: usize, from: usize, to: usize) -> &mut [T] {
        let p = self.plane();
        &mut self.sample_mut(s)[from * p..to * p]
    }
}

#[inline]
pub fn relu_inplace<T: Scalar>(xs: &mut [T]) {
    for x in xs {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

/// Zeroes gradient entries whose rectified activation is not positive.
#[inline]
pub fn relu_backward_inplace<T: Scalar>(grad: &mut [T], activation: &[T]) {
    for (g, &a) in grad.iter_mut().zip(activation) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// 2x2 max-pool of `c` channels (`src` is `c x h x w`). Writes the window
/// position of each maximum (0..4, row-major) into `argmax`.
pub fn maxpool2<T: Scalar>(src: &[T], c: usize, h: usize, w: usize, dst: &mut [T], argmax: &mut [u8]) {
    let (oh, ow) = (h / 2, w / 2);
    for ch in 0..c {
        let s = &src[ch * h * w..(ch + 1) * h * w];
        for y in 0..oh {
            for x in 0..ow {
                let base = 2 * y * w + 2 * x;
                let cand = [s[base], s[base + 1], s[base + w], s[base + w + 1]];
                let mut best = 0;
                for (i, v) in cand.iter().enumerate().skip(1) {
                    if *v > cand[best] {
                        best = i;
                    }
                }
                let o = ch * oh * ow + y * ow + x;
                dst[o] = cand[best];
                argmax[o] = best as u8;
            }
        }
    }
}

/// Routes pooled gradients back to the selected inputs (accumulating).
pub fn maxpool2_backward<T: Scalar>(dout: &[T], argmax: &[u8], c: usize, h: usize, w: usize, dsrc: &mut [T]) {
    let (oh, ow) = (h / 2, w / 2);
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let o = ch * oh * ow + y * ow + x;
                let a = argmax[o] as usize;
                let idx = ch * h * w + (2 * y + a / 2) * w + 2 * x + a % 2;
                dsrc[idx] = dsrc[idx] + dout[o];
            }
        }
    }
}

/// Nearest-neighbour 2x upsampling of `c x h x w` into `c x 2h x 2w`.
pub fn upsample2<T: Scalar>(src: &[T], c: usize, h: usize, w: usize, dst: &mut [T]) {
    let (oh, ow) = (2 * h, 2 * w);
    for ch in 0..c {
        for y in 0..oh {
            let srow = &src[ch * h * w + (y / 2) * w..][..w];
            let drow = &mut dst[ch * oh * ow + y * ow..][..ow];
            for x in 0..ow {
                drow[x] = srow[x / 2];
            }
        }
    }
}

/// Sums each 2x2 block of `dout` (`c x 2h x 2w`) into `dsrc` (`c x h x w`).
pub fn upsample2_backward<T: Scalar>(dout: &[T], c: usize, h: usize, w: usize, dsrc: &mut [T]) {
    let (oh, ow) = (2 * h, 2 * w);
    for ch in 0..c {
        for y in 0..oh {
            let drow = &dout[ch * oh * ow + y * ow..][..ow];
            let srow = &mut dsrc[ch * h * w + (y / 2) * w..][..w];
            for x in 0..ow {
                srow[x / 2] = srow[x / 2] + drow[x];
            }
        }
    }
}
