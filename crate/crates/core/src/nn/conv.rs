//! Same-padded 2D convolution (1x1 or 3x3) via im2col and GEMM.

use alloc::vec;
use alloc::vec::Vec;

use super::Scalar;

/// Upper bound on im2col buffer size in elements; larger images are processed
/// in bands of rows.
const COL_BUDGET: usize = 1 << 22;

#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    /// `cout x cin x kernel x kernel`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub grad_weight: Vec<T>,
    pub grad_bias: Vec<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(cin: usize, cout: usize, kernel: usize) -> Self {
        assert!(kernel == 1 || kernel == 3, "only 1x1 and 3x3 kernels");
        let k = cin * kernel * kernel;
        Conv2d {
            cin,
            cout,
            kernel,
            weight: vec![T::zero(); cout * k],
            bias: vec![T::zero(); cout],
            grad_weight: vec![T::zero(); cout * k],
            grad_bias: vec![T::zero(); cout],
        }
    }

    #[inline]
    fn k(&self) -> usize {
        self.cin * self.kernel * self.kernel
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.iter_mut().for_each(|g| *g = T::zero());
        self.grad_bias.iter_mut().for_each(|g| *g = T::zero());
    }

    fn band_rows(&self, h: usize, w: usize) -> usize {
        (COL_BUDGET / (self.k() * w).max(1)).clamp(1, h)
    }

    /// `src` is `cin x h x w`, `dst` is `cout x h x w` (overwritten, bias added).
    pub fn forward_sample(&self, src: &[T], h: usize, w: usize, dst: &mut [T], scratch: &mut Vec<T>) {
        let hw = h * w;
        debug_assert!(src.len() >= self.cin * hw);
        debug_assert!(dst.len() >= self.cout * hw);
        if self.kernel == 1 {
            T::gemm(self.cout, self.cin, hw, &self.weight, (self.cin, 1), src, (hw, 1), T::zero(), dst, (hw, 1));
        } else {
            let k = self.k();
            let band = self.band_rows(h, w);
            let mut r0 = 0;
            while r0 < h {
                let r1 = (r0 + band).min(h);
                let nb = (r1 - r0) * w;
                scratch.resize(k * nb, T::zero());
                im2col3(src, self.cin, h, w, r0, r1, scratch);
                T::gemm(self.cout, k, nb, &self.weight, (k, 1), scratch, (nb, 1), T::zero(), &mut dst[r0 * w..], (hw, 1));
                r0 = r1;
            }
        }
        for (o, &b) in self.bias.iter().enumerate() {
            for v in &mut dst[o * hw..(o + 1) * hw] {
                *v = *v + b;
            }
        }
    }

    /// Accumulates parameter gradients for one sample. `dout` is the gradient
    /// with respect to this layer's pre-activation output; when `dsrc` is
    /// given the input gradient is added into it.
    pub fn backward_sample(
        &mut self,
        src: &[T],
        h: usize,
        w: usize,
        dout: &[T],
        dsrc: Option<&mut [T]>,
        scratch: &mut Vec<T>,
    ) {
        let hw = h * w;
        for o in 0..self.cout {
            let s = dout[o * hw..(o + 1) * hw].iter().fold(T::zero(), |a, &b| a + b);
            self.grad_bias[o] = self.grad_bias[o] + s;
        }
        if self.kernel == 1 {
            // dW += dout * src^T
            T::gemm(self.cout, hw, self.cin, dout, (hw, 1), src, (1, hw), T::one(), &mut self.grad_weight, (self.cin, 1));
            if let Some(dsrc) = dsrc {
                // dsrc += W^T * dout
                T::gemm(self.cin, self.cout, hw, &self.weight, (1, self.cin), dout, (hw, 1), T::one(), dsrc, (hw, 1));
            }
            return;
        }
        let k = self.k();
        let band = self.band_rows(h, w);
        let mut dsrc = dsrc;
        let mut r0 = 0;
        while r0 < h {
            let r1 = (r0 + band).min(h);
            let nb = (r1 - r0) * w;
            scratch.resize(k * nb, T::zero());
            im2col3(src, self.cin, h, w, r0, r1, scratch);
            let dband = &dout[r0 * w..];
            T::gemm(self.cout, nb, k, dband, (hw, 1), scratch, (1, nb), T::one(), &mut self.grad_weight, (k, 1));
            if let Some(dsrc) = dsrc.as_deref_mut() {
                T::gemm(k, self.cout, nb, &self.weight, (1, k), dband, (hw, 1), T::zero(), scratch, (nb, 1));
                col2im3(scratch, self.cin, h, w, r0, r1, dsrc);
            }
            r0 = r1;
        }
    }
}

/// Unfolds rows `[r0, r1)` of a zero-padded `cin x h x w` image into a
/// `(cin * 9) x ((r1 - r0) * w)` matrix.
fn im2col3<T: Scalar>(src: &[T], cin: usize, h: usize, w: usize, r0: usize, r1: usize, col: &mut [T]) {
    let nb = (r1 - r0) * w;
    for ci in 0..cin {
        let plane = &src[ci * h * w..(ci + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[((ci * 3 + ky) * 3 + kx) * nb..][..nb];
                for y in r0..r1 {
                    let out = &mut row[(y - r0) * w..][..w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let srow = &plane[sy as usize * w..][..w];
                    match kx {
                        0 => {
                            out[0] = T::zero();
                            out[1..].copy_from_slice(&srow[..w - 1]);
                        }
                        1 => out.copy_from_slice(srow),
                        _ => {
                            out[..w - 1].copy_from_slice(&srow[1..]);
                            out[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col3`]: accumulates the column matrix back into the image.
fn col2im3<T: Scalar>(col: &[T], cin: usize, h: usize, w: usize, r0: usize, r1: usize, dst: &mut [T]) {
    let nb = (r1 - r0) * w;
    for ci in 0..cin {
        let plane = &mut dst[ci * h * w..(ci + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[((ci * 3 + ky) * 3 + kx) * nb..][..nb];
                for y in r0..r1 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let g = &row[(y - r0) * w..][..w];
                    let drow = &mut plane[sy as usize * w..][..w];
                    match kx {
                        0 => {
                            for x in 1..w {
                                drow[x - 1] = drow[x - 1] + g[x];
                            }
                        }
                        1 => {
                            for x in 0..w {
                                drow[x] = drow[x] + g[x];
                            }
                        }
                        _ => {
                            for x in 0..w - 1 {
                                drow[x + 1] = drow[x + 1] + g[x];
                            }
                        }
                    }
                }
            }
        }
    }
}
