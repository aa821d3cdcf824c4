use core::fmt::Debug;

use num_traits::Float;

/// Floating-point element type of the network engine.
///
/// Training runs in `f32`; `f64` exists so gradients can be checked against
/// finite differences without single-precision noise.
pub trait Scalar: Float + Default + Debug + Send + Sync + 'static {
    /// `C = A B + beta C` for strided row/column-major views.
    ///
    /// `a` is `m x k`, `b` is `k x n`, `c` is `m x n`; each stride pair is
    /// `(row stride, column stride)` in elements.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_stride: (usize, usize),
        b: &[Self],
        b_stride: (usize, usize),
        beta: Self,
        c: &mut [Self],
        c_stride: (usize, usize),
    );

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

#[inline]
fn extent(rows: usize, cols: usize, (rs, cs): (usize, usize)) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs + 1
    }
}

macro_rules! impl_scalar {
    ($t:ty, $kernel:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_stride: (usize, usize),
                b: &[Self],
                b_stride: (usize, usize),
                beta: Self,
                c: &mut [Self],
                c_stride: (usize, usize),
            ) {
                assert!(a.len() >= extent(m, k, a_stride), "gemm: A too short");
                assert!(b.len() >= extent(k, n, b_stride), "gemm: B too short");
                assert!(c.len() >= extent(m, n, c_stride), "gemm: C too short");
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: the asserts above keep every strided access inside
                // the borrowed slices, and `c` is uniquely borrowed.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        a_stride.0 as isize,
                        a_stride.1 as isize,
                        b.as_ptr(),
                        b_stride.0 as isize,
                        b_stride.1 as isize,
                        beta,
                        c.as_mut_ptr(),
                        c_stride.0 as isize,
                        c_stride.1 as isize,
                    );
                }
            }

            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);
