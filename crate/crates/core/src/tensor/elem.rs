use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;

/// Floating-point element type a [`Tensor`](super::Tensor) can hold.
///
/// Models train in `f32`; `f64` exists so finite-difference gradient checks
/// are not drowned by rounding noise.
pub trait Elem: Float + Sum + Debug + Display + Default + Send + Sync + 'static {
    /// `c = alpha * a·b + beta * c` over strided views.
    ///
    /// # Safety
    /// Every strided index touched must lie inside the buffers behind the
    /// pointers.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn lit(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("finite literal")
    }

    fn to_f32_lossy(self) -> f32 {
        self.to_f32().unwrap_or(f32::NAN)
    }
}

impl Elem for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Elem for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Strided matrix view: `(offset, row stride, column stride)` into a slice.
#[derive(Clone, Copy, Debug)]
pub(crate) struct View {
    pub offset: usize,
    pub rs: usize,
    pub cs: usize,
}

impl View {
    pub fn rows(offset: usize, rs: usize) -> Self {
        View { offset, rs, cs: 1 }
    }

    /// Transposed view of a row-major matrix with row stride `rs`.
    pub fn cols(offset: usize, rs: usize) -> Self {
        View { offset, rs: 1, cs: rs }
    }

    fn last_index(&self, rows: usize, cols: usize) -> usize {
        self.offset + (rows.max(1) - 1) * self.rs + (cols.max(1) - 1) * self.cs
    }
}

/// Bounds-checked strided GEMM: `c[m×n] = a[m×k]·b[k×n] (+ c if accumulate)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<E: Elem>(
    m: usize,
    k: usize,
    n: usize,
    a: &[E],
    av: View,
    b: &[E],
    bv: View,
    c: &mut [E],
    cv: View,
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(av.last_index(m, k) < a.len() || k == 0, "gemm: lhs view out of bounds");
    assert!(bv.last_index(k, n) < b.len() || k == 0, "gemm: rhs view out of bounds");
    assert!(cv.last_index(m, n) < c.len(), "gemm: output view out of bounds");
    let beta = if accumulate { E::one() } else { E::zero() };
    if k == 0 {
        if !accumulate {
            for i in 0..m {
                for j in 0..n {
                    c[cv.offset + i * cv.rs + j * cv.cs] = E::zero();
                }
            }
        }
        return;
    }
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        E::gemm_raw(
            m,
            k,
            n,
            E::one(),
            a.as_ptr().add(av.offset),
            av.rs as isize,
            av.cs as isize,
            b.as_ptr().add(bv.offset),
            bv.rs as isize,
            bv.cs as isize,
            beta,
            c.as_mut_ptr().add(cv.offset),
            cv.rs as isize,
            cv.cs as isize,
        );
    }
}
