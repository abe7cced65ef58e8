//! Floating-point scalar abstraction shared by the geometry, metric, and
//! tensor code. Implemented for `f32` and `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar used throughout the crate.
///
/// Besides the usual `num-traits` bounds it carries a dense matrix product
/// hook so tensors can dispatch to the matching `matrixmultiply` kernel, and
/// a little-endian codec used by the checkpoint format.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Tag written into checkpoints.
    const DTYPE: &'static str;
    /// Width of one encoded value in bytes.
    const BYTES: usize;

    /// Converts an `f64` literal. Panics only if the value is unrepresentable,
    /// which cannot happen for finite literals in `f32`/`f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `C = alpha * A * B + beta * C` with arbitrary row/column strides.
    ///
    /// # Safety
    /// The pointers and strides must describe valid matrices of the stated
    /// dimensions, and `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
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

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
    const BYTES: usize = 8;

    unsafe fn gemm(
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
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        let mut buf = [0u8; 8];
        buf.copy_from_slice(&bytes[..8]);
        f64::from_le_bytes(buf)
    }
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
    const BYTES: usize = 4;

    unsafe fn gemm(
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
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        let mut buf = [0u8; 4];
        buf.copy_from_slice(&bytes[..4]);
        f32::from_le_bytes(buf)
    }
}

/// Wraps an angle into `[-pi, pi)`; angles already in range are returned
/// unchanged.
pub fn wrap_angle<T: Scalar>(angle: T) -> T {
    if angle >= -T::PI() && angle < T::PI() {
        return angle;
    }
    let two_pi = T::PI() + T::PI();
    let shifted = angle + T::PI();
    let wrapped = shifted - two_pi * (shifted / two_pi).floor();
    // floor() can leave exactly 2pi after rounding
    let wrapped = if wrapped >= two_pi { wrapped - two_pi } else { wrapped };
    wrapped - T::PI()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        for i in -50..50 {
            let a = i as f64 * 0.37;
            let w = wrap_angle(a);
            assert!((-std::f64::consts::PI..std::f64::consts::PI).contains(&w), "{a} -> {w}");
            assert!(((a - w) / (2.0 * std::f64::consts::PI)).fract().abs() < 1e-9
                || (1.0 - ((a - w) / (2.0 * std::f64::consts::PI)).fract().abs()) < 1e-9);
        }
        assert_eq!(wrap_angle(std::f64::consts::PI), -std::f64::consts::PI);
        assert_eq!(wrap_angle(0.0f32), 0.0);
    }

    #[test]
    fn gemm_dispatch_f32_f64() {
        let a = [1.0f64, 2.0, 3.0, 4.0];
        let b = [5.0f64, 6.0, 7.0, 8.0];
        let mut c = [0.0f64; 4];
        unsafe { f64::gemm(2, 2, 2, 1.0, a.as_ptr(), 2, 1, b.as_ptr(), 2, 1, 0.0, c.as_mut_ptr(), 2, 1) };
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
        let a32 = [1.0f32, 2.0, 3.0, 4.0];
        let b32 = [5.0f32, 6.0, 7.0, 8.0];
        let mut c32 = [0.0f32; 4];
        unsafe { f32::gemm(2, 2, 2, 1.0, a32.as_ptr(), 2, 1, b32.as_ptr(), 2, 1, 0.0, c32.as_mut_ptr(), 2, 1) };
        assert_eq!(c32, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn le_codec() {
        let mut out = Vec::new();
        1.5f64.write_le(&mut out);
        (-2.25f32).write_le(&mut out);
        assert_eq!(f64::read_le(&out[..8]), 1.5);
        assert_eq!(f32::read_le(&out[8..]), -2.25);
    }
}
