//! Floating-point abstraction shared by the model, optimizer and SPL code.

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

/// Real scalar the whole toolkit is generic over.
///
/// Besides the usual `num-traits` bounds this carries a dense matrix product
/// (`gemm`) so that `f32`/`f64` can route convolutions through an optimized
/// kernel while any other implementor falls back to the portable loop.
pub trait Scalar:
    'static
    + Copy
    + Send
    + Sync
    + Default
    + Debug
    + Display
    + LowerExp
    + Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Sum
{
    /// Name written into checkpoints next to every parameter array.
    const DTYPE: &'static str;
    /// Width of one little-endian encoded value.
    const BYTES: usize;

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    /// Lossless-where-possible conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `C += A · B` for row/column strided operands.
    ///
    /// `a` is `m × k`, `b` is `k × n`, `c` is `m × n`; strides are in elements.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (usize, usize),
        b: &[Self],
        b_strides: (usize, usize),
        c: &mut [Self],
        c_strides: (usize, usize),
    ) {
        gemm_portable(m, k, n, a, a_strides, b, b_strides, c, c_strides)
    }
}

fn extent(rows: usize, cols: usize, (rs, cs): (usize, usize)) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs + 1
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_portable<T: Float + NumAssign>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    (ars, acs): (usize, usize),
    b: &[T],
    (brs, bcs): (usize, usize),
    c: &mut [T],
    (crs, ccs): (usize, usize),
) {
    assert!(a.len() >= extent(m, k, (ars, acs)));
    assert!(b.len() >= extent(k, n, (brs, bcs)));
    assert!(c.len() >= extent(m, n, (crs, ccs)));
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * ars + p * acs];
            if aip == T::zero() {
                continue;
            }
            for j in 0..n {
                c[i * crs + j * ccs] += aip * b[p * brs + j * bcs];
            }
        }
    }
}

macro_rules! impl_scalar {
    ($t:ty, $name:literal, $kernel:path) => {
        impl Scalar for $t {
            const DTYPE: &'static str = $name;
            const BYTES: usize = std::mem::size_of::<$t>();

            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }

            fn read_le(bytes: &[u8]) -> Self {
                let mut buf = [0u8; std::mem::size_of::<$t>()];
                buf.copy_from_slice(&bytes[..Self::BYTES]);
                <$t>::from_le_bytes(buf)
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_strides: (usize, usize),
                b: &[Self],
                b_strides: (usize, usize),
                c: &mut [Self],
                c_strides: (usize, usize),
            ) {
                assert!(a.len() >= extent(m, k, a_strides));
                assert!(b.len() >= extent(k, n, b_strides));
                assert!(c.len() >= extent(m, n, c_strides));
                if m == 0 || n == 0 || k == 0 {
                    return;
                }
                // SAFETY: the asserts above bound every index the kernel touches.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        a_strides.0 as isize,
                        a_strides.1 as isize,
                        b.as_ptr(),
                        b_strides.0 as isize,
                        b_strides.1 as isize,
                        1.0,
                        c.as_mut_ptr(),
                        c_strides.0 as isize,
                        c_strides.1 as isize,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, "f32", matrixmultiply::sgemm);
impl_scalar!(f64, "f64", matrixmultiply::dgemm);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimized_gemm_matches_portable_loop() {
        let (m, k, n) = (5, 7, 3);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut fast = vec![0.5; m * n];
        let mut slow = fast.clone();
        // b used transposed: logical k×n read from an n×k buffer
        f64::gemm(m, k, n, &a, (k, 1), &b, (1, k), &mut fast, (n, 1));
        gemm_portable(m, k, n, &a, (k, 1), &b, (1, k), &mut slow, (n, 1));
        for (x, y) in fast.iter().zip(&slow) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn byte_round_trip() {
        let mut buf = Vec::new();
        1.25f32.write_le(&mut buf);
        (-3.5f64).write_le(&mut buf);
        assert_eq!(f32::read_le(&buf[..4]), 1.25);
        assert_eq!(f64::read_le(&buf[4..]), -3.5);
    }
}
