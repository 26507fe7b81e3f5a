//! Forward and backward kernels for the autoencoder's building blocks.
//!
//! Feature maps are channel-major slices. Convolutions go through
//! `im2col`/`col2im` and a single matrix product per call.

use crate::scalar::Scalar;

/// Geometry of a strided 2-D convolution over square maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    /// Side of the (larger) map the convolution reads.
    pub in_side: usize,
    /// Side of the (smaller) map the convolution writes.
    pub out_side: usize,
}

impl ConvGeom {
    pub fn new(kernel: usize, stride: usize, pad: usize, in_side: usize) -> Self {
        let out_side = (in_side + 2 * pad - kernel) / stride + 1;
        Self {
            kernel,
            stride,
            pad,
            in_side,
            out_side,
        }
    }

    fn patch(&self) -> usize {
        self.kernel * self.kernel
    }
}

/// Unfolds `channels × in_side²` into `(channels·k²) × out_side²`.
pub(crate) fn im2col<T: Scalar>(input: &[T], channels: usize, g: ConvGeom, cols: &mut [T]) {
    let (k, s, side, out) = (g.kernel, g.stride, g.in_side as isize, g.out_side);
    let positions = out * out;
    debug_assert_eq!(input.len(), channels * g.in_side * g.in_side);
    debug_assert_eq!(cols.len(), channels * g.patch() * positions);
    for c in 0..channels {
        let plane = &input[c * g.in_side * g.in_side..(c + 1) * g.in_side * g.in_side];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * positions..(row + 1) * positions];
                for oy in 0..out {
                    let iy = (oy * s + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * out..(oy + 1) * out];
                    if iy < 0 || iy >= side {
                        line.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.in_side..(iy as usize + 1) * g.in_side];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * s + kx) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= side {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back, accumulating into `output`.
pub(crate) fn col2im<T: Scalar>(cols: &[T], channels: usize, g: ConvGeom, output: &mut [T]) {
    let (k, s, side, out) = (g.kernel, g.stride, g.in_side as isize, g.out_side);
    let positions = out * out;
    debug_assert_eq!(output.len(), channels * g.in_side * g.in_side);
    for c in 0..channels {
        let plane = &mut output[c * g.in_side * g.in_side..(c + 1) * g.in_side * g.in_side];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * positions..(row + 1) * positions];
                for oy in 0..out {
                    let iy = (oy * s + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= side {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.in_side..(iy as usize + 1) * g.in_side];
                    for ox in 0..out {
                        let ix = (ox * s + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < side {
                            dst[ix as usize] += src[oy * out + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Convolution. `weight` is `[cout, cin, k, k]`, input `cin × in_side²`,
/// output `cout × out_side²`.
pub(crate) fn conv_forward<T: Scalar>(
    input: &[T],
    weight: &[T],
    bias: &[T],
    cin: usize,
    cout: usize,
    g: ConvGeom,
) -> Vec<T> {
    let positions = g.out_side * g.out_side;
    let rows = cin * g.patch();
    let mut cols = vec![T::zero(); rows * positions];
    im2col(input, cin, g, &mut cols);
    let mut out = Vec::with_capacity(cout * positions);
    for &b in bias {
        out.extend(std::iter::repeat_n(b, positions));
    }
    T::gemm(cout, rows, positions, weight, (rows, 1), &cols, (positions, 1), &mut out, (positions, 1));
    out
}

/// Backward of [`conv_forward`]. Accumulates into `dweight`/`dbias` and
/// returns the input gradient when `need_input` is set.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<T: Scalar>(
    dout: &[T],
    input: &[T],
    weight: &[T],
    cin: usize,
    cout: usize,
    g: ConvGeom,
    dweight: &mut [T],
    dbias: &mut [T],
    need_input: bool,
) -> Option<Vec<T>> {
    let positions = g.out_side * g.out_side;
    let rows = cin * g.patch();
    let mut cols = vec![T::zero(); rows * positions];
    im2col(input, cin, g, &mut cols);
    // dW += dout · colsᵀ
    T::gemm(cout, positions, rows, dout, (positions, 1), &cols, (1, positions), dweight, (rows, 1));
    for (c, db) in dbias.iter_mut().enumerate() {
        *db += dout[c * positions..(c + 1) * positions].iter().copied().sum::<T>();
    }
    if !need_input {
        return None;
    }
    // dcols = Wᵀ · dout
    cols.iter_mut().for_each(|v| *v = T::zero());
    T::gemm(rows, cout, positions, weight, (1, rows), dout, (positions, 1), &mut cols, (positions, 1));
    let mut dx = vec![T::zero(); cin * g.in_side * g.in_side];
    col2im(&cols, cin, g, &mut dx);
    Some(dx)
}

/// Transposed convolution: the adjoint of a convolution with geometry `g`
/// mapping `cout × in_side²` to `cin × out_side²`. `weight` is
/// `[cin, cout, k, k]`; input is `cin × out_side²`, output `cout × in_side²`.
pub(crate) fn deconv_forward<T: Scalar>(
    input: &[T],
    weight: &[T],
    bias: &[T],
    cin: usize,
    cout: usize,
    g: ConvGeom,
) -> Vec<T> {
    let positions = g.out_side * g.out_side;
    let rows = cout * g.patch();
    let mut cols = vec![T::zero(); rows * positions];
    // cols = Wᵀ · x
    T::gemm(rows, cin, positions, weight, (1, rows), input, (positions, 1), &mut cols, (positions, 1));
    let plane = g.in_side * g.in_side;
    let mut out = Vec::with_capacity(cout * plane);
    for &b in bias {
        out.extend(std::iter::repeat_n(b, plane));
    }
    col2im(&cols, cout, g, &mut out);
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn deconv_backward<T: Scalar>(
    dout: &[T],
    input: &[T],
    weight: &[T],
    cin: usize,
    cout: usize,
    g: ConvGeom,
    dweight: &mut [T],
    dbias: &mut [T],
    need_input: bool,
) -> Option<Vec<T>> {
    let positions = g.out_side * g.out_side;
    let rows = cout * g.patch();
    let plane = g.in_side * g.in_side;
    let mut dcols = vec![T::zero(); rows * positions];
    im2col(dout, cout, g, &mut dcols);
    // dW += x · dcolsᵀ
    T::gemm(cin, positions, rows, input, (positions, 1), &dcols, (1, positions), dweight, (rows, 1));
    for (c, db) in dbias.iter_mut().enumerate() {
        *db += dout[c * plane..(c + 1) * plane].iter().copied().sum::<T>();
    }
    if !need_input {
        return None;
    }
    // dx = W · dcols
    let mut dx = vec![T::zero(); cin * positions];
    T::gemm(cin, rows, positions, weight, (rows, 1), &dcols, (positions, 1), &mut dx, (positions, 1));
    Some(dx)
}

/// Per-sample layer normalization over every channel and position, followed
/// by a per-channel affine map. Returns the normalized values (pre-affine)
/// and the inverse standard deviation for the backward pass.
pub(crate) fn norm_forward<T: Scalar>(
    x: &mut [T],
    scale: &[T],
    shift: &[T],
    eps: T,
) -> (Vec<T>, T) {
    let n = T::from_usize(x.len()).unwrap();
    let mean = x.iter().copied().sum::<T>() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    let inv_std = T::one() / (var + eps).sqrt();
    let plane = x.len() / scale.len();
    let mut xhat = Vec::with_capacity(x.len());
    for (c, chunk) in x.chunks_exact_mut(plane).enumerate() {
        for v in chunk.iter_mut() {
            let h = (*v - mean) * inv_std;
            xhat.push(h);
            *v = scale[c] * h + shift[c];
        }
    }
    (xhat, inv_std)
}

/// Backward of [`norm_forward`], in place on `dy`.
pub(crate) fn norm_backward<T: Scalar>(
    dy: &mut [T],
    xhat: &[T],
    inv_std: T,
    scale: &[T],
    dscale: &mut [T],
    dshift: &mut [T],
) {
    let plane = dy.len() / scale.len();
    let mut sum_dxhat = T::zero();
    let mut sum_dxhat_xhat = T::zero();
    for (c, (dchunk, hchunk)) in dy.chunks_exact_mut(plane).zip(xhat.chunks_exact(plane)).enumerate() {
        let mut ds = T::zero();
        let mut db = T::zero();
        for (d, &h) in dchunk.iter_mut().zip(hchunk) {
            ds += *d * h;
            db += *d;
            *d *= scale[c];
            sum_dxhat += *d;
            sum_dxhat_xhat += *d * h;
        }
        dscale[c] += ds;
        dshift[c] += db;
    }
    let n = T::from_usize(dy.len()).unwrap();
    for (d, &h) in dy.iter_mut().zip(xhat) {
        *d = inv_std * (*d - (sum_dxhat + h * sum_dxhat_xhat) / n);
    }
}

pub(crate) fn leaky_relu_in_place<T: Scalar>(x: &mut [T], slope: T) {
    for v in x.iter_mut() {
        if *v <= T::zero() {
            *v *= slope;
        }
    }
}

/// `d` is overwritten with the gradient w.r.t. the pre-activation. Uses the
/// activation output, whose sign matches the input's for a nonnegative slope.
pub(crate) fn leaky_relu_backward<T: Scalar>(d: &mut [T], out: &[T], slope: T) {
    for (g, &y) in d.iter_mut().zip(out) {
        if y <= T::zero() {
            *g *= slope;
        }
    }
}

pub(crate) fn sigmoid_in_place<T: Scalar>(x: &mut [T]) {
    for v in x.iter_mut() {
        *v = T::one() / (T::one() + (-*v).exp());
    }
}

pub(crate) fn sigmoid_backward<T: Scalar>(d: &mut [T], out: &[T]) {
    for (g, &y) in d.iter_mut().zip(out) {
        *g *= y * (T::one() - y);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop convolution.
    fn conv_naive(x: &[f64], w: &[f64], b: &[f64], cin: usize, cout: usize, g: ConvGeom) -> Vec<f64> {
        let (k, n, o) = (g.kernel, g.in_side as isize, g.out_side);
        let mut out = vec![0.0; cout * o * o];
        for co in 0..cout {
            for oy in 0..o {
                for ox in 0..o {
                    let mut acc = b[co];
                    for ci in 0..cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                                let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                if iy >= 0 && iy < n && ix >= 0 && ix < n {
                                    acc += w[((co * cin + ci) * k + ky) * k + kx]
                                        * x[(ci * g.in_side + iy as usize) * g.in_side + ix as usize];
                                }
                            }
                        }
                    }
                    out[(co * o + oy) * o + ox] = acc;
                }
            }
        }
        out
    }

    fn seq(n: usize, f: f64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64 + 1.0) * f).sin()).collect()
    }

    #[test]
    fn conv_matches_nested_loops() {
        for (k, s, side) in [(3, 1, 5), (4, 2, 6)] {
            let g = ConvGeom::new(k, s, 1, side);
            let (cin, cout) = (2, 3);
            let x = seq(cin * side * side, 0.7);
            let w = seq(cout * cin * k * k, 1.3);
            let b = seq(cout, 2.1);
            let fast = conv_forward(&x, &w, &b, cin, cout, g);
            let slow = conv_naive(&x, &w, &b, cin, cout, g);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stride_two_halves_and_deconv_doubles() {
        let g = ConvGeom::new(4, 2, 1, 8);
        assert_eq!(g.out_side, 4);
        let x = seq(3 * 16, 0.3);
        let w = seq(3 * 2 * 16, 0.9);
        let y = deconv_forward(&x, &w, &[0.0, 0.0], 3, 2, g);
        assert_eq!(y.len(), 2 * 64);
    }

    #[test]
    fn deconv_is_adjoint_of_conv() {
        // <conv(u), v> == <u, deconv(v)> with shared weights and zero bias.
        let g = ConvGeom::new(4, 2, 1, 6);
        let (c_big, c_small) = (2, 3);
        let u = seq(c_big * 36, 0.41);
        let v = seq(c_small * 9, 0.77);
        let w = seq(c_small * c_big * 16, 1.7); // conv view: [c_small, c_big, k, k]
        let cu = conv_forward(&u, &w, &vec![0.0; c_small], c_big, c_small, g);
        let dv = deconv_forward(&v, &w, &vec![0.0; c_big], c_small, c_big, g);
        let lhs: f64 = cu.iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(&dv).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn norm_output_is_standardized() {
        let mut x = seq(2 * 9, 0.5);
        let (xhat, _) = norm_forward(&mut x, &[1.0, 1.0], &[0.0, 0.0], 0.0);
        let mean: f64 = xhat.iter().sum::<f64>() / 18.0;
        let var: f64 = xhat.iter().map(|v| v * v).sum::<f64>() / 18.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
        assert_eq!(x, xhat);
    }
}
