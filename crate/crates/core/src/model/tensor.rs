use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense three-dimensional feature map stored channel-major (`C × H × W`).
///
/// Shapes are reported as `(H, W, C)` to match image conventions; the
/// channel-major buffer is what the convolution kernels consume.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

/// Network input: an RGB (or single-channel) image scaled to `[0, 1]`.
pub type ImageTensor<T> = Tensor3<T>;
/// Encoder output.
pub type LatentTensor<T> = Tensor3<T>;

impl<T: Scalar> Tensor3<T> {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    /// Builds from a channel-major buffer.
    pub fn from_chw(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(format!(
                "buffer of {} values cannot hold {}x{}x{}",
                data.len(),
                height,
                width,
                channels
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// Builds from an interleaved (`H × W × C`) buffer.
    pub fn from_hwc(height: usize, width: usize, channels: usize, hwc: &[T]) -> Result<Self> {
        if hwc.len() != channels * height * width {
            return Err(Error::shape(format!(
                "buffer of {} values cannot hold {}x{}x{}",
                hwc.len(),
                height,
                width,
                channels
            )));
        }
        let plane = height * width;
        let mut data = vec![T::zero(); hwc.len()];
        for (p, px) in hwc.chunks_exact(channels).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                data[c * plane + p] = v;
            }
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// `(H, W, C)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Channel-major view.
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn to_hwc(&self) -> Vec<T> {
        let plane = self.height * self.width;
        let mut out = Vec::with_capacity(self.data.len());
        for p in 0..plane {
            for c in 0..self.channels {
                out.push(self.data[c * plane + p]);
            }
        }
        out
    }

    /// Checks the image contract: every value finite and inside `[0, 1]`.
    pub fn validate_image(&self) -> Result<()> {
        for (i, &v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("image element {i} is {v}")));
            }
            if v < T::zero() || v > T::one() {
                return Err(Error::invalid(format!(
                    "image element {i} = {v} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor3<U> {
        Tensor3 {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}
