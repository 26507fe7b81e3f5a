use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default encoder channel widths (seven blocks).
pub const DEFAULT_WIDTHS: [usize; 7] = [32, 64, 128, 256, 256, 128, 64];
/// Default encoder strides: five downsampling blocks followed by two at full resolution.
pub const DEFAULT_STRIDES: [usize; 7] = [2, 2, 2, 2, 2, 1, 1];
pub const DEFAULT_INPUT_SIDE: usize = 224;

/// Shape of the mirrored convolutional autoencoder.
///
/// Encoder block `i` is `conv(stride_i) → layer norm → leaky ReLU` taking
/// `widths[i-1]` channels (`input_channels` for the first block) to
/// `widths[i]`. The decoder replays the blocks in reverse with transposed
/// convolutions; its last block drops the normalization and ends in a sigmoid.
/// Stride-2 blocks use a 4×4 kernel, stride-1 blocks a 3×3 kernel, both with
/// padding 1, so every stride-2 block halves the side exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub input_side: usize,
    pub input_channels: usize,
    pub widths: Vec<usize>,
    pub strides: Vec<usize>,
    /// Negative slope of the hidden-layer leaky ReLU.
    #[serde(default = "default_slope")]
    pub leaky_slope: f64,
    #[serde(default = "default_eps")]
    pub norm_eps: f64,
}

fn default_slope() -> f64 {
    0.2
}

fn default_eps() -> f64 {
    1e-5
}

impl Default for ArchSpec {
    fn default() -> Self {
        Self::for_side(DEFAULT_INPUT_SIDE, 3)
    }
}

impl ArchSpec {
    pub fn new(
        input_side: usize,
        input_channels: usize,
        widths: Vec<usize>,
        strides: Vec<usize>,
    ) -> Result<Self> {
        let spec = Self {
            input_side,
            input_channels,
            widths,
            strides,
            leaky_slope: default_slope(),
            norm_eps: default_eps(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Default widths with as many of the five downsampling blocks as the
    /// side length supports; surplus blocks fall back to stride 1.
    pub fn for_side(input_side: usize, input_channels: usize) -> Self {
        Self::with_widths(input_side, input_channels, DEFAULT_WIDTHS.to_vec())
    }

    /// Same stride placement as [`ArchSpec::for_side`] with custom widths.
    pub fn with_widths(input_side: usize, input_channels: usize, widths: Vec<usize>) -> Self {
        let mut strides = vec![1; widths.len()];
        let mut side = input_side;
        let max_down = widths.len().min(DEFAULT_STRIDES.iter().filter(|&&s| s == 2).count());
        for s in strides.iter_mut().take(max_down) {
            if side >= 2 && side.is_multiple_of(2) {
                *s = 2;
                side /= 2;
            } else {
                break;
            }
        }
        Self {
            input_side,
            input_channels,
            widths,
            strides,
            leaky_slope: default_slope(),
            norm_eps: default_eps(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() {
            return Err(Error::Config("architecture needs at least one block".into()));
        }
        if self.widths.len() != self.strides.len() {
            return Err(Error::Config(format!(
                "{} widths but {} strides",
                self.widths.len(),
                self.strides.len()
            )));
        }
        if self.input_channels == 0 || self.widths.contains(&0) {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if let Some(s) = self.strides.iter().find(|&&s| s != 1 && s != 2) {
            return Err(Error::Config(format!("unsupported stride {s} (use 1 or 2)")));
        }
        if !(self.leaky_slope.is_finite() && self.norm_eps > 0.0) {
            return Err(Error::Config("bad activation slope or norm epsilon".into()));
        }
        self.latent_side()?;
        Ok(())
    }

    pub fn blocks(&self) -> usize {
        self.widths.len()
    }

    pub fn kernel(stride: usize) -> usize {
        if stride == 2 {
            4
        } else {
            3
        }
    }

    /// Spatial side after each encoder block, input side first.
    pub fn sides(&self) -> Result<Vec<usize>> {
        let mut sides = vec![self.input_side];
        let mut side = self.input_side;
        for (i, &s) in self.strides.iter().enumerate() {
            if side == 0 || !side.is_multiple_of(s) {
                return Err(Error::shape(format!(
                    "input side {} is not divisible along the downsampling chain (block {} sees side {})",
                    self.input_side,
                    i + 1,
                    side
                )));
            }
            side /= s;
            sides.push(side);
        }
        Ok(sides)
    }

    pub fn latent_side(&self) -> Result<usize> {
        Ok(*self.sides()?.last().expect("non-empty"))
    }

    /// Latent shape as `(H, W, C)`.
    pub fn latent_shape(&self) -> Result<(usize, usize, usize)> {
        let side = self.latent_side()?;
        Ok((side, side, *self.widths.last().expect("non-empty")))
    }

    /// Channels entering encoder block `i`.
    pub(crate) fn in_channels(&self, i: usize) -> usize {
        if i == 0 {
            self.input_channels
        } else {
            self.widths[i - 1]
        }
    }
}
