use std::path::Path;

use image::{DynamicImage, RgbImage};

use crate::error::{Error, Result};
use crate::model::ImageTensor;
use crate::scalar::Scalar;

/// Bilinear resize of an interleaved `side_in_h × side_in_w × channels`
/// buffer to `out_h × out_w`, sampling at pixel centers with edge clamping.
/// Resizing to the same size returns the input unchanged.
pub fn bilinear_resize(
    src: &[f64],
    in_h: usize,
    in_w: usize,
    channels: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f64> {
    if in_h == out_h && in_w == out_w {
        return src.to_vec();
    }
    let axis = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|o| {
                let pos = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let i0 = pos.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, pos - i0 as f64)
            })
            .collect()
    };
    let ys = axis(in_h, out_h);
    let xs = axis(in_w, out_w);
    let mut out = Vec::with_capacity(out_h * out_w * channels);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..channels {
                let at = |y: usize, x: usize| src[(y * in_w + x) * channels + c];
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    out
}

/// Resizes an 8-bit RGB image to `side × side` and scales to `[0, 1]`.
pub fn preprocess_rgb<T: Scalar>(img: &RgbImage, side: usize) -> Result<ImageTensor<T>> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::invalid("empty image"));
    }
    let raw: Vec<f64> = img.as_raw().iter().map(|&v| v as f64).collect();
    let resized = bilinear_resize(&raw, h, w, 3, side, side);
    let scaled: Vec<T> = resized
        .into_iter()
        .map(|v| T::lit((v / 255.0).clamp(0.0, 1.0)))
        .collect();
    ImageTensor::from_hwc(side, side, 3, &scaled)
}

/// Converts a decoded image to 8-bit RGB; 16-bit and float images are refused.
pub fn to_rgb8(img: DynamicImage) -> std::result::Result<RgbImage, String> {
    match img {
        DynamicImage::ImageRgb8(rgb) => Ok(rgb),
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageRgba8(_) => {
            Ok(img.to_rgb8())
        }
        other => Err(format!(
            "unsupported pixel format {:?} (8-bit images only)",
            other.color()
        )),
    }
}

/// Decodes, converts and resizes one image file.
pub fn preprocess_file<T: Scalar>(path: &Path, side: usize) -> Result<ImageTensor<T>> {
    let img_err = |detail: String| Error::Image {
        path: path.to_path_buf(),
        detail,
    };
    let reader = image::ImageReader::open(path)
        .map_err(|e| img_err(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| img_err(e.to_string()))?;
    let decoded = reader.decode().map_err(|e| img_err(e.to_string()))?;
    let rgb = to_rgb8(decoded).map_err(img_err)?;
    preprocess_rgb(&rgb, side)
}
