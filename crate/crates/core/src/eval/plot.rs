//! Minimal line plots rendered straight into PNG files.

use std::path::Path;

use image::{Rgb, RgbImage};

use super::metrics::RocPoint;
use super::score::GapRow;
use crate::error::{Error, Result};

const WIDTH: u32 = 480;
const HEIGHT: u32 = 360;
const MARGIN: u32 = 30;

const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
const GRID: Rgb<u8> = Rgb([220, 220, 220]);
pub const BLUE: Rgb<u8> = Rgb([31, 119, 180]);
pub const ORANGE: Rgb<u8> = Rgb([255, 127, 14]);
pub const GREEN: Rgb<u8> = Rgb([44, 160, 44]);

struct Canvas {
    img: RgbImage,
    x_range: (f64, f64),
    y_range: (f64, f64),
}

impl Canvas {
    fn new(x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
        let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        for k in 1..4 {
            let gx = x0 + (x1 - x0) * k / 4;
            let gy = y0 + (y1 - y0) * k / 4;
            for y in y0..=y1 {
                img.put_pixel(gx, y, GRID);
            }
            for x in x0..=x1 {
                img.put_pixel(x, gy, GRID);
            }
        }
        for x in x0..=x1 {
            img.put_pixel(x, y0, BLACK);
            img.put_pixel(x, y1, BLACK);
        }
        for y in y0..=y1 {
            img.put_pixel(x0, y, BLACK);
            img.put_pixel(x1, y, BLACK);
        }
        Self { img, x_range, y_range }
    }

    fn to_px(&self, x: f64, y: f64) -> (f64, f64) {
        let span = |r: (f64, f64)| if r.1 > r.0 { r.1 - r.0 } else { 1.0 };
        let w = (WIDTH - 2 * MARGIN) as f64;
        let h = (HEIGHT - 2 * MARGIN) as f64;
        let px = MARGIN as f64 + (x - self.x_range.0) / span(self.x_range) * w;
        let py = (HEIGHT - MARGIN) as f64 - (y - self.y_range.0) / span(self.y_range) * h;
        (px, py)
    }

    fn line(&mut self, a: (f64, f64), b: (f64, f64), color: Rgb<u8>) {
        let (pa, pb) = (self.to_px(a.0, a.1), self.to_px(b.0, b.1));
        let steps = ((pb.0 - pa.0).abs().max((pb.1 - pa.1).abs()).ceil() as usize).max(1);
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            let x = pa.0 + (pb.0 - pa.0) * t;
            let y = pa.1 + (pb.1 - pa.1) * t;
            for (dx, dy) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)] {
                let (xi, yi) = ((x + dx).round(), (y + dy).round());
                if xi >= 0.0 && yi >= 0.0 && (xi as u32) < WIDTH && (yi as u32) < HEIGHT {
                    self.img.put_pixel(xi as u32, yi as u32, color);
                }
            }
        }
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: Rgb<u8>) {
        for w in pts.windows(2) {
            self.line(w[0], w[1], color);
        }
        if pts.len() == 1 {
            self.line(pts[0], pts[0], color);
        }
    }

    fn save(&self, path: &Path) -> Result<()> {
        self.img.save(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-12);
    (lo - pad, hi + pad)
}

/// ROC on the unit square: APCER on x, `1 − BPCER` on y, chance diagonal in grey.
pub fn plot_roc(points: &[RocPoint], path: &Path) -> Result<()> {
    let mut c = Canvas::new((0.0, 1.0), (0.0, 1.0));
    c.line((0.0, 0.0), (1.0, 1.0), Rgb([160, 160, 160]));
    let pts: Vec<(f64, f64)> = points.iter().map(|p| (p.apcer, p.tpr)).collect();
    c.polyline(&pts, BLUE);
    c.save(path)
}

/// Per-epoch class means (bona fide blue, attack orange) and their gap (green).
pub fn plot_gap_curve(rows: &[GapRow], path: &Path) -> Result<()> {
    let xr = range(rows.iter().map(|r| r.epoch as f64));
    let yr = range(
        rows.iter()
            .flat_map(|r| [r.bonafide_mean, r.attack_mean, r.gap, 0.0]),
    );
    let mut c = Canvas::new(xr, yr);
    let series = |f: fn(&GapRow) -> f64| -> Vec<(f64, f64)> {
        rows.iter().map(|r| (r.epoch as f64, f(r))).collect()
    };
    c.polyline(&series(|r| r.bonafide_mean), BLUE);
    c.polyline(&series(|r| r.attack_mean), ORANGE);
    c.polyline(&series(|r| r.gap), GREEN);
    c.save(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_decodable_pngs() {
        let dir = tempfile::tempdir().unwrap();
        let roc = vec![
            RocPoint { threshold: 0.0, apcer: 1.0, tpr: 1.0 },
            RocPoint { threshold: 0.5, apcer: 0.2, tpr: 0.9 },
            RocPoint { threshold: 1.0, apcer: 0.0, tpr: 0.0 },
        ];
        let p = dir.path().join("roc.png");
        plot_roc(&roc, &p).unwrap();
        let img = image::open(&p).unwrap().to_rgb8();
        assert_eq!(img.dimensions(), (WIDTH, HEIGHT));
        assert!(img.pixels().any(|px| *px == BLUE));

        let rows = vec![
            GapRow { epoch: 0, bonafide_mean: 0.02, attack_mean: 0.019, gap: 0.001 },
            GapRow { epoch: 1, bonafide_mean: 0.015, attack_mean: 0.012, gap: 0.003 },
        ];
        let p = dir.path().join("gap.png");
        plot_gap_curve(&rows, &p).unwrap();
        let img = image::open(&p).unwrap().to_rgb8();
        assert!(img.pixels().any(|px| *px == GREEN));
    }
}
