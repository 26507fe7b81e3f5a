//! Procedural toy dataset: sharp-edged "bona fide" images and pixel-blend
//! "attacks" made from pairs of them.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::manifest::{EvalLabel, Manifest, SampleRecord};
use crate::error::{Error, Result};

pub const SYNTH_SIDE: u32 = 64;
pub const BONAFIDE_TAG: &str = "synth-bonafide";
pub const ATTACK_TAG: &str = "synth-attack";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SynthConfig {
    pub n_bonafide: usize,
    pub n_attacks: usize,
    pub seed: u64,
    /// Share of bona fide images (and of attacks) assigned to training.
    pub train_fraction: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Apply a 3×3 binomial blur to each blend.
    pub smooth: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_bonafide: 500,
            n_attacks: 250,
            seed: 0,
            train_fraction: 0.7,
            alpha_min: 0.3,
            alpha_max: 0.7,
            smooth: true,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_bonafide < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 bona fide images, got {}",
                self.n_bonafide
            )));
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return Err(Error::invalid("train_fraction must lie in [0, 1]"));
        }
        if !(0.0 <= self.alpha_min && self.alpha_min <= self.alpha_max && self.alpha_max <= 1.0) {
            return Err(Error::invalid("alpha range must satisfy 0 <= min <= max <= 1"));
        }
        Ok(())
    }
}

/// How one attack was made.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttackProvenance {
    pub id: String,
    pub source_a: String,
    pub source_b: String,
    pub alpha: f64,
    pub split: &'static str,
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    /// Training-side bona fide images, labels stripped.
    pub train: Manifest,
    /// Training-side attacks, labels stripped; the pool contamination draws from.
    pub contaminant: Manifest,
    /// Held-out bona fide images and attacks, labelled.
    pub test: Manifest,
    pub attacks: Vec<AttackProvenance>,
}

fn random_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0)]
}

fn inside_polygon(px: f64, py: f64, poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn segment_distance(px: f64, py: f64, (ax, ay): (f64, f64), (bx, by): (f64, f64)) -> f64 {
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (ax + t * dx, ay + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

/// Renders one bona fide image: a palette of random colours, hard-edged
/// polygons, thick lines and striped or checkered patches.
pub fn render_bonafide(rng: &mut ChaCha8Rng, side: u32) -> RgbImage {
    let n = side as usize;
    let s = side as f64;
    let palette: Vec<[f64; 3]> = (0..5).map(|_| random_color(rng)).collect();
    let mut canvas = vec![palette[0]; n * n];

    for _ in 0..rng.gen_range(2..=3) {
        let (x0, y0) = (rng.gen_range(0.0..s * 0.7), rng.gen_range(0.0..s * 0.7));
        let (w, h) = (rng.gen_range(s * 0.2..s * 0.5), rng.gen_range(s * 0.2..s * 0.5));
        let period = rng.gen_range(2..=4);
        let checker = rng.gen_bool(0.5);
        let (c1, c2) = (*palette.choose(rng).unwrap(), random_color(rng));
        for y in 0..n {
            for x in 0..n {
                let (fx, fy) = (x as f64, y as f64);
                if fx >= x0 && fx < x0 + w && fy >= y0 && fy < y0 + h {
                    let band = if checker {
                        (x / period + y / period) % 2
                    } else {
                        (x / period) % 2
                    };
                    canvas[y * n + x] = if band == 0 { c1 } else { c2 };
                }
            }
        }
    }

    for _ in 0..rng.gen_range(3..=6) {
        let (cx, cy) = (rng.gen_range(0.0..s), rng.gen_range(0.0..s));
        let radius = rng.gen_range(s * 0.08..s * 0.3);
        let k = rng.gen_range(3..=6);
        let start = rng.gen_range(0.0..std::f64::consts::TAU);
        let poly: Vec<(f64, f64)> = (0..k)
            .map(|i| {
                let a = start + std::f64::consts::TAU * i as f64 / k as f64;
                let r = radius * rng.gen_range(0.6..1.0);
                (cx + r * a.cos(), cy + r * a.sin())
            })
            .collect();
        let color = *palette.choose(rng).unwrap();
        for y in 0..n {
            for x in 0..n {
                if inside_polygon(x as f64 + 0.5, y as f64 + 0.5, &poly) {
                    canvas[y * n + x] = color;
                }
            }
        }
    }

    for _ in 0..rng.gen_range(2..=4) {
        let a = (rng.gen_range(0.0..s), rng.gen_range(0.0..s));
        let b = (rng.gen_range(0.0..s), rng.gen_range(0.0..s));
        let half = rng.gen_range(0.5..1.6);
        let color = *palette.choose(rng).unwrap();
        for y in 0..n {
            for x in 0..n {
                if segment_distance(x as f64 + 0.5, y as f64 + 0.5, a, b) <= half {
                    canvas[y * n + x] = color;
                }
            }
        }
    }

    RgbImage::from_fn(side, side, |x, y| {
        let c = canvas[y as usize * n + x as usize];
        Rgb([c[0].round() as u8, c[1].round() as u8, c[2].round() as u8])
    })
}

/// `α·A + (1−α)·B` per channel, in `[0, 255]` without rounding.
pub fn blend(a: &RgbImage, b: &RgbImage, alpha: f64) -> Result<Vec<f64>> {
    if a.dimensions() != b.dimensions() {
        return Err(Error::shape(format!(
            "cannot blend {:?} with {:?}",
            a.dimensions(),
            b.dimensions()
        )));
    }
    Ok(a.as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(&x, &y)| alpha * x as f64 + (1.0 - alpha) * y as f64)
        .collect())
}

/// 3×3 binomial blur (`[1 2 1]ᵀ[1 2 1]/16`) with edge clamping on an
/// interleaved RGB float buffer.
pub fn smooth3(buf: &[f64], width: usize, height: usize) -> Vec<f64> {
    let k = [1.0, 2.0, 1.0];
    let mut out = vec![0.0; buf.len()];
    for y in 0..height {
        for x in 0..width {
            for c in 0..3 {
                let mut acc = 0.0;
                for (dy, wy) in k.iter().enumerate() {
                    for (dx, wx) in k.iter().enumerate() {
                        let yy = (y + dy).saturating_sub(1).min(height - 1);
                        let xx = (x + dx).saturating_sub(1).min(width - 1);
                        acc += wy * wx * buf[(yy * width + xx) * 3 + c];
                    }
                }
                out[(y * width + x) * 3 + c] = acc / 16.0;
            }
        }
    }
    out
}

pub fn quantize(buf: &[f64], width: u32, height: u32) -> RgbImage {
    let raw: Vec<u8> = buf.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    RgbImage::from_raw(width, height, raw).expect("buffer sized for image")
}

/// Builds one attack from two distinct sources.
pub fn make_attack(a: &RgbImage, b: &RgbImage, alpha: f64, smooth: bool) -> Result<RgbImage> {
    let (w, h) = a.dimensions();
    let mut mixed = blend(a, b, alpha)?;
    if smooth {
        mixed = smooth3(&mixed, w as usize, h as usize);
    }
    Ok(quantize(&mixed, w, h))
}

/// Picks two distinct indices from `pool`.
fn distinct_pair(rng: &mut ChaCha8Rng, pool: &[usize]) -> (usize, usize) {
    let picked: Vec<&usize> = pool.choose_multiple(rng, 2).collect();
    (*picked[0], *picked[1])
}

fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
}

/// Renders the dataset into `out_dir` and writes `train.csv`,
/// `contaminant.csv` and `test.csv` next to the images.
pub fn synth_generate(config: &SynthConfig, out_dir: &Path) -> Result<SynthOutput> {
    config.validate()?;
    let mkdir = |p: PathBuf| -> Result<PathBuf> {
        std::fs::create_dir_all(&p).map_err(|e| Error::io(format!("creating {}", p.display()), e))?;
        Ok(p)
    };
    let bf_dir = mkdir(out_dir.join("bonafide"))?;
    let atk_dir = mkdir(out_dir.join("attack"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bonafide: Vec<RgbImage> = (0..config.n_bonafide)
        .map(|_| render_bonafide(&mut rng, SYNTH_SIDE))
        .collect();
    let bf_ids: Vec<String> = (0..config.n_bonafide).map(|i| format!("bf_{i:05}")).collect();

    let n_train_bf = (config.n_bonafide as f64 * config.train_fraction).round() as usize;
    let n_train_atk = (config.n_attacks as f64 * config.train_fraction).round() as usize;
    let all: Vec<usize> = (0..config.n_bonafide).collect();
    let train_pool: Vec<usize> = if n_train_bf >= 2 { all[..n_train_bf].to_vec() } else { all.clone() };
    let test_pool: Vec<usize> = if config.n_bonafide - n_train_bf >= 2 {
        all[n_train_bf..].to_vec()
    } else {
        all.clone()
    };

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, img) in bonafide.iter().enumerate() {
        let path = bf_dir.join(format!("{}.png", bf_ids[i]));
        save_png(img, &path)?;
        let is_train = i < n_train_bf;
        let record = SampleRecord {
            id: bf_ids[i].clone(),
            path,
            eval_label: if is_train { None } else { Some(EvalLabel::BonaFide) },
            source_tag: BONAFIDE_TAG.to_string(),
        };
        if is_train {
            train.push(record);
        } else {
            test.push(record);
        }
    }

    let mut contaminant = Vec::new();
    let mut provenance = Vec::new();
    for k in 0..config.n_attacks {
        let is_train = k < n_train_atk;
        let pool = if is_train { &train_pool } else { &test_pool };
        let (a, b) = distinct_pair(&mut rng, pool);
        let alpha = if config.alpha_min == config.alpha_max {
            config.alpha_min
        } else {
            rng.gen_range(config.alpha_min..config.alpha_max)
        };
        let img = make_attack(&bonafide[a], &bonafide[b], alpha, config.smooth)?;
        let id = format!("atk_{k:05}");
        let path = atk_dir.join(format!("{id}.png"));
        save_png(&img, &path)?;
        provenance.push(AttackProvenance {
            id: id.clone(),
            source_a: bf_ids[a].clone(),
            source_b: bf_ids[b].clone(),
            alpha,
            split: if is_train { "train" } else { "test" },
        });
        let record = SampleRecord {
            id,
            path,
            eval_label: if is_train { None } else { Some(EvalLabel::Attack) },
            source_tag: ATTACK_TAG.to_string(),
        };
        if is_train {
            contaminant.push(record);
        } else {
            test.push(record);
        }
    }

    let out = SynthOutput {
        train: Manifest::new(train)?,
        contaminant: Manifest::new(contaminant)?,
        test: Manifest::new(test)?,
        attacks: provenance,
    };
    out.train.save(&out_dir.join("train.csv"))?;
    out.contaminant.save(&out_dir.join("contaminant.csv"))?;
    out.test.save(&out_dir.join("test.csv"))?;
    Ok(out)
}
