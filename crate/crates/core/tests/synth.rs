use std::collections::HashMap;
use std::path::Path;

use image::RgbImage;

use spad_core::data::synth::{SYNTH_SIDE};
use spad_core::data::{synth_generate, EvalLabel, Manifest, SynthConfig};

fn open(path: &Path) -> RgbImage {
    image::open(path).unwrap().to_rgb8()
}

/// Mean absolute forward-difference gradient over all pixels and channels.
fn gradient_magnitude(img: &RgbImage) -> f64 {
    let (w, h) = img.dimensions();
    let mut acc = 0.0;
    let mut n = 0usize;
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let p = img.get_pixel(x, y);
            let right = img.get_pixel(x + 1, y);
            let down = img.get_pixel(x, y + 1);
            for c in 0..3 {
                let gx = right[c] as f64 - p[c] as f64;
                let gy = down[c] as f64 - p[c] as f64;
                acc += (gx * gx + gy * gy).sqrt();
                n += 1;
            }
        }
    }
    acc / n as f64
}

fn paths(m: &Manifest) -> HashMap<String, std::path::PathBuf> {
    m.records.iter().map(|r| (r.id.clone(), r.path.clone())).collect()
}

#[test]
fn blending_attenuates_edges() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        n_bonafide: 60,
        n_attacks: 100,
        seed: 4,
        ..SynthConfig::default()
    };
    let out = synth_generate(&cfg, dir.path()).unwrap();
    assert_eq!(out.attacks.len(), 100);
    let bf_dir = dir.path().join("bonafide");
    let atk_dir = dir.path().join("attack");
    let mut attack_mean = 0.0;
    let mut source_mean = 0.0;
    for a in &out.attacks {
        assert_ne!(a.source_a, a.source_b);
        assert!((0.3..=0.7).contains(&a.alpha));
        attack_mean += gradient_magnitude(&open(&atk_dir.join(format!("{}.png", a.id))));
        source_mean += (gradient_magnitude(&open(&bf_dir.join(format!("{}.png", a.source_a))))
            + gradient_magnitude(&open(&bf_dir.join(format!("{}.png", a.source_b)))))
            / 2.0;
    }
    attack_mean /= 100.0;
    source_mean /= 100.0;
    assert!(attack_mean < source_mean, "attacks {attack_mean} vs sources {source_mean}");
}

#[test]
fn fixed_half_blend_is_the_pixel_average() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        n_bonafide: 2,
        n_attacks: 1,
        seed: 2,
        alpha_min: 0.5,
        alpha_max: 0.5,
        smooth: false,
        ..SynthConfig::default()
    };
    let out = synth_generate(&cfg, dir.path()).unwrap();
    let a = &out.attacks[0];
    assert_eq!(a.alpha, 0.5);
    let atk = open(&dir.path().join("attack").join(format!("{}.png", a.id)));
    let x = open(&dir.path().join("bonafide").join(format!("{}.png", a.source_a)));
    let y = open(&dir.path().join("bonafide").join(format!("{}.png", a.source_b)));
    assert_eq!(atk.dimensions(), (SYNTH_SIDE, SYNTH_SIDE));
    for ((m, p), q) in atk.as_raw().iter().zip(x.as_raw()).zip(y.as_raw()) {
        let avg = (*p as f64 + *q as f64) / 2.0;
        // Stored as 8-bit, so half-integers round.
        assert!((*m as f64 - avg).abs() <= 0.5);
    }
}

#[test]
fn manifests_split_labels_and_are_seeded() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        n_bonafide: 20,
        n_attacks: 10,
        seed: 3,
        ..SynthConfig::default()
    };
    let o1 = synth_generate(&cfg, d1.path()).unwrap();
    let o2 = synth_generate(&cfg, d2.path()).unwrap();

    assert!(o1.train.records.iter().all(|r| r.eval_label.is_none()));
    assert!(o1.contaminant.records.iter().all(|r| r.eval_label.is_none()));
    assert!(o1.test.records.iter().all(|r| r.eval_label.is_some()));
    assert_eq!(o1.train.len(), 14);
    assert_eq!(o1.contaminant.len(), 7);
    assert_eq!(o1.test.count_label(EvalLabel::BonaFide), 6);
    assert_eq!(o1.test.count_label(EvalLabel::Attack), 3);

    // Same seed, same pixels.
    let p2 = paths(&o2.test);
    for r in &o1.test.records {
        assert_eq!(open(&r.path), open(&p2[&r.id]));
    }

    // Written manifests load back to the same records.
    let loaded = Manifest::load(&d1.path().join("test.csv")).unwrap();
    assert_eq!(loaded.records.len(), o1.test.len());
    for (a, b) in loaded.records.iter().zip(&o1.test.records) {
        assert_eq!((&a.id, &a.eval_label), (&b.id, &b.eval_label));
        assert_eq!(a.path.canonicalize().unwrap(), b.path.canonicalize().unwrap());
    }
}

#[test]
fn test_attacks_only_use_test_identities() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        n_bonafide: 30,
        n_attacks: 20,
        seed: 5,
        ..SynthConfig::default()
    };
    let out = synth_generate(&cfg, dir.path()).unwrap();
    let train_ids: Vec<&str> = out.train.records.iter().map(|r| r.id.as_str()).collect();
    for a in out.attacks.iter().filter(|a| a.split == "test") {
        assert!(!train_ids.contains(&a.source_a.as_str()));
        assert!(!train_ids.contains(&a.source_b.as_str()));
    }
    for a in out.attacks.iter().filter(|a| a.split == "train") {
        assert!(train_ids.contains(&a.source_a.as_str()));
    }
}
