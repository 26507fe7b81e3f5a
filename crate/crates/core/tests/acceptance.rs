//! Acceptance suite. Each test prints one `PASS`/`FAIL` line straight to
//! stdout (bypassing the test harness capture) and then asserts.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spad_core::data::{
    load_training_set, mix_datasets, synth_generate, EvalLabel, Manifest, SynthConfig, TrainingSet,
};
use spad_core::eval::{
    apcer_bpcer_at, compute_eer, gap_row, roc_auc, roc_points, score_manifest, ScoreSet,
};
use spad_core::model::weighted_batch_objective;
use spad_core::spl::{compute_lambda, compute_weights};
use spad_core::trainer::{fit, NoopObserver, TrainConfig, TrainLog};
use spad_core::{ArchSpec, Cae, ImageTensor, Scalar};

fn report(id: u32, name: &str, ok: bool, elapsed: Duration, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "acceptance criterion {id} [{name}]: {verdict} ({:.2}s) {detail}",
        elapsed.as_secs_f64()
    );
}

fn random_images<T: Scalar>(rng: &mut ChaCha8Rng, n: usize, side: usize, channels: usize) -> Vec<ImageTensor<T>> {
    (0..n)
        .map(|_| {
            let data = (0..side * side * channels).map(|_| T::lit(rng.gen::<f64>())).collect();
            ImageTensor::from_chw(side, side, channels, data).unwrap()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// 1. weight rule

fn weight_oracle(l: f64, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if l <= lambda {
        0.0
    } else {
        (1.0 - lambda / l).clamp(0.0, 1.0)
    }
}

#[test]
fn criterion_1_weight_rule() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut failures = 0usize;
    let mut kinds = [0usize; 5]; // L<λ, L=λ, λ<0, λ=0, L>λ>0
    for i in 0..10_000 {
        let (l, lambda) = match i % 5 {
            0 => {
                let lambda = rng.gen_range(0.01..5.0);
                (rng.gen_range(0.0..lambda), lambda)
            }
            1 => {
                let v = rng.gen_range(0.0..5.0);
                (v, v)
            }
            2 => (rng.gen_range(0.0..5.0), -rng.gen_range(1e-6..5.0)),
            3 => (if i % 10 == 3 { 0.0 } else { rng.gen_range(0.0..5.0) }, 0.0),
            _ => {
                let lambda = rng.gen_range(1e-3..5.0);
                (lambda + rng.gen_range(1e-9..5.0), lambda)
            }
        };
        kinds[i % 5] += 1;
        let v = compute_weights(&[l], lambda).unwrap()[0];
        if v != weight_oracle(l, lambda) || !(0.0..=1.0).contains(&v) {
            failures += 1;
        }
        // Non-increasing in λ for fixed L, non-decreasing in L for fixed λ.
        let lambda2 = lambda + rng.gen_range(0.0..1.0);
        let l2 = l + rng.gen_range(0.0..1.0);
        let w = |l: f64, lam: f64| compute_weights(&[l], lam).unwrap()[0];
        if w(l, lambda2) > v || w(l2, lambda) < v {
            failures += 1;
        }
    }
    // Batch call agrees with the scalar rule element-wise.
    let losses: Vec<f64> = (0..1000).map(|_| rng.gen_range(0.0..2.0)).collect();
    let batch = compute_weights(&losses, 0.7).unwrap();
    failures += losses
        .iter()
        .zip(&batch)
        .filter(|(&l, &v)| v != weight_oracle(l, 0.7))
        .count();
    let elapsed = start.elapsed();
    let ok = failures == 0 && elapsed < Duration::from_secs(1);
    report(1, "SPL weight rule", ok, elapsed, &format!("mismatches={failures} cases={kinds:?}"));
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 2. threshold schedule

#[test]
fn criterion_2_lambda_schedule() {
    let start = Instant::now();
    let at = |s: u64| compute_lambda(10.0f64, 2.0, s, 4.0, 5e-3);
    let mut ok = at(0) == 2.0 && at(600) == 8.0 && at(1000) == 8.0;
    let mut prev = f64::NEG_INFINITY;
    for s in 0..2000 {
        let l = at(s);
        ok &= l >= prev;
        prev = l;
    }
    report(
        2,
        "lambda schedule",
        ok,
        start.elapsed(),
        &format!("λ(0)={} λ(600)={} λ(1000)={}", at(0), at(600), at(1000)),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 3. EER vs exhaustive sweep

struct OracleEer {
    eer: f64,
    apcer: f64,
    bpcer: f64,
}

/// Tries every distinct score and one value above the maximum as threshold,
/// counting errors directly; picks the lowest threshold minimising the
/// (exact, integer) rate difference.
fn eer_oracle(bf: &[f64], atk: &[f64]) -> OracleEer {
    let mut candidates: Vec<f64> = bf.iter().chain(atk).copied().collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();
    candidates.push(candidates.last().unwrap() + 1.0);
    let (na, nb) = (atk.len() as i64, bf.len() as i64);
    let mut best: Option<(i64, i64, i64)> = None;
    for &t in &candidates {
        let a = atk.iter().filter(|&&s| s >= t).count() as i64;
        let b = bf.iter().filter(|&&s| s < t).count() as i64;
        let d = (a * nb - b * na).abs();
        if best.is_none_or(|(bd, _, _)| d < bd) {
            best = Some((d, a, b));
        }
    }
    let (_, a, b) = best.unwrap();
    let apcer = a as f64 / na as f64;
    let bpcer = b as f64 / nb as f64;
    OracleEer {
        eer: (apcer + bpcer) / 2.0,
        apcer,
        bpcer,
    }
}

/// Class scores with ties: values are quantised to a random grid.
fn tied_scores(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let nb = rng.gen_range(5..=500);
    let na = rng.gen_range(5..=500);
    let levels = [50.0, 500.0, 5000.0][rng.gen_range(0..3)];
    let shift = rng.gen_range(0.0..0.6);
    let q = |v: f64| (v * levels).round() / levels;
    let bf = (0..nb).map(|_| q(rng.gen::<f64>() + shift)).collect();
    let atk = (0..na).map(|_| q(rng.gen::<f64>())).collect();
    (bf, atk)
}

#[test]
fn criterion_3_eer_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0usize;
    let mut bound_violations = 0usize;
    let mut tied_sets = 0usize;
    let mut cross_tied_sets = 0usize;
    let mut violations_without_cross_ties = 0usize;
    for _ in 0..1000 {
        let (bf, atk) = tied_scores(&mut rng);
        let mut all: Vec<f64> = bf.iter().chain(&atk).copied().collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        all.dedup();
        if all.len() < bf.len() + atk.len() {
            tied_sets += 1;
        }
        let cross_tied = bf.iter().any(|b| atk.contains(b));
        cross_tied_sets += cross_tied as usize;
        let set = ScoreSet::from_classes(&bf, &atk).unwrap();
        let got = compute_eer(&set).unwrap();
        let want = eer_oracle(&bf, &atk);
        let (a_t, b_t) = apcer_bpcer_at(&set, got.threshold).unwrap();
        if got.eer != want.eer || got.apcer != want.apcer || got.bpcer != want.bpcer || (a_t, b_t) != (got.apcer, got.bpcer)
        {
            mismatches += 1;
        }
        let bound = 1.0 / bf.len().min(atk.len()) as f64;
        if (a_t - b_t).abs() > bound + 1e-15 {
            bound_violations += 1;
            if !cross_tied {
                violations_without_cross_ties += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = mismatches == 0 && bound_violations == 0 && elapsed < Duration::from_secs(30);
    report(
        3,
        "EER oracle equivalence",
        ok,
        elapsed,
        &format!(
            "mismatches={mismatches} bound_violations={bound_violations} \
             (sets_with_ties={tied_sets}/1000, with_bonafide_attack_ties={cross_tied_sets}, \
             violations_without_bonafide_attack_ties={violations_without_cross_ties})"
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 4. AUC vs pairwise statistic

fn pairwise_auc(bf: &[f64], atk: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &b in bf {
        for &a in atk {
            acc += if b > a {
                1.0
            } else if b == a {
                0.5
            } else {
                0.0
            };
        }
    }
    acc / (bf.len() * atk.len()) as f64
}

#[test]
fn criterion_4_auc_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (bf, atk) = tied_scores(&mut rng);
        let set = ScoreSet::from_classes(&bf, &atk).unwrap();
        let auc = roc_auc(&roc_points(&set).unwrap());
        worst = worst.max((auc - pairwise_auc(&bf, &atk)).abs());
    }
    let elapsed = start.elapsed();
    let ok = worst <= 1e-9 && elapsed < Duration::from_secs(30);
    report(4, "ROC AUC vs pairwise", ok, elapsed, &format!("max_abs_diff={worst:.3e}"));
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 5. gradient vs finite differences

#[test]
fn criterion_5_gradient_check() {
    let start = Instant::now();
    let arch = ArchSpec::new(8, 1, vec![3, 4], vec![2, 2]).unwrap();
    let mut model = Cae::<f64>::new(arch, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let batch = random_images::<f64>(&mut rng, 3, 8, 1);
    let weights = [1.0, 0.35, 0.0];
    let (_, grads) = model.gradient(&batch, &weights).unwrap();

    let objective = |m: &Cae<f64>| -> f64 {
        let losses: Vec<f64> = batch.iter().map(|x| m.sample_loss(x).unwrap()).collect();
        weighted_batch_objective(&losses, &weights).unwrap()
    };
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    let mut count = 0usize;
    let n_tensors = model.params().tensors().len();
    for ti in 0..n_tensors {
        let len = model.params().tensors()[ti].data.len();
        for j in 0..len {
            let orig = model.params().tensors()[ti].data[j];
            model.params_mut().tensors_mut()[ti].data[j] = orig + h;
            let up = objective(&model);
            model.params_mut().tensors_mut()[ti].data[j] = orig - h;
            let down = objective(&model);
            model.params_mut().tensors_mut()[ti].data[j] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = grads.tensors()[ti].data[j];
            // Relative error with a small absolute floor for vanishing entries.
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-7);
            if rel > worst {
                worst = rel;
                worst_at = format!("{}[{j}]", grads.tensors()[ti].name);
            }
            count += 1;
        }
    }
    let elapsed = start.elapsed();
    let ok = worst < 1e-4 && elapsed < Duration::from_secs(60);
    report(
        5,
        "gradient vs finite differences",
        ok,
        elapsed,
        &format!("params={count} max_rel_err={worst:.3e} at {worst_at}"),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 6. SPL disabled == plain autoencoder training

fn reference_mse(model: &Cae<f64>, x: &ImageTensor<f64>) -> f64 {
    let r = model.reconstruct(x).unwrap();
    let n = x.as_slice().len() as f64;
    x.as_slice()
        .iter()
        .zip(r.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n
}

#[test]
fn criterion_6_baseline_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let images = random_images::<f64>(&mut rng, 64, 16, 3);
    let data = TrainingSet::from_images(images.clone());
    let arch = ArchSpec::new(16, 3, vec![4, 8], vec![2, 2]).unwrap();
    let config = TrainConfig {
        learning_rate: 0.05,
        momentum: 0.9,
        weight_decay: 5e-4,
        lr_gamma: 0.9,
        batch_size: 16,
        epochs: 3,
        warmup_epochs: 1,
        seed: 21,
        spl_enabled: false,
        ..TrainConfig::default()
    };
    let (_, log) = fit(&data, &config, arch.clone(), &mut NoopObserver).unwrap();

    // Reference: uniform weights, mean MSE, momentum SGD with L2 decay.
    let mut model = Cae::<f64>::new(arch, config.seed).unwrap();
    let mut velocity: Vec<Vec<f64>> = model.params().tensors().iter().map(|t| vec![0.0; t.data.len()]).collect();
    let mut reference = Vec::new();
    for epoch in 0..config.epochs {
        let lr = config.learning_rate * config.lr_gamma.powi(epoch as i32);
        let mut order: Vec<usize> = (0..images.len()).collect();
        let mut shuffler = ChaCha8Rng::seed_from_u64(config.seed);
        shuffler.set_stream(1 + epoch as u64);
        order.shuffle(&mut shuffler);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<ImageTensor<f64>> = chunk.iter().map(|&i| images[i].clone()).collect();
            let objective = batch.iter().map(|x| reference_mse(&model, x)).sum::<f64>() / batch.len() as f64;
            reference.push(objective);
            let (_, grads) = model.gradient(&batch, &vec![1.0; batch.len()]).unwrap();
            for ((t, gt), vt) in model.params_mut().tensors_mut().iter_mut().zip(grads.tensors()).zip(&mut velocity) {
                for ((p, &gp), v) in t.data.iter_mut().zip(&gt.data).zip(vt.iter_mut()) {
                    let g = gp + config.weight_decay * *p;
                    *v = config.momentum * *v + g;
                    *p -= lr * *v;
                }
            }
        }
    }
    let got: Vec<f64> = log.batches.iter().map(|b| b.objective).collect();
    let worst = got
        .iter()
        .zip(&reference)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let ok = got.len() == reference.len() && got.len() == 12 && worst <= 1e-6;
    report(
        6,
        "warm-up/baseline equivalence",
        ok,
        start.elapsed(),
        &format!("steps={} max_abs_diff={worst:.3e}", got.len()),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 7. toy morph mechanism

/// Scaled-down setting for a single CPU core. The schedule rate is raised
/// so the threshold reaches `μ − σ` within the short run (~11 steps/epoch).
fn toy_config(seed: u64, spl: bool) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.1,
        momentum: 0.9,
        weight_decay: 5e-4,
        lr_gamma: 0.98,
        batch_size: 32,
        epochs: 20,
        warmup_epochs: 5,
        m: 4.0,
        r: 0.03,
        seed,
        spl_enabled: spl,
        ..TrainConfig::default()
    }
}

const TOY_WIDTHS: [usize; 7] = [8, 16, 32, 32, 32, 16, 8];
const TOY_STRIDES: [usize; 7] = [2, 2, 2, 2, 1, 1, 1];
const TOY_SEEDS: [u64; 3] = [0, 1, 2];

struct ToyRun {
    gap: f64,
    eer: f64,
    attack_below: bool,
}

fn toy_run(data: &TrainingSet<f32>, test: &Manifest, seed: u64, spl: bool) -> ToyRun {
    let arch = ArchSpec::new(64, 3, TOY_WIDTHS.to_vec(), TOY_STRIDES.to_vec()).unwrap();
    let config = toy_config(seed, spl);
    let (model, _) = fit(data, &config, arch, &mut NoopObserver).unwrap();
    let scores = score_manifest(&model, test).unwrap().scores;
    let gap = gap_row(config.epochs, &scores).unwrap();
    ToyRun {
        gap: gap.gap,
        eer: compute_eer(&scores).unwrap().eer,
        attack_below: gap.attack_mean < gap.bonafide_mean,
    }
}

#[test]
fn criterion_7_toy_morph_mechanism() {
    let start = Instant::now();
    let mut passes = 0;
    let mut details = Vec::new();
    for seed in TOY_SEEDS {
        let dir = tempfile::tempdir().unwrap();
        let synth = SynthConfig {
            n_bonafide: 500,
            n_attacks: 250,
            seed,
            ..SynthConfig::default()
        };
        let out = synth_generate(&synth, dir.path()).unwrap();
        let mixed = mix_datasets(&out.train, &out.contaminant, 35.0, seed).unwrap();
        let data = load_training_set::<f32>(&mixed.strip_labels(), 64).unwrap();
        let base = toy_run(&data, &out.test, seed, false);
        let spl = toy_run(&data, &out.test, seed, true);
        let a = base.attack_below && spl.attack_below;
        let b = spl.gap >= base.gap;
        let c = spl.eer <= base.eer + 0.02 && spl.eer < 0.35;
        if a && b && c {
            passes += 1;
        }
        details.push(format!(
            "seed {seed}: gap {:.5}->{:.5} eer {:.4}->{:.4} (a={a} b={b} c={c})",
            base.gap, spl.gap, base.eer, spl.eer
        ));
    }
    let elapsed = start.elapsed();
    let ok = passes >= 2 && elapsed < Duration::from_secs(15 * 60);
    report(
        7,
        "toy morph mechanism",
        ok,
        elapsed,
        &format!("{passes}/3 seeds hold; {}", details.join("; ")),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 8. determinism

fn batch_log_lines(log: &TrainLog<f32>) -> Vec<String> {
    log.batches.iter().map(|b| b.to_json().to_string()).collect()
}

fn pipeline(dir: &std::path::Path) -> (Vec<String>, Vec<(String, f64)>) {
    let synth = SynthConfig {
        n_bonafide: 80,
        n_attacks: 40,
        seed: 8,
        ..SynthConfig::default()
    };
    let out = synth_generate(&synth, dir).unwrap();
    let mixed = mix_datasets(&out.train, &out.contaminant, 35.0, 8).unwrap();
    let data = load_training_set::<f32>(&mixed.strip_labels(), 32).unwrap();
    let arch = ArchSpec::new(32, 3, vec![4, 8, 8, 4], vec![2, 2, 1, 1]).unwrap();
    let config = TrainConfig {
        learning_rate: 0.05,
        batch_size: 8,
        epochs: 4,
        warmup_epochs: 1,
        r: 0.1,
        seed: 8,
        ..TrainConfig::default()
    };
    let (model, log) = fit(&data, &config, arch, &mut NoopObserver).unwrap();
    let scores = score_manifest(&model, &out.test).unwrap().scores;
    let mut epochs: Vec<String> = log
        .epochs
        .iter()
        .map(|e| format!("{} {} {} {} {}", e.epoch, e.steps, e.mean_loss, e.lr, e.removed))
        .collect();
    let mut lines = batch_log_lines(&log);
    lines.append(&mut epochs);
    (
        lines,
        scores.entries.iter().map(|e| (e.id.clone(), e.score)).collect(),
    )
}

#[test]
fn criterion_8_determinism() {
    let start = Instant::now();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let (log1, s1) = pipeline(d1.path());
    let (log2, s2) = pipeline(d2.path());
    let logs_equal = log1 == log2;
    let scores_equal = s1.len() == s2.len()
        && s1
            .iter()
            .zip(&s2)
            .all(|(a, b)| a.0 == b.0 && a.1.to_bits() == b.1.to_bits());
    let ok = logs_equal && scores_equal && !log1.is_empty();
    report(
        8,
        "determinism",
        ok,
        start.elapsed(),
        &format!(
            "log_lines={} scores={} logs_equal={logs_equal} scores_bitwise_equal={scores_equal}",
            log1.len(),
            s1.len()
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 9. label firewall

#[test]
fn criterion_9_label_firewall() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let synth = SynthConfig {
        n_bonafide: 40,
        n_attacks: 20,
        seed: 9,
        ..SynthConfig::default()
    };
    let out = synth_generate(&synth, dir.path()).unwrap();
    let mixed = mix_datasets(&out.train, &out.contaminant, 7.0, 9).unwrap();

    // The same training records under two contradictory labelings.
    let mut as_attacks = mixed.clone();
    let mut as_bonafide = mixed.clone();
    for r in &mut as_attacks.records {
        r.eval_label = Some(EvalLabel::Attack);
    }
    for r in &mut as_bonafide.records {
        r.eval_label = Some(EvalLabel::BonaFide);
    }
    let stripped_a = as_attacks.strip_labels();
    let stripped_b = as_bonafide.strip_labels();
    let stripped_equal = stripped_a == stripped_b;

    let record_json = serde_json::to_value(&stripped_a.records[0]).unwrap();
    let record_has_label = record_json.as_object().unwrap().keys().any(|k| k.contains("label"));

    let data_a = load_training_set::<f32>(&stripped_a, 16).unwrap();
    let data_b = load_training_set::<f32>(&stripped_b, 16).unwrap();
    let set_mentions_label = format!("{data_a:?}").contains("label");

    let arch = ArchSpec::new(16, 3, vec![4, 4], vec![2, 1]).unwrap();
    let config = TrainConfig {
        learning_rate: 0.05,
        batch_size: 8,
        epochs: 2,
        warmup_epochs: 1,
        seed: 9,
        ..TrainConfig::default()
    };
    let (_, log_a) = fit(&data_a, &config, arch.clone(), &mut NoopObserver).unwrap();
    let (_, log_b) = fit(&data_b, &config, arch, &mut NoopObserver).unwrap();
    let batch_has_label = log_a
        .batches
        .iter()
        .any(|b| b.to_json().as_object().unwrap().keys().any(|k| k.contains("label")));
    let logs_equal = batch_log_lines(&log_a) == batch_log_lines(&log_b);

    let ok = stripped_equal && !record_has_label && !set_mentions_label && !batch_has_label && logs_equal;
    report(
        9,
        "label firewall",
        ok,
        start.elapsed(),
        &format!(
            "stripped_equal={stripped_equal} record_label={record_has_label} set_label={set_mentions_label} batch_label={batch_has_label} logs_equal={logs_equal}"
        ),
    );
    assert!(ok);
}
