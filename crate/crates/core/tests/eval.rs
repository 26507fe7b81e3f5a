use spad_core::data::{synth_generate, EvalLabel, Manifest, SampleRecord, SynthConfig, TrainingSet};
use spad_core::data::{load_training_set, preprocess_file};
use spad_core::eval::{
    gap_curve, plot_gap_curve, plot_roc, score_manifest, EvalReport, ScoreSet,
};
use spad_core::trainer::{fit, Checkpoint, EpochSummary, TrainConfig, TrainObserver};
use spad_core::{ArchSpec, Cae, Error, Result};

struct Keep(Vec<Checkpoint<f32>>);

impl TrainObserver<f32> for Keep {
    fn on_epoch(&mut self, _s: &EpochSummary, ck: &Checkpoint<f32>) -> Result<()> {
        self.0.push(ck.clone());
        Ok(())
    }
}

fn small_arch() -> ArchSpec {
    ArchSpec::new(32, 3, vec![4, 8, 4], vec![2, 2, 1]).unwrap()
}

#[test]
fn scores_are_reconstruction_mse_and_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth_generate(
        &SynthConfig {
            n_bonafide: 12,
            n_attacks: 6,
            seed: 1,
            ..SynthConfig::default()
        },
        dir.path(),
    )
    .unwrap();
    let model = Cae::<f64>::new(small_arch(), 5).unwrap();
    let first = score_manifest(&model, &out.test).unwrap();
    let second = score_manifest(&model, &out.test).unwrap();
    assert_eq!(first.scores, second.scores);
    assert!(first.skipped.is_empty());
    for (e, r) in first.scores.entries.iter().zip(&out.test.records) {
        let x = preprocess_file::<f64>(&r.path, 32).unwrap();
        let y = model.decode(&model.encode(&x).unwrap()).unwrap();
        let mse = x
            .as_slice()
            .iter()
            .zip(y.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / x.len() as f64;
        assert_eq!(e.id, r.id);
        assert!((e.score - mse).abs() < 1e-15);
    }
}

#[test]
fn duplicate_ids_are_refused() {
    let rec = SampleRecord {
        id: "x".into(),
        path: "x.png".into(),
        eval_label: Some(EvalLabel::Attack),
        source_tag: "t".into(),
    };
    let manifest = Manifest {
        schema_version: 1,
        records: vec![rec.clone(), rec],
    };
    let model = Cae::<f32>::new(small_arch(), 1).unwrap();
    assert!(matches!(score_manifest(&model, &manifest), Err(Error::DuplicateId(_))));
}

#[test]
fn gap_curve_follows_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth_generate(
        &SynthConfig {
            n_bonafide: 30,
            n_attacks: 10,
            seed: 2,
            ..SynthConfig::default()
        },
        dir.path(),
    )
    .unwrap();
    let data: TrainingSet<f32> = load_training_set(&out.train.strip_labels(), 32).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.05,
        batch_size: 7,
        epochs: 3,
        warmup_epochs: 1,
        seed: 2,
        ..TrainConfig::default()
    };
    let mut keep = Keep(Vec::new());
    fit(&data, &cfg, small_arch(), &mut keep).unwrap();
    let rows = gap_curve(&keep.0, &out.test).unwrap();
    assert_eq!(rows.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![1, 2, 3]);

    // Last row equals hand-averaged class means of the final model's scores.
    let last = keep.0.last().unwrap();
    let model = Cae::from_params(last.arch.clone(), last.params.clone()).unwrap();
    let s = score_manifest(&model, &out.test).unwrap().scores;
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let b = mean(s.scores_of(EvalLabel::BonaFide));
    let a = mean(s.scores_of(EvalLabel::Attack));
    let row = rows.last().unwrap();
    assert!((row.bonafide_mean - b).abs() < 1e-12 && (row.attack_mean - a).abs() < 1e-12);
    assert!((row.gap - (b - a)).abs() < 1e-12);

    assert!(gap_curve::<f32>(&[], &out.test).is_err());

    let report = EvalReport::from_scores(&s).unwrap();
    assert!(report.eer.eer >= 0.0 && report.eer.eer <= 0.5);
    let roc = dir.path().join("roc.png");
    let gap = dir.path().join("gap.png");
    plot_roc(&report.roc, &roc).unwrap();
    plot_gap_curve(&rows, &gap).unwrap();
    assert!(roc.exists() && gap.exists());
}

#[test]
fn equal_scores_give_zero_gap() {
    let s = ScoreSet::from_classes(&[0.25, 0.25], &[0.25, 0.25]).unwrap();
    let r = spad_core::eval::gap_row(0, &s).unwrap();
    assert_eq!(r.gap, 0.0);
}
