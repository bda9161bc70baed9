use proptest::prelude::*;
use sevot::ot::SinkhornConfig;
use sevot::GroundMatrix;
use sevot_lab::seg::*;

fn small_scene(seed: u64) -> SceneSample {
    let cfg = SceneConfig {
        height: 8,
        width: 8,
        ..SceneConfig::default()
    };
    generate_scene(seed, &cfg).unwrap()
}

fn sinkhorn_loss() -> SegLoss {
    SegLoss::Sinkhorn {
        matrix: GroundMatrix::step(N_CLASSES),
        config: SinkhornConfig::new(0.1),
    }
}

fn pretrained(seed: u64, data: &[SceneSample]) -> SoftmaxModel {
    let mut m = SoftmaxModel::init(FEATURE_DIM, 4, N_CLASSES, seed);
    let targets: Vec<_> = data.iter().map(onehot_targets).collect();
    let cfg = TrainConfig {
        steps: 30,
        seed,
        ..TrainConfig::default()
    };
    train(&mut m, data, &targets, &SegLoss::CrossEntropy, &cfg).unwrap();
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn scenes_are_labelled_grids(seed in any::<u64>()) {
        let s = small_scene(seed);
        prop_assert_eq!(s.labels.len(), s.pixels());
        prop_assert_eq!(s.features.len(), s.pixels() * FEATURE_DIM);
        prop_assert!(s.labels.iter().all(|&l| l < N_CLASSES));
        prop_assert_eq!(&s, &small_scene(seed));
    }

    #[test]
    fn smoothing_preserves_argmax(raw in prop::collection::vec(0.01f64..1.0, N_CLASSES), lambda in 0.0f64..=1.0) {
        let sum: f64 = raw.iter().sum();
        let pred = sevot::Histogram::unnormalized(raw.iter().map(|v| v / sum).collect()).unwrap();
        let t = smooth_pseudo_label(&pred, lambda, 0.0).unwrap();
        prop_assert!((t.total() - 1.0).abs() < 1e-12);
        prop_assert_eq!(t.argmax(), pred.argmax());
    }

    #[test]
    fn training_is_deterministic(seed in 0u64..1000) {
        let data: Vec<_> = (0..2).map(|i| small_scene(seed + i)).collect();
        prop_assert_eq!(pretrained(seed, &data), pretrained(seed, &data));
    }
}

#[test]
fn full_threshold_skips_every_round() {
    let data: Vec<_> = (0..3).map(small_scene).collect();
    let mut m = pretrained(1, &data);
    let before = m.clone();
    let cfg = SelfTrainConfig {
        rounds: 2,
        lambda: 0.3,
        threshold: 1.0,
        loss: sinkhorn_loss(),
        train: TrainConfig::default(),
        keep_source: false,
    };
    let reports = self_train(&mut m, &data, &data, &cfg).unwrap();
    assert!(reports.iter().all(|r| r.skipped && r.accepted_fraction == 0.0));
    assert_eq!(m, before);
}

#[test]
fn hard_lambda_matches_hard_pseudo_labels() {
    let source: Vec<_> = (0..3).map(small_scene).collect();
    let target: Vec<_> = (10..13).map(small_scene).collect();
    let base = pretrained(2, &source);
    let train_cfg = TrainConfig {
        lr: 0.1,
        steps: 5,
        batch: 2,
        seed: 4,
    };

    let mut smoothed = base.clone();
    let cfg = SelfTrainConfig {
        rounds: 1,
        lambda: 0.0,
        threshold: 0.3,
        loss: sinkhorn_loss(),
        train: train_cfg,
        keep_source: false,
    };
    self_train(&mut smoothed, &source, &target, &cfg).unwrap();

    let mut hard = base.clone();
    let labels = hard_pseudo_labels(&hard, &target, 0.3).unwrap();
    train(&mut hard, &target, &labels, &sinkhorn_loss(), &train_cfg).unwrap();
    assert_eq!(smoothed, hard);
}

#[test]
fn self_training_needs_sinkhorn() {
    let data = vec![small_scene(0)];
    let mut m = pretrained(0, &data);
    let cfg = SelfTrainConfig {
        rounds: 1,
        lambda: 0.3,
        threshold: 0.5,
        loss: SegLoss::CrossEntropy,
        train: TrainConfig::default(),
        keep_source: false,
    };
    assert!(self_train(&mut m, &data, &data, &cfg).is_err());
}

#[test]
fn evaluation_counts_every_pixel() {
    let data: Vec<_> = (0..4).map(small_scene).collect();
    let m = pretrained(3, &data);
    let cm = evaluate(&m, &data).unwrap();
    assert_eq!(cm.total() as usize, data.iter().map(SceneSample::pixels).sum::<usize>());
}

#[test]
fn prototype_oracle_is_perfect_on_clean_scenes() {
    let cfg = SceneConfig {
        noise: 0.0,
        ..SceneConfig::default()
    };
    for seed in 0..10 {
        let s = generate_scene(seed, &cfg).unwrap();
        for p in 0..s.pixels() {
            assert_eq!(nearest_prototype(s.feature(p)), s.labels[p]);
        }
    }
}
