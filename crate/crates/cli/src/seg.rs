use std::time::Instant;

use anyhow::Result;
use serde_json::json;
use sevot::ot::SinkhornConfig;
use sevot::GroundMatrix;
use sevot_lab::rng;
use sevot_lab::seg::{
    evaluate, generate_scene, onehot_targets, self_train, train, SceneConfig, SegLoss, SelfTrainConfig, SoftmaxModel,
    TrainConfig, FEATURE_DIM, N_CLASSES,
};

use crate::data::load_dataset;
use crate::experiment::{ExperimentConfig, LossKind};
use crate::output::{save_segmenter, write_json, write_jsonl, Run};
use crate::report::{model_confusion, SegReport};

fn seg_loss(kind: LossKind, d: &GroundMatrix, cfg: &ExperimentConfig) -> SegLoss {
    match kind {
        LossKind::CrossEntropy => SegLoss::CrossEntropy,
        LossKind::Wasserstein => SegLoss::Wasserstein(d.clone()),
        LossKind::Sinkhorn => SegLoss::Sinkhorn {
            matrix: d.clone(),
            config: SinkhornConfig::new(cfg.sinkhorn_epsilon(d)),
        },
    }
}

pub fn cmd_train_seg(cfg: &ExperimentConfig, run: &Run) -> Result<()> {
    let start = Instant::now();
    let (train_set, test_set) = load_dataset(run)?;
    let d = cfg.loss_matrix(&run.out)?;
    let report_matrix = cfg.ground_matrix(&run.out)?;
    let dir = run.dir("seg")?;
    let targets: Vec<_> = train_set.iter().map(onehot_targets).collect();
    let mut model = SoftmaxModel::init(FEATURE_DIM, cfg.hidden, N_CLASSES, rng::derive(cfg.seed, "init", 0));
    save_segmenter(&dir.join("init.ckpt"), &model)?;

    let mut log = Vec::new();
    let mut phases = vec![("pretrain", SegLoss::CrossEntropy, cfg.pretrain)];
    if let Some((kind, tc)) = cfg.finetune {
        phases.push(("finetune", seg_loss(kind, &d, cfg), tc));
    }
    let mut step = 0;
    for (k, (phase, loss, tc)) in phases.into_iter().enumerate() {
        let tc = TrainConfig {
            seed: rng::derive(cfg.seed, "train", k as u64),
            ..tc
        };
        let curve = train(&mut model, &train_set, &targets, &loss, &tc)?;
        for value in curve {
            step += 1;
            log.push(json!({ "phase": phase, "step": step, "loss": value }));
        }
        let acc = evaluate(&model, &test_set)?.accuracy();
        log.push(json!({ "phase": phase, "step": step, "test_accuracy": acc }));
        run.note(format!("{phase}: {} steps, test accuracy {:.4}", tc.steps, acc));
    }

    if cfg.adapt.rounds > 0 {
        let scene = SceneConfig {
            noise: cfg.adapt.noise,
            shift: cfg.adapt.shift,
            ..cfg.data.scene.clone()
        };
        let target = (0..cfg.adapt.scenes)
            .map(|i| generate_scene(rng::derive(cfg.seed, "target", i as u64), &scene))
            .collect::<Result<Vec<_>, _>>()?;
        let tc = cfg.finetune.map_or(cfg.pretrain, |(_, tc)| tc);
        let st = SelfTrainConfig {
            rounds: cfg.adapt.rounds,
            lambda: cfg.adapt.lambda,
            threshold: cfg.adapt.threshold,
            loss: seg_loss(LossKind::Sinkhorn, &d, cfg),
            train: TrainConfig {
                seed: rng::derive(cfg.seed, "adapt", 0),
                ..tc
            },
            keep_source: true,
        };
        for r in self_train(&mut model, &train_set, &target, &st)? {
            let acc = evaluate(&model, &target)?.accuracy();
            log.push(json!({
                "phase": "adapt",
                "round": r.round,
                "accepted_fraction": r.accepted_fraction,
                "skipped": r.skipped,
                "final_loss": r.losses.last(),
                "target_accuracy": acc,
            }));
        }
    }

    save_segmenter(&dir.join("seg.ckpt"), &model)?;
    write_jsonl(&dir.join("train_log.jsonl"), &log)?;
    let cm = model_confusion(&model, &test_set)?;
    let report = SegReport::new(&cm, &report_matrix)?;
    write_json(&dir.join("report.json"), &report)?;
    report.write_csv(&cm, &dir)?;
    write_json(
        &dir.join("timing.json"),
        &json!({ "seconds": start.elapsed().as_secs_f64() }),
    )?;
    run.note(format!(
        "test accuracy {:.4}, severity {:.4}, checkpoint {}",
        report.accuracy,
        report.severity,
        dir.join("seg.ckpt").display()
    ));
    Ok(())
}
