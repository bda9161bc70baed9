use anyhow::Result;
use serde::Serialize;
use sevot::metrics::{driving_metrics, success_rate, DrivingReport};
use sevot_lab::agent::drive_episode;
use sevot_lab::drive::{episode_record, write_log, Action};
use sevot_lab::rng;
use sevot_lab::seg::{SoftmaxModel, FEATURE_DIM, N_CLASSES};

use crate::data::load_dataset;
use crate::experiment::{EvalPolicy, EvalSegmenter, ExperimentConfig};
use crate::output::{load_agent, load_segmenter, write, write_json, Run};
use crate::report::{model_confusion, oracle_confusion, SegReport};

#[derive(Debug, Serialize)]
struct DrivingSection {
    policy: &'static str,
    infraction_threshold: f64,
    success_rate: f64,
    #[serde(flatten)]
    report: DrivingReport,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    segmenter: &'static str,
    segmentation: SegReport,
    driving: DrivingSection,
}

pub fn cmd_eval(cfg: &ExperimentConfig, run: &Run) -> Result<()> {
    let (_, test_set) = load_dataset(run)?;
    let d = cfg.ground_matrix(&run.out)?;
    let (seg_name, cm) = match cfg.eval.segmenter {
        EvalSegmenter::Oracle => ("oracle", oracle_confusion(&test_set)?),
        EvalSegmenter::Model => {
            let model = load_segmenter(&run.input("seg/seg.ckpt", "segmenter checkpoint")?)?;
            ("model", model_confusion(&model, &test_set)?)
        }
    };
    let segmentation = SegReport::new(&cm, &d)?;

    let (policy, observer) = match cfg.eval.policy {
        EvalPolicy::Trained => (
            Some(load_agent(&run.input("agent/agent.ckpt", "agent checkpoint")?)?),
            load_segmenter(&run.input("agent/seg-finetuned.ckpt", "segmenter checkpoint")?)?,
        ),
        // the random policy never reads its observations
        EvalPolicy::Random => (None, SoftmaxModel::init(FEATURE_DIM, cfg.hidden, N_CLASSES, 0)),
    };
    let dir = run.dir("eval")?;
    let episodes_dir = run.dir("eval/episodes")?;
    let mut rng = rng::stream(cfg.seed, "eval-policy");
    let mut records = Vec::with_capacity(cfg.eval.episodes);
    for k in 0..cfg.eval.episodes {
        let world_seed = rng::derive(cfg.seed, "eval-world", k as u64);
        let log = drive_episode(&cfg.track, world_seed, &observer, |obs| match &policy {
            Some(p) => Ok(p.act(obs, false, &mut rng)?.action),
            None => Ok(Action::random(&mut rng)),
        })?;
        write_log(&episodes_dir.join(format!("episode-{k:03}.jsonl")), &log.steps)?;
        records.push(episode_record(&log.steps, cfg.eval.threshold));
    }
    let driving = driving_metrics(&records, cfg.track.max_steps, cfg.track.dt)?;

    segmentation.write_csv(&cm, &dir)?;
    write(&dir.join("driving_summary.csv"), &driving.summary_csv())?;
    write(&dir.join("infractions.csv"), &driving.infraction_table_csv())?;
    let report = EvalReport {
        segmenter: seg_name,
        segmentation,
        driving: DrivingSection {
            policy: match cfg.eval.policy {
                EvalPolicy::Trained => "trained",
                EvalPolicy::Random => "random",
            },
            infraction_threshold: cfg.eval.threshold,
            success_rate: success_rate(&records)?,
            report: driving,
        },
    };
    write_json(&dir.join("report.json"), &report)?;
    run.note(format!(
        "mIoU {}, severity {:.4}, drive {:.1}%, km per collision {}",
        report.segmentation.miou.map_or("n/a".into(), |v| format!("{v:.4}")),
        report.segmentation.severity,
        report.driving.report.drive_percent,
        report.driving.report.km_per_collision
    ));
    Ok(())
}
