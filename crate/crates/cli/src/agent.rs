use std::fmt::Write as _;
use std::time::Instant;

use anyhow::{bail, Result};
use serde_json::json;
use sevot_lab::agent::{
    alternate_optimize, ActorConfig, AlternationConfig, AlternationSchedule, NetShape, PolicyValueParams,
};
use sevot_lab::drive::{MEASUREMENTS, POOL};
use sevot_lab::rng;
use sevot_lab::seg::TrainConfig;

use crate::experiment::{ExperimentConfig, MatrixSource};
use crate::output::{load_segmenter, save_agent, save_segmenter, write, write_json, write_jsonl, Run};

/// Speed, goal distance, damage and command rescaled to comparable ranges.
pub const MEAS_SCALE: [f64; MEASUREMENTS] = [1.0, 0.01, 0.1, 1.0, 1.0, 1.0];

pub fn cmd_train_agent(cfg: &ExperimentConfig, run: &Run) -> Result<()> {
    if matches!(cfg.matrix, MatrixSource::Learned) {
        bail!("config key `matrix.source`: train-agent needs a predefined matrix, not `learned`");
    }
    let start = Instant::now();
    let mut segmenter = load_segmenter(&run.input("seg/seg.ckpt", "segmenter checkpoint")?)?;
    let predefined = cfg.ground_matrix(&run.out)?;
    let dir = run.dir("agent")?;
    let a = &cfg.agent;
    let mut params = PolicyValueParams::init(
        NetShape::new(2 * POOL * POOL * segmenter.width()),
        MEAS_SCALE,
        rng::derive(cfg.seed, "policy-init", 0),
    );
    let schedule = AlternationSchedule::linear(a.rounds, a.steps_per_round);
    let config = AlternationConfig {
        actors: ActorConfig {
            workers: a.workers,
            lr: a.lr,
            entropy_coef: a.entropy,
            gamma: a.gamma,
            track: cfg.track.clone(),
            ..ActorConfig::default()
        },
        pool_frames: a.pool_frames,
        finetune: (!a.freeze).then_some(TrainConfig {
            lr: cfg.finetune.map_or(0.05, |(_, tc)| tc.lr),
            steps: a.finetune_steps,
            batch: 4,
            seed: 0,
        }),
        finetune_frames: a.finetune_frames,
        seed: rng::derive(cfg.seed, "alternation", 0),
    };
    let result = alternate_optimize(
        &mut segmenter,
        &mut params,
        &schedule,
        &predefined,
        &cfg.transform,
        &config,
    )?;

    let mut rounds = Vec::new();
    for r in &result.rounds {
        write(
            &dir.join(format!("matrix-round-{}.csv", r.round)),
            &r.learned.matrix.to_csv(),
        )?;
        rounds.push(json!({
            "round": r.round,
            "alpha": r.alpha,
            "mean_episode_length": r.mean_episode_length,
            "mean_episode_reward": r.mean_episode_reward,
        }));
        run.note(format!(
            "round {} alpha {}: mean episode length {}",
            r.round,
            r.alpha,
            r.mean_episode_length.map_or("n/a".into(), |v| format!("{v:.1}"))
        ));
    }
    write(&dir.join("matrix-final.csv"), &result.matrix.to_csv())?;
    write_jsonl(&dir.join("rounds.jsonl"), &rounds)?;
    write_jsonl(&dir.join("curve.jsonl"), &result.curve)?;
    let mut series = String::from("step,mean_reward\n");
    for p in &result.curve {
        let _ = writeln!(series, "{},{}", p.step, p.mean_reward);
    }
    write(&dir.join("curve.csv"), &series)?;
    save_agent(&dir.join("agent.ckpt"), &params)?;
    save_segmenter(&dir.join("seg-finetuned.ckpt"), &segmenter)?;
    write_json(
        &dir.join("timing.json"),
        &json!({ "seconds": start.elapsed().as_secs_f64() }),
    )?;
    run.note(format!("{} rounds, outputs in {}", result.rounds.len(), dir.display()));
    Ok(())
}
