use std::panic::{catch_unwind, AssertUnwindSafe};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{update, PolicyValueParams, Rollout, Transition, ROLLOUT_LEN};
use crate::drive::{observe, Action, Observation, StepLog, TrackConfig, World, WorldState};
use crate::error::{invalid, Result};
use crate::rng;
use crate::seg::SoftmaxModel;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActorConfig {
    pub workers: usize,
    pub total_steps: usize,
    pub rollout_len: usize,
    pub lr: f64,
    pub entropy_coef: f64,
    pub gamma: f64,
    pub seed: u64,
    pub track: TrackConfig,
    /// Keep every visited world state in the episode logs.
    pub keep_states: bool,
    /// Worker index that panics on its first rollout, for fault testing.
    #[serde(skip)]
    #[doc(hidden)]
    pub panic_worker: Option<usize>,
}

impl Default for ActorConfig {
    fn default() -> Self {
        Self {
            workers: 4,
            total_steps: 200_000,
            rollout_len: ROLLOUT_LEN,
            lr: 7e-4,
            entropy_coef: 0.01,
            gamma: 0.99,
            seed: 0,
            track: TrackConfig::default(),
            keep_states: false,
            panic_worker: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpisodeLog {
    pub worker: usize,
    pub world_seed: u64,
    pub steps: Vec<StepLog>,
    /// World state after each step, when requested.
    #[serde(skip)]
    pub states: Vec<WorldState>,
}

impl EpisodeLog {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.r).sum()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// One learner iteration of the training curve.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CurvePoint {
    pub step: usize,
    pub mean_reward: f64,
    /// Mean length of the episodes that ended in this iteration.
    pub episode_length: Option<f64>,
    pub entropy: f64,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ActorReport {
    pub steps: usize,
    pub episodes: Vec<EpisodeLog>,
    pub curve: Vec<CurvePoint>,
    pub rejected_updates: usize,
    pub failed_workers: Vec<usize>,
}

struct Worker {
    id: usize,
    world: World,
    obs: Observation,
    rng: ChaCha8Rng,
    episode: EpisodeLog,
    episodes_started: u64,
}

impl Worker {
    fn new(id: usize, segmenter: &SoftmaxModel, config: &ActorConfig) -> Result<Self> {
        let world_seed = rng::derive(config.seed, &format!("world-{id}"), 0);
        let world = World::reset(world_seed, &config.track)?;
        let obs = observe(&world, segmenter, None)?;
        Ok(Self {
            id,
            world,
            obs,
            rng: rng::stream(config.seed, &format!("policy-{id}")),
            episode: EpisodeLog {
                worker: id,
                world_seed,
                steps: Vec::new(),
                states: Vec::new(),
            },
            episodes_started: 1,
        })
    }

    /// Collects one rollout, returning it with any episodes that finished.
    fn collect(
        &mut self,
        params: &PolicyValueParams,
        segmenter: &SoftmaxModel,
        config: &ActorConfig,
    ) -> Result<(Rollout, Vec<EpisodeLog>)> {
        let mut transitions = Vec::with_capacity(config.rollout_len);
        let mut finished = Vec::new();
        for _ in 0..config.rollout_len {
            let sample = params.act(&self.obs, true, &mut self.rng)?;
            let outcome = self.world.step(sample.action)?;
            self.episode
                .steps
                .push(StepLog::new(&self.world, sample.action, &outcome));
            if config.keep_states {
                self.episode.states.push(self.world.state().clone());
            }
            let done = outcome.done.is_some();
            let next_obs = if done {
                let seed = rng::derive(config.seed, &format!("world-{}", self.id), self.episodes_started);
                self.episodes_started += 1;
                self.world = World::reset(seed, &config.track)?;
                let log = std::mem::replace(
                    &mut self.episode,
                    EpisodeLog {
                        worker: self.id,
                        world_seed: seed,
                        steps: Vec::new(),
                        states: Vec::new(),
                    },
                );
                finished.push(log);
                observe(&self.world, segmenter, None)?
            } else {
                observe(&self.world, segmenter, Some(&self.obs))?
            };
            let obs = std::mem::replace(&mut self.obs, next_obs);
            transitions.push(Transition {
                obs,
                u: sample.u,
                action: sample.action,
                behavior_log_prob: sample.log_prob,
                reward: outcome.reward,
                done,
                value: sample.value,
            });
            if done {
                break;
            }
        }
        let bootstrap = if transitions.last().is_some_and(|t| t.done) {
            0.0
        } else {
            params.value(&self.obs)?
        };
        Ok((Rollout { transitions, bootstrap }, finished))
    }
}

type Collected = (Worker, Result<(Rollout, Vec<EpisodeLog>)>);

/// Synchronous parallel actor-critic training.
///
/// Each iteration every live worker collects one rollout from its own world
/// using the same parameter snapshot; the learner then applies one update per
/// rollout in worker order, with the learning rate decaying linearly to zero
/// over `total_steps`. A worker that panics is dropped and training continues
/// with the rest. Unfinished episodes are not reported.
pub fn run_actors(
    params: &mut PolicyValueParams,
    segmenter: &SoftmaxModel,
    config: &ActorConfig,
) -> Result<ActorReport> {
    if config.workers == 0 {
        return Err(invalid("at least one actor is required"));
    }
    if config.rollout_len == 0 {
        return Err(invalid("rollout length must be positive"));
    }
    let mut workers: Vec<Option<Worker>> = (0..config.workers)
        .map(|id| Worker::new(id, segmenter, config).map(Some))
        .collect::<Result<_>>()?;
    let mut report = ActorReport {
        steps: 0,
        episodes: Vec::new(),
        curve: Vec::new(),
        rejected_updates: 0,
        failed_workers: Vec::new(),
    };
    let mut first = true;
    while report.steps < config.total_steps {
        let snapshot: &PolicyValueParams = params;
        let results: Vec<(usize, std::thread::Result<Collected>)> = std::thread::scope(|scope| {
            let handles: Vec<_> = workers
                .iter_mut()
                .filter_map(|slot| slot.take())
                .map(|mut w| {
                    let id = w.id;
                    let inject = first && config.panic_worker == Some(id);
                    let handle = scope.spawn(move || {
                        catch_unwind(AssertUnwindSafe(move || {
                            if inject {
                                panic!("injected failure in worker {id}");
                            }
                            let out = w.collect(snapshot, segmenter, config);
                            (w, out)
                        }))
                    });
                    (id, handle)
                })
                .collect();
            handles
                .into_iter()
                .map(|(id, h)| (id, h.join().unwrap_or_else(Err)))
                .collect()
        });
        first = false;
        if results.is_empty() {
            return Err(invalid("every actor failed"));
        }

        let mut rollouts = Vec::with_capacity(results.len());
        let mut ended = Vec::new();
        for (id, result) in results {
            match result {
                Ok((worker, out)) => {
                    let (rollout, finished) = out?;
                    workers[id] = Some(worker);
                    rollouts.push(rollout);
                    ended.extend(finished);
                }
                Err(_) => report.failed_workers.push(id),
            }
        }
        let mut reward_sum = 0.0;
        let mut count = 0;
        let mut entropy = 0.0;
        for rollout in &rollouts {
            let progress = report.steps as f64 / config.total_steps as f64;
            let lr = config.lr * (1.0 - progress).max(0.0);
            let diag = update(
                params,
                std::slice::from_ref(rollout),
                lr,
                config.entropy_coef,
                config.gamma,
            )?;
            if diag.rejected {
                report.rejected_updates += 1;
            }
            entropy += diag.entropy;
            reward_sum += rollout.transitions.iter().map(|t| t.reward).sum::<f64>();
            count += rollout.transitions.len();
            report.steps += rollout.transitions.len();
        }
        let lengths: Vec<f64> = ended.iter().map(|e| e.len() as f64).collect();
        report.curve.push(CurvePoint {
            step: report.steps,
            mean_reward: reward_sum / count.max(1) as f64,
            episode_length: (!lengths.is_empty()).then(|| lengths.iter().sum::<f64>() / lengths.len() as f64),
            entropy: entropy / rollouts.len().max(1) as f64,
            alpha: None,
        });
        report.episodes.extend(ended);
    }
    Ok(report)
}

/// Drives one episode from `world_seed` to termination with `policy`.
pub fn drive_episode<F>(
    track: &TrackConfig,
    world_seed: u64,
    segmenter: &SoftmaxModel,
    mut policy: F,
) -> Result<EpisodeLog>
where
    F: FnMut(&Observation) -> Result<Action>,
{
    let mut world = World::reset(world_seed, track)?;
    let mut obs = observe(&world, segmenter, None)?;
    let mut log = EpisodeLog {
        worker: 0,
        world_seed,
        steps: Vec::new(),
        states: Vec::new(),
    };
    loop {
        let action = policy(&obs)?;
        let outcome = world.step(action)?;
        log.steps.push(StepLog::new(&world, action, &outcome));
        if outcome.done.is_some() {
            return Ok(log);
        }
        obs = observe(&world, segmenter, Some(&obs))?;
    }
}
