use rand::Rng;
use serde::Serialize;
use sevot::ground::{
    centroid_distances, class_centroids, l2_normalize, update_learned_matrix, Centroids, DistanceTable,
};
use sevot::{GroundMatrix, MetricTransform};

use super::actors::{run_actors, ActorConfig, CurvePoint, EpisodeLog};
use super::PolicyValueParams;
use crate::drive::{TrackConfig, World, WorldState};
use crate::error::{invalid, Result};
use crate::rng;
use crate::seg::{onehot_targets, train, SegLoss, SoftmaxModel, TrainConfig};

/// Mixing weights of the predefined matrix, one per round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlternationSchedule {
    alphas: Vec<f64>,
    pub steps_per_round: usize,
}

pub const ALPHA_START: f64 = 10.0;

impl AlternationSchedule {
    /// Linear decay from 10 to 0; a single round uses 0.
    pub fn linear(rounds: usize, steps_per_round: usize) -> Self {
        let alphas = (0..rounds)
            .map(|r| {
                if rounds == 1 {
                    0.0
                } else {
                    ALPHA_START * (1.0 - r as f64 / (rounds - 1) as f64)
                }
            })
            .collect();
        Self {
            alphas,
            steps_per_round,
        }
    }

    /// Explicit sequence; must be nonincreasing, start at 10 when it has more
    /// than one round, and end at 0.
    pub fn new(alphas: Vec<f64>, steps_per_round: usize) -> Result<Self> {
        if alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(invalid("alpha values must be finite and nonnegative"));
        }
        if alphas.windows(2).any(|w| w[1] > w[0]) {
            return Err(invalid("alpha schedule must not increase"));
        }
        if alphas.len() > 1 && alphas[0] != ALPHA_START {
            return Err(invalid(format!("alpha schedule must start at {ALPHA_START}")));
        }
        if alphas.last().is_some_and(|&a| a != 0.0) {
            return Err(invalid("alpha schedule must end at 0"));
        }
        Ok(Self {
            alphas,
            steps_per_round,
        })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn rounds(&self) -> usize {
        self.alphas.len()
    }
}

#[derive(Debug, Clone)]
pub struct AlternationConfig {
    /// `total_steps` is replaced by the schedule's steps per round.
    pub actors: ActorConfig,
    pub pool_frames: usize,
    /// Segmenter fine-tuning during agent training; `None` freezes it.
    pub finetune: Option<TrainConfig>,
    pub finetune_frames: usize,
    pub seed: u64,
}

impl Default for AlternationConfig {
    fn default() -> Self {
        Self {
            actors: ActorConfig::default(),
            pool_frames: 64,
            finetune: Some(TrainConfig {
                lr: 0.05,
                steps: 20,
                batch: 4,
                seed: 0,
            }),
            finetune_frames: 32,
            seed: 0,
        }
    }
}

/// Rebuilt matrix together with the inputs it was computed from.
#[derive(Debug, Clone, Serialize)]
pub struct LearnedMatrix {
    pub matrix: GroundMatrix,
    /// l2-normalized penultimate features of the pooled pixels, row-major.
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub width: usize,
    pub centroids: Centroids,
    #[serde(skip)]
    pub distances: DistanceTable,
}

/// Mixes `predefined` with the l1 distances between class centroids of the
/// normalized segmenter features over `frames`. Pairs whose distance is
/// missing keep their entry from `previous`.
pub fn learn_matrix(
    segmenter: &SoftmaxModel,
    frames: &[WorldState],
    track: &TrackConfig,
    previous: &GroundMatrix,
    predefined: &GroundMatrix,
    alpha: f64,
    f: &MetricTransform,
) -> Result<LearnedMatrix> {
    let n = predefined.n();
    if previous.n() != n || segmenter.classes() != n {
        return Err(sevot::Error::DimensionMismatch {
            expected: n,
            found: previous.n().max(segmenter.classes()),
        }
        .into());
    }
    let width = segmenter.width();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for state in frames {
        let view = World::from_state(track, state.clone())?.render();
        let mut rows = segmenter.features(&view)?;
        for row in rows.chunks_mut(width) {
            l2_normalize(row);
        }
        features.extend(rows);
        labels.extend_from_slice(&view.labels);
    }
    let centroids = class_centroids(features.chunks(width).zip(labels.iter().copied()), n, width)?;
    let distances = centroid_distances(&centroids);
    let mixed = update_learned_matrix(predefined, &distances, alpha, f)?;
    let mut costs = mixed.as_slice().to_vec();
    for i in 0..n {
        for j in 0..n {
            if i != j && distances.get(i, j).is_none() {
                costs[i * n + j] = previous.get(i, j);
            }
        }
    }
    Ok(LearnedMatrix {
        matrix: GroundMatrix::new(n, costs)?,
        features,
        labels,
        width,
        centroids,
        distances,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub alpha: f64,
    /// Matrix in force while this round trained the agent.
    pub previous: GroundMatrix,
    pub learned: LearnedMatrix,
    pub mean_episode_length: Option<f64>,
    pub mean_episode_reward: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlternationResult {
    pub matrix: GroundMatrix,
    pub rounds: Vec<RoundRecord>,
    pub curve: Vec<CurvePoint>,
    #[serde(skip)]
    pub episodes: Vec<EpisodeLog>,
}

fn sample_states(episodes: &[EpisodeLog], count: usize, rng: &mut impl Rng) -> Vec<WorldState> {
    let all: Vec<&WorldState> = episodes.iter().flat_map(|e| &e.states).collect();
    if all.is_empty() {
        return Vec::new();
    }
    (0..count)
        .map(|_| all[rng.random_range(0..all.len())].clone())
        .collect()
}

/// Alternates agent training under a fixed matrix with rebuilding
/// the matrix from segmenter features. With no rounds the
/// predefined matrix is returned unchanged.
pub fn alternate_optimize(
    segmenter: &mut SoftmaxModel,
    params: &mut PolicyValueParams,
    schedule: &AlternationSchedule,
    predefined: &GroundMatrix,
    f: &MetricTransform,
    config: &AlternationConfig,
) -> Result<AlternationResult> {
    f.validate()?;
    let mut current = predefined.transformed(f);
    let mut result = AlternationResult {
        matrix: predefined.clone(),
        rounds: Vec::new(),
        curve: Vec::new(),
        episodes: Vec::new(),
    };
    let mut sampler = rng::stream(config.seed, "alternation-pool");
    for (round, &alpha) in schedule.alphas().iter().enumerate() {
        let actors = ActorConfig {
            total_steps: schedule.steps_per_round,
            seed: rng::derive(config.seed, "alternation-actors", round as u64),
            keep_states: true,
            ..config.actors.clone()
        };
        let report = run_actors(params, segmenter, &actors)?;
        let offset = result.curve.last().map_or(0, |p| p.step);
        result.curve.extend(report.curve.iter().map(|p| CurvePoint {
            step: p.step + offset,
            alpha: Some(alpha),
            ..p.clone()
        }));

        if let Some(tc) = &config.finetune {
            let frames = sample_states(&report.episodes, config.finetune_frames, &mut sampler);
            if !frames.is_empty() {
                let views = frames
                    .into_iter()
                    .map(|s| Ok(World::from_state(&actors.track, s)?.render()))
                    .collect::<Result<Vec<_>>>()?;
                let targets: Vec<_> = views.iter().map(onehot_targets).collect();
                let cfg = TrainConfig {
                    seed: rng::derive(config.seed, "alternation-finetune", round as u64),
                    ..*tc
                };
                train(
                    segmenter,
                    &views,
                    &targets,
                    &SegLoss::Wasserstein(current.clone()),
                    &cfg,
                )?;
            }
        }

        let pool = sample_states(&report.episodes, config.pool_frames, &mut sampler);
        let learned = learn_matrix(segmenter, &pool, &actors.track, &current, predefined, alpha, f)?;
        let lengths: Vec<f64> = report.episodes.iter().map(|e| e.len() as f64).collect();
        let rewards: Vec<f64> = report.episodes.iter().map(EpisodeLog::total_reward).collect();
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let previous = std::mem::replace(&mut current, learned.matrix.clone());
        result.rounds.push(RoundRecord {
            round,
            alpha,
            previous,
            learned,
            mean_episode_length: mean(&lengths),
            mean_episode_reward: mean(&rewards),
        });
        result.episodes.extend(report.episodes.into_iter().map(|mut e| {
            e.states = Vec::new();
            e
        }));
        result.matrix = current.clone();
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_schedule_shapes() {
        assert_eq!(AlternationSchedule::linear(5, 1).alphas(), &[10.0, 7.5, 5.0, 2.5, 0.0]);
        assert_eq!(AlternationSchedule::linear(1, 1).alphas(), &[0.0]);
        assert!(AlternationSchedule::linear(0, 1).alphas().is_empty());
        assert!(AlternationSchedule::new(vec![10.0, 12.0, 0.0], 1).is_err());
        assert!(AlternationSchedule::new(vec![10.0, 5.0], 1).is_err());
        assert!(AlternationSchedule::new(vec![10.0, 5.0, 0.0], 1).is_ok());
    }
}
