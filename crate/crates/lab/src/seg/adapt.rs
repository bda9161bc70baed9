use serde::Serialize;
use sevot::Histogram;

use super::model::SoftmaxModel;
use super::scene::SceneSample;
use super::train::{onehot_targets, train, PixelTarget, SegLoss, TrainConfig};
use crate::error::{invalid, Result};

/// Conservative target `(1 - lambda) onehot(argmax) + lambda pred`, or `None`
/// when the prediction's peak mass is below `threshold`.
pub fn smooth_pseudo_label(pred: &Histogram, lambda: f64, threshold: f64) -> Option<Histogram> {
    if pred.max() < threshold {
        return None;
    }
    let top = pred.argmax();
    let mass: Vec<f64> = pred
        .as_slice()
        .iter()
        .enumerate()
        .map(|(k, &p)| lambda * p + if k == top { 1.0 - lambda } else { 0.0 })
        .collect();
    Some(Histogram::unnormalized(mass).expect("convex combination of histograms"))
}

/// Conservative targets for every pixel and the accepted fraction.
pub fn pseudo_labels(
    model: &SoftmaxModel,
    samples: &[SceneSample],
    lambda: f64,
    threshold: f64,
) -> Result<(Vec<Vec<PixelTarget>>, f64)> {
    let mut accepted = 0usize;
    let mut total = 0usize;
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let targets: Vec<PixelTarget> = model
            .forward(s)?
            .iter()
            .map(|h| match smooth_pseudo_label(h, lambda, threshold) {
                Some(t) => {
                    accepted += 1;
                    PixelTarget::Soft(t)
                }
                None => PixelTarget::Ignore,
            })
            .collect();
        total += targets.len();
        out.push(targets);
    }
    let fraction = if total == 0 {
        0.0
    } else {
        accepted as f64 / total as f64
    };
    Ok((out, fraction))
}

/// Hard argmax pseudo-labels with the same confidence filter.
pub fn hard_pseudo_labels(
    model: &SoftmaxModel,
    samples: &[SceneSample],
    threshold: f64,
) -> Result<Vec<Vec<PixelTarget>>> {
    samples
        .iter()
        .map(|s| {
            Ok(model
                .forward(s)?
                .iter()
                .map(|h| {
                    if h.max() < threshold {
                        PixelTarget::Ignore
                    } else {
                        PixelTarget::Class(h.argmax())
                    }
                })
                .collect())
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SelfTrainConfig {
    pub rounds: usize,
    pub lambda: f64,
    pub threshold: f64,
    /// Must be [`SegLoss::Sinkhorn`].
    pub loss: SegLoss,
    pub train: TrainConfig,
    /// Keep the labelled source scenes in every retraining round.
    pub keep_source: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundReport {
    pub round: usize,
    pub accepted_fraction: f64,
    pub skipped: bool,
    pub losses: Vec<f64>,
}

/// Rounds of predict, smooth, retrain on the unlabelled target scenes.
pub fn self_train(
    model: &mut SoftmaxModel,
    source: &[SceneSample],
    target: &[SceneSample],
    config: &SelfTrainConfig,
) -> Result<Vec<RoundReport>> {
    if !matches!(config.loss, SegLoss::Sinkhorn { .. }) {
        return Err(invalid("self-training retrains with the sinkhorn loss"));
    }
    if !(0.0..=1.0).contains(&config.lambda) || !(0.0..=1.0).contains(&config.threshold) {
        return Err(invalid("lambda and threshold must lie in [0, 1]"));
    }
    let mut reports = Vec::with_capacity(config.rounds);
    for round in 0..config.rounds {
        let (targets, accepted_fraction) = pseudo_labels(model, target, config.lambda, config.threshold)?;
        if accepted_fraction == 0.0 {
            eprintln!("warning: self-training round {round} accepted no pixels, skipped");
            reports.push(RoundReport {
                round,
                accepted_fraction,
                skipped: true,
                losses: Vec::new(),
            });
            continue;
        }
        let mut data: Vec<SceneSample> = target.to_vec();
        let mut all_targets = targets;
        if config.keep_source {
            data.extend_from_slice(source);
            all_targets.extend(source.iter().map(onehot_targets));
        }
        let cfg = TrainConfig {
            seed: config.train.seed.wrapping_add(round as u64),
            ..config.train
        };
        let losses = train(model, &data, &all_targets, &config.loss, &cfg)?;
        reports.push(RoundReport {
            round,
            accepted_fraction,
            skipped: false,
            losses,
        });
    }
    Ok(reports)
}
