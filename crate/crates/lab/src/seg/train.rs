use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sevot::metrics::ConfusionMatrix;
use sevot::ot::{onehot_wasserstein, sinkhorn, SinkhornConfig};
use sevot::{GroundMatrix, Histogram};

use super::model::SoftmaxModel;
use super::scene::SceneSample;
use crate::error::{invalid, Error, Result};
use crate::rng;

#[derive(Debug, Clone)]
pub enum SegLoss {
    CrossEntropy,
    /// One-hot Wasserstein under an already transformed matrix.
    Wasserstein(GroundMatrix),
    /// Entropic transport, required for soft targets.
    Sinkhorn {
        matrix: GroundMatrix,
        config: SinkhornConfig,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PixelTarget {
    Class(usize),
    Soft(Histogram),
    /// Excluded from the loss and from the pixel count.
    Ignore,
}

pub fn onehot_targets(sample: &SceneSample) -> Vec<PixelTarget> {
    sample.labels.iter().map(|&l| PixelTarget::Class(l)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub steps: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.5,
            steps: 300,
            batch: 4,
            seed: 0,
        }
    }
}

/// Loss and `dL/dlogits` for one pixel.
fn pixel_loss(probs: &[f64], logits_grad: &mut [f64], target: &PixelTarget, loss: &SegLoss) -> Result<f64> {
    let n = probs.len();
    let (value, ds) = match (loss, target) {
        (_, PixelTarget::Ignore) => return Ok(0.0),
        (SegLoss::CrossEntropy, PixelTarget::Class(j)) => {
            let j = check_class(*j, n)?;
            for (k, g) in logits_grad.iter_mut().enumerate() {
                *g = probs[k] - if k == j { 1.0 } else { 0.0 };
            }
            return Ok(-probs[j].max(f64::MIN_POSITIVE).ln());
        }
        (SegLoss::CrossEntropy | SegLoss::Wasserstein(_), PixelTarget::Soft(_)) => {
            return Err(invalid("soft targets need the sinkhorn loss"));
        }
        (SegLoss::Wasserstein(d), PixelTarget::Class(j)) => {
            let s = Histogram::unnormalized(probs.to_vec())?;
            let r = onehot_wasserstein(&s, check_class(*j, n)?, d)?;
            (r.cost, r.grad_source)
        }
        (SegLoss::Sinkhorn { matrix, config }, target) => {
            let t = match target {
                PixelTarget::Class(j) => Histogram::onehot(n, check_class(*j, n)?)?,
                PixelTarget::Soft(t) => t.clone(),
                PixelTarget::Ignore => unreachable!(),
            };
            let s = Histogram::unnormalized(probs.to_vec())?;
            let r = sinkhorn(&s, &t, matrix, config)?;
            (r.objective, r.grad_source)
        }
    };
    // softmax Jacobian: dL/dz_k = s_k (g_k - <s, g>)
    let mean: f64 = probs.iter().zip(&ds).map(|(p, g)| p * g).sum();
    for (k, g) in logits_grad.iter_mut().enumerate() {
        *g = probs[k] * (ds[k] - mean);
    }
    Ok(value)
}

fn check_class(j: usize, n: usize) -> Result<usize> {
    if j < n {
        Ok(j)
    } else {
        Err(sevot::Error::ClassOutOfRange { index: j, n }.into())
    }
}

/// Summed loss, summed gradient and pixel count for one sample.
fn sample_loss_grad(
    model: &SoftmaxModel,
    sample: &SceneSample,
    targets: &[PixelTarget],
    loss: &SegLoss,
) -> Result<(f64, Vec<f64>, usize)> {
    if targets.len() != sample.pixels() {
        return Err(invalid(format!(
            "{} targets for {} pixels",
            targets.len(),
            sample.pixels()
        )));
    }
    if sample.dim() != model.input() {
        return Err(sevot::Error::DimensionMismatch {
            expected: model.input(),
            found: sample.dim(),
        }
        .into());
    }
    let (input, hidden, classes, width) = (model.input(), model.hidden(), model.classes(), model.width());
    let params = model.params();
    let off = model.output_offset();
    let mut grad = vec![0.0; params.len()];
    let mut act = vec![0.0; width];
    let mut probs = vec![0.0; classes];
    let mut dz = vec![0.0; classes];
    let mut da = vec![0.0; width];
    let mut total = 0.0;
    let mut count = 0;
    for (p, target) in targets.iter().enumerate() {
        if matches!(target, PixelTarget::Ignore) {
            continue;
        }
        let x = sample.feature(p);
        model.forward_pixel(x, &mut act, &mut probs);
        total += pixel_loss(&probs, &mut dz, target, loss)?;
        count += 1;
        let (gw2, gb2) = grad[off..].split_at_mut(classes * width);
        for j in 0..classes {
            for k in 0..width {
                gw2[j * width + k] += dz[j] * act[k];
            }
            gb2[j] += dz[j];
        }
        if hidden > 0 {
            let w2 = &params[off..off + classes * width];
            for k in 0..width {
                let back: f64 = (0..classes).map(|j| w2[j * width + k] * dz[j]).sum();
                da[k] = back * (1.0 - act[k] * act[k]);
            }
            let (gw1, rest) = grad.split_at_mut(hidden * input);
            for k in 0..hidden {
                for i in 0..input {
                    gw1[k * input + i] += da[k] * x[i];
                }
                rest[k] += da[k];
            }
        }
    }
    Ok((total, grad, count))
}

/// Pointwise-average loss over every non-ignored pixel of the batch and its
/// exact gradient with respect to the model parameters.
pub fn batch_loss_grad(
    model: &SoftmaxModel,
    batch: &[(&SceneSample, &[PixelTarget])],
    loss: &SegLoss,
) -> Result<(f64, Vec<f64>)> {
    let parts: Vec<Result<(f64, Vec<f64>, usize)>> = batch
        .par_iter()
        .map(|(s, t)| sample_loss_grad(model, s, t, loss))
        .collect();
    let mut total = 0.0;
    let mut grad = vec![0.0; model.params().len()];
    let mut count = 0;
    for part in parts {
        let (l, g, c) = part?;
        total += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        count += c;
    }
    if count == 0 {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / count as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((total * scale, grad))
}

/// Plain SGD on uniformly drawn mini-batches. Returns the loss of every step.
pub fn train(
    model: &mut SoftmaxModel,
    data: &[SceneSample],
    targets: &[Vec<PixelTarget>],
    loss: &SegLoss,
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    if data.len() != targets.len() {
        return Err(invalid("one target grid per sample required"));
    }
    if data.is_empty() || config.batch == 0 {
        return Err(invalid("training needs data and a positive batch size"));
    }
    let mut rng = rng::stream(config.seed, "seg-batches");
    let mut curve = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let batch: Vec<(&SceneSample, &[PixelTarget])> = (0..config.batch)
            .map(|_| {
                let i = rng.random_range(0..data.len());
                (&data[i], targets[i].as_slice())
            })
            .collect();
        let (value, grad) = batch_loss_grad(model, &batch, loss)?;
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { step, loss: value });
        }
        for (p, g) in model.params_mut().iter_mut().zip(&grad) {
            *p -= config.lr * g;
        }
        curve.push(value);
    }
    Ok(curve)
}

/// Confusion counts of the model's argmax predictions.
pub fn evaluate(model: &SoftmaxModel, samples: &[SceneSample]) -> Result<ConfusionMatrix> {
    let parts: Vec<Result<ConfusionMatrix>> = samples
        .par_iter()
        .map(|s| {
            let pred = model.predict(s)?;
            Ok(sevot::metrics::confusion(
                model.classes(),
                std::slice::from_ref(&pred),
                std::slice::from_ref(&s.labels),
            )?)
        })
        .collect();
    let mut cm = ConfusionMatrix::new(model.classes());
    for part in parts {
        cm.merge(&part?)?;
    }
    Ok(cm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seg::{severity_matrix, Class, FEATURE_DIM, N_CLASSES};

    fn tiny() -> SceneSample {
        let labels = vec![
            Class::Road.index(),
            Class::Car.index(),
            Class::Person.index(),
            Class::Sky.index(),
        ];
        let mut s = SceneSample::from_labels(2, 2, labels, 0).unwrap();
        for (k, v) in s.features.iter_mut().enumerate() {
            *v += 0.03 * ((k * 7 % 5) as f64 - 2.0);
        }
        s
    }

    #[test]
    fn perfect_prediction_has_zero_ce() {
        let mut m = SoftmaxModel::zeros(FEATURE_DIM, 0, N_CLASSES);
        let bias = m.output_offset() + N_CLASSES * FEATURE_DIM;
        m.params_mut()[bias + 1] = 800.0;
        let s = SceneSample::from_labels(1, 1, vec![1], 0).unwrap();
        let (l, _) = batch_loss_grad(&m, &[(&s, &onehot_targets(&s))], &SegLoss::CrossEntropy).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn soft_target_needs_sinkhorn() {
        let m = SoftmaxModel::zeros(FEATURE_DIM, 0, N_CLASSES);
        let s = SceneSample::from_labels(1, 1, vec![1], 0).unwrap();
        let t = vec![PixelTarget::Soft(Histogram::uniform(N_CLASSES).unwrap())];
        let w = SegLoss::Wasserstein(severity_matrix());
        assert!(batch_loss_grad(&m, &[(&s, &t)], &w).is_err());
        assert!(batch_loss_grad(&m, &[(&s, &t)], &SegLoss::CrossEntropy).is_err());
    }

    fn finite_difference_check(loss: &SegLoss, targets: Vec<PixelTarget>, seed: u64) {
        let s = tiny();
        let mut m = SoftmaxModel::init(FEATURE_DIM, 4, N_CLASSES, seed);
        let (_, grad) = batch_loss_grad(&m, &[(&s, &targets)], loss).unwrap();
        let h = 1e-5;
        for k in 0..m.params().len() {
            let orig = m.params()[k];
            m.params_mut()[k] = orig + h;
            let (up, _) = batch_loss_grad(&m, &[(&s, &targets)], loss).unwrap();
            m.params_mut()[k] = orig - h;
            let (down, _) = batch_loss_grad(&m, &[(&s, &targets)], loss).unwrap();
            m.params_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let err = (numeric - grad[k]).abs() / numeric.abs().max(grad[k].abs()).max(1e-6);
            assert!(err < 1e-5, "param {k}: analytic {} numeric {numeric}", grad[k]);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let s = tiny();
        for seed in 0..3 {
            finite_difference_check(&SegLoss::CrossEntropy, onehot_targets(&s), seed);
            finite_difference_check(&SegLoss::Wasserstein(severity_matrix()), onehot_targets(&s), seed);
            let soft: Vec<PixelTarget> = s
                .labels
                .iter()
                .map(|&l| {
                    let mut v = vec![0.02; N_CLASSES];
                    v[l] = 1.0 - 0.02 * (N_CLASSES - 1) as f64;
                    PixelTarget::Soft(Histogram::new(v).unwrap())
                })
                .collect();
            let sk = SegLoss::Sinkhorn {
                matrix: severity_matrix(),
                config: SinkhornConfig::new(0.5),
            };
            finite_difference_check(&sk, soft, seed);
        }
    }

    #[test]
    fn zero_lr_leaves_model_unchanged() {
        let data = vec![tiny()];
        let targets = vec![onehot_targets(&data[0])];
        let mut m = SoftmaxModel::init(FEATURE_DIM, 4, N_CLASSES, 9);
        let before = m.clone();
        let cfg = TrainConfig {
            lr: 0.0,
            steps: 5,
            batch: 1,
            seed: 1,
        };
        train(&mut m, &data, &targets, &SegLoss::CrossEntropy, &cfg).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn divergence_is_reported() {
        let data = vec![tiny()];
        let targets = vec![onehot_targets(&data[0])];
        let mut m = SoftmaxModel::init(FEATURE_DIM, 0, N_CLASSES, 9);
        m.params_mut()[0] = f64::NAN;
        let cfg = TrainConfig {
            lr: 0.1,
            steps: 3,
            batch: 1,
            seed: 1,
        };
        let err = train(&mut m, &data, &targets, &SegLoss::CrossEntropy, &cfg).unwrap_err();
        assert!(matches!(err, Error::Diverged { step: 0, .. }));
    }
}
