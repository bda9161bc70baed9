use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sevot::Histogram;

use super::scene::SceneSample;
use crate::error::{invalid, Error, Result};
use crate::rng;

/// Per-pixel softmax classifier with an optional tanh hidden layer.
///
/// Parameters live in one flat vector: hidden weights (`hidden x input`,
/// row-major), hidden bias, output weights (`classes x width`), output bias,
/// where `width` is the hidden width or the input size when there is no
/// hidden layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxModel {
    input: usize,
    hidden: usize,
    classes: usize,
    params: Vec<f64>,
}

impl SoftmaxModel {
    /// All-zero parameters.
    pub fn zeros(input: usize, hidden: usize, classes: usize) -> Self {
        let len = Self::count(input, hidden, classes);
        Self {
            input,
            hidden,
            classes,
            params: vec![0.0; len],
        }
    }

    /// Gaussian initialisation scaled by fan-in.
    pub fn init(input: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let mut m = Self::zeros(input, hidden, classes);
        let mut rng = rng::stream(seed, "seg-init");
        let width = m.width();
        let out_sd = 1.0 / (width as f64).sqrt();
        if hidden > 0 {
            let sd = 1.0 / (input as f64).sqrt();
            let normal = Normal::new(0.0, sd).expect("valid sd");
            for w in &mut m.params[..hidden * input] {
                *w = normal.sample(&mut rng);
            }
        }
        let normal = Normal::new(0.0, out_sd).expect("valid sd");
        let start = m.output_offset();
        for w in &mut m.params[start..start + classes * width] {
            *w = normal.sample(&mut rng);
        }
        m
    }

    pub fn from_params(input: usize, hidden: usize, classes: usize, params: Vec<f64>) -> Result<Self> {
        let expected = Self::count(input, hidden, classes);
        if params.len() != expected {
            return Err(invalid(format!(
                "expected {expected} parameters, found {}",
                params.len()
            )));
        }
        Ok(Self {
            input,
            hidden,
            classes,
            params,
        })
    }

    fn count(input: usize, hidden: usize, classes: usize) -> usize {
        let width = if hidden > 0 { hidden } else { input };
        let h = if hidden > 0 { hidden * input + hidden } else { 0 };
        h + classes * width + classes
    }

    pub fn input(&self) -> usize {
        self.input
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Width of the penultimate layer.
    pub fn width(&self) -> usize {
        if self.hidden > 0 {
            self.hidden
        } else {
            self.input
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub(crate) fn output_offset(&self) -> usize {
        if self.hidden > 0 {
            self.hidden * self.input + self.hidden
        } else {
            0
        }
    }

    /// Penultimate activations and class probabilities for one pixel.
    pub(crate) fn forward_pixel(&self, x: &[f64], act: &mut [f64], probs: &mut [f64]) {
        if self.hidden > 0 {
            let (w1, rest) = self.params.split_at(self.hidden * self.input);
            let b1 = &rest[..self.hidden];
            for (k, a) in act.iter_mut().enumerate() {
                let row = &w1[k * self.input..(k + 1) * self.input];
                let z: f64 = b1[k] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                *a = z.tanh();
            }
        } else {
            act.copy_from_slice(x);
        }
        let width = self.width();
        let off = self.output_offset();
        let w2 = &self.params[off..off + self.classes * width];
        let b2 = &self.params[off + self.classes * width..];
        for (j, p) in probs.iter_mut().enumerate() {
            let row = &w2[j * width..(j + 1) * width];
            *p = b2[j] + row.iter().zip(act.iter()).map(|(w, a)| w * a).sum::<f64>();
        }
        softmax_in_place(probs);
    }

    fn check(&self, sample: &SceneSample) -> Result<()> {
        if sample.dim() != self.input {
            return Err(Error::Core(sevot::Error::DimensionMismatch {
                expected: self.input,
                found: sample.dim(),
            }));
        }
        Ok(())
    }

    /// Class histogram for every pixel.
    pub fn forward(&self, sample: &SceneSample) -> Result<Vec<Histogram>> {
        self.check(sample)?;
        let mut act = vec![0.0; self.width()];
        (0..sample.pixels())
            .map(|p| {
                let mut probs = vec![0.0; self.classes];
                self.forward_pixel(sample.feature(p), &mut act, &mut probs);
                Ok(Histogram::unnormalized(probs)?)
            })
            .collect()
    }

    /// Argmax class per pixel.
    pub fn predict(&self, sample: &SceneSample) -> Result<Vec<usize>> {
        Ok(self.forward(sample)?.iter().map(Histogram::argmax).collect())
    }

    /// Penultimate activations, one row of [`width`](Self::width) per pixel.
    pub fn features(&self, sample: &SceneSample) -> Result<Vec<f64>> {
        self.check(sample)?;
        let width = self.width();
        let mut out = vec![0.0; sample.pixels() * width];
        let mut probs = vec![0.0; self.classes];
        for (p, act) in out.chunks_mut(width).enumerate() {
            self.forward_pixel(sample.feature(p), act, &mut probs);
        }
        Ok(out)
    }
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seg::{generate_scene, SceneConfig, FEATURE_DIM, N_CLASSES};

    #[test]
    fn zero_weights_give_uniform_output() {
        let m = SoftmaxModel::zeros(FEATURE_DIM, 0, N_CLASSES);
        let s = generate_scene(1, &SceneConfig::default()).unwrap();
        for h in m.forward(&s).unwrap() {
            for &v in h.as_slice() {
                assert!((v - 1.0 / N_CLASSES as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn outputs_are_histograms() {
        let m = SoftmaxModel::init(FEATURE_DIM, 8, N_CLASSES, 3);
        let s = generate_scene(2, &SceneConfig::default()).unwrap();
        for h in m.forward(&s).unwrap() {
            assert!((h.total() - 1.0).abs() < 1e-6);
        }
        assert_eq!(m.features(&s).unwrap().len(), s.pixels() * 8);
    }

    #[test]
    fn large_logit_takes_all_mass() {
        let mut m = SoftmaxModel::zeros(FEATURE_DIM, 0, N_CLASSES);
        let bias = m.output_offset() + N_CLASSES * FEATURE_DIM;
        m.params_mut()[bias + 5] = 50.0;
        let s = generate_scene(3, &SceneConfig::default()).unwrap();
        for h in m.forward(&s).unwrap() {
            assert!(h[5] > 1.0 - 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let m = SoftmaxModel::zeros(4, 0, N_CLASSES);
        let s = generate_scene(3, &SceneConfig::default()).unwrap();
        assert!(m.forward(&s).is_err());
        assert!(SoftmaxModel::from_params(3, 0, 8, vec![0.0; 5]).is_err());
    }
}
