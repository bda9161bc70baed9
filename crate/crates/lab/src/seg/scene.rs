use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Class, FEATURE_DIM, N_CLASSES};
use crate::error::{invalid, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Standard deviation of the per-channel Gaussian feature noise.
    pub noise: f64,
    /// Added to every feature, for shifted target domains.
    pub shift: [f64; FEATURE_DIM],
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            height: 16,
            width: 16,
            min_objects: 2,
            max_objects: 5,
            noise: 0.1,
            shift: [0.0; FEATURE_DIM],
        }
    }
}

/// Labelled grid with one feature row per pixel, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSample {
    pub height: usize,
    pub width: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub seed: u64,
}

impl SceneSample {
    /// Builds a sample whose features are the exact class prototypes.
    pub fn from_labels(height: usize, width: usize, labels: Vec<usize>, seed: u64) -> Result<Self> {
        if labels.len() != height * width {
            return Err(invalid(format!("{} labels for a {height}x{width} grid", labels.len())));
        }
        let mut features = Vec::with_capacity(labels.len() * FEATURE_DIM);
        for &l in &labels {
            let class = Class::from_index(l).ok_or_else(|| invalid(format!("label {l} out of range")))?;
            features.extend_from_slice(&class.prototype());
        }
        Ok(Self {
            height,
            width,
            features,
            labels,
            seed,
        })
    }

    pub fn pixels(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        if self.labels.is_empty() {
            FEATURE_DIM
        } else {
            self.features.len() / self.labels.len()
        }
    }

    pub fn feature(&self, p: usize) -> &[f64] {
        let d = self.dim();
        &self.features[p * d..(p + 1) * d]
    }

    pub fn label_counts(&self) -> [usize; N_CLASSES] {
        let mut counts = [0; N_CLASSES];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Rect,
    Ellipse,
}

#[derive(Debug, Clone, Copy)]
struct Placed {
    class: Class,
    shape: Shape,
    top: f64,
    left: f64,
    h: f64,
    w: f64,
}

impl Placed {
    fn covers(&self, r: usize, c: usize) -> bool {
        let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
        match self.shape {
            Shape::Rect => y >= self.top && y < self.top + self.h && x >= self.left && x < self.left + self.w,
            Shape::Ellipse => {
                let dy = (y - self.top - self.h / 2.0) / (self.h / 2.0);
                let dx = (x - self.left - self.w / 2.0) / (self.w / 2.0);
                dx * dx + dy * dy <= 1.0
            }
        }
    }
}

/// Band boundaries (exclusive row ends) for sky, building, sidewalk; road fills the rest.
fn bands(h: usize, rng: &mut impl Rng) -> [usize; 3] {
    if h < 4 {
        return [h.min(1), h.min(2), h.min(3)];
    }
    let jitter = |rng: &mut dyn rand::RngCore, frac: f64| {
        let j: f64 = rng.random_range(-0.05..0.05);
        ((frac + j) * h as f64).round() as usize
    };
    let sky = jitter(rng, 0.25).clamp(1, h - 3);
    let building = jitter(rng, 0.45).clamp(sky + 1, h - 2);
    let sidewalk = jitter(rng, 0.6).clamp(building + 1, h - 1);
    [sky, building, sidewalk]
}

/// Deterministic scene for `seed`: background bands with placed objects.
pub fn generate_scene(seed: u64, config: &SceneConfig) -> Result<SceneSample> {
    let (h, w) = (config.height, config.width);
    if h == 0 || w == 0 {
        return Err(invalid(format!("scene has zero area ({h}x{w})")));
    }
    if config.min_objects > config.max_objects {
        return Err(invalid("min_objects exceeds max_objects"));
    }
    if !(config.noise.is_finite() && config.noise >= 0.0) {
        return Err(invalid(format!("noise must be nonnegative, got {}", config.noise)));
    }
    let mut layout = rng::stream(seed, "scene-layout");
    let [sky, building, sidewalk] = bands(h, &mut layout);
    let background = |r: usize| {
        if r < sky {
            Class::Sky
        } else if r < building {
            Class::Building
        } else if r < sidewalk {
            Class::Sidewalk
        } else {
            Class::Road
        }
    };

    let count = layout.random_range(config.min_objects..=config.max_objects);
    let mut objects = Vec::with_capacity(count);
    for _ in 0..count {
        let class = Class::OBJECTS[layout.random_range(0..Class::OBJECTS.len())];
        let shape = if layout.random_bool(0.5) {
            Shape::Rect
        } else {
            Shape::Ellipse
        };
        let (hf, wf) = match class {
            Class::Car => (0.18, 0.22),
            Class::Bus => (0.25, 0.32),
            Class::Person => (0.22, 0.08),
            _ => (0.18, 0.14),
        };
        let oh = (hf * h as f64 * layout.random_range(0.8..1.25)).max(1.0);
        let ow = (wf * w as f64 * layout.random_range(0.8..1.25)).max(1.0);
        // vehicles stand on the road, pedestrians and bikes near the kerb
        let base = match class {
            Class::Car | Class::Bus => layout.random_range(sidewalk as f64..=h as f64),
            _ => layout.random_range(building as f64..=h as f64),
        };
        objects.push(Placed {
            class,
            shape,
            top: (base - oh).max(0.0),
            left: layout.random_range(0.0..(w as f64 - ow).max(0.0) + 1.0),
            h: oh,
            w: ow,
        });
    }

    let paint = |objects: &[Placed]| -> Vec<usize> {
        let mut labels = Vec::with_capacity(h * w);
        for r in 0..h {
            for c in 0..w {
                let class = objects
                    .iter()
                    .rev()
                    .find(|o| o.covers(r, c))
                    .map_or_else(|| background(r), |o| o.class);
                labels.push(class.index());
            }
        }
        labels
    };
    let wanted: Vec<usize> = (0..h).map(|r| background(r).index()).collect();
    let mut labels = paint(&objects);
    // objects may not hide a whole background band
    while !wanted.iter().all(|k| labels.contains(k)) {
        objects.pop();
        labels = paint(&objects);
    }

    let mut noise_rng = rng::stream(seed, "scene-noise");
    let normal = Normal::new(0.0, config.noise.max(f64::MIN_POSITIVE)).expect("valid sd");
    let mut features = Vec::with_capacity(h * w * FEATURE_DIM);
    for &l in &labels {
        let proto = Class::ALL[l].prototype();
        for k in 0..FEATURE_DIM {
            let e = if config.noise > 0.0 {
                normal.sample(&mut noise_rng)
            } else {
                0.0
            };
            features.push(proto[k] + config.shift[k] + e);
        }
    }
    Ok(SceneSample {
        height: h,
        width: w,
        features,
        labels,
        seed,
    })
}

/// Class whose prototype is closest in l2 to the feature row.
pub fn nearest_prototype(x: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for c in Class::ALL {
        let d: f64 = c.prototype().iter().zip(x).map(|(p, v)| (p - v) * (p - v)).sum();
        if d < best.0 {
            best = (d, c.index());
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_scene() {
        let cfg = SceneConfig::default();
        assert_eq!(generate_scene(4, &cfg).unwrap(), generate_scene(4, &cfg).unwrap());
        assert_ne!(generate_scene(4, &cfg).unwrap(), generate_scene(5, &cfg).unwrap());
    }

    #[test]
    fn noiseless_scenes_are_separable() {
        let cfg = SceneConfig {
            noise: 0.0,
            ..SceneConfig::default()
        };
        for seed in 0..20 {
            let s = generate_scene(seed, &cfg).unwrap();
            for p in 0..s.pixels() {
                assert_eq!(nearest_prototype(s.feature(p)), s.labels[p]);
            }
        }
    }

    #[test]
    fn zero_area_rejected() {
        let cfg = SceneConfig {
            height: 0,
            ..SceneConfig::default()
        };
        assert!(generate_scene(1, &cfg).is_err());
    }

    #[test]
    fn background_bands_always_present() {
        let cfg = SceneConfig::default();
        for seed in 0..100 {
            let counts = generate_scene(seed, &cfg).unwrap().label_counts();
            for bg in Class::BACKGROUND {
                assert!(counts[bg.index()] > 0, "seed {seed} lacks {}", bg.name());
            }
        }
    }
}
