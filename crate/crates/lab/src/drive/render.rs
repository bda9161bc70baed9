use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::World;
use crate::error::{invalid, Result};
use crate::rng;
use crate::seg::{Class, SceneSample, SoftmaxModel, FEATURE_DIM};

const CAMERA_HEIGHT: f64 = 1.5;
const WALL_HEIGHT: f64 = 8.0;
const HORIZON: f64 = 0.4;
/// Side of the pooled latent grid.
pub const POOL: usize = 4;
/// speed, goal distance, damage, then the one-hot command.
pub const MEASUREMENTS: usize = 6;

fn ground_class(world: &World, e: f64) -> Class {
    let cfg = world.config();
    let (left, right) = cfg.road_edges();
    if (left..=right).contains(&e) {
        Class::Road
    } else if e >= left - cfg.sidewalk_width && e <= right + cfg.sidewalk_width {
        Class::Sidewalk
    } else {
        Class::Building
    }
}

/// Pseudo-perspective projection of road, sidewalk, buildings and objects.
pub(super) fn render(world: &World) -> SceneSample {
    let cfg = world.config();
    let s = world.state();
    let (h, w) = (cfg.render_height, cfg.render_width);
    let f = w as f64 / 2.0;
    let hz = HORIZON * h as f64;
    let (sin, cos) = s.heading.sin_cos();
    let e_v = world.lateral_offset();
    let relative = s.heading - cfg.centerline_slope(s.y).atan();
    let (left, right) = cfg.road_edges();
    let walls = (left - cfg.sidewalk_width, right + cfg.sidewalk_width);

    let mut labels = vec![Class::Sky; h * w];
    for r in 0..h {
        let v = r as f64 + 0.5;
        for c in 0..w {
            let l = (c as f64 + 0.5 - f) / f;
            let class = if v > hz {
                let z = CAMERA_HEIGHT * f / (v - hz);
                let lat = l * z;
                let px = s.x + z * sin + lat * cos;
                let py = s.y + z * cos - lat * sin;
                ground_class(world, px - cfg.centerline(py))
            } else {
                let k = relative.sin() + l * relative.cos();
                let wall = if k > 0.0 { walls.1 } else { walls.0 };
                let z = (wall - e_v) / k;
                if k != 0.0 && z > 0.0 && v >= hz - f * (WALL_HEIGHT - CAMERA_HEIGHT) / z {
                    Class::Building
                } else {
                    Class::Sky
                }
            };
            labels[r * w + c] = class;
        }
    }

    let mut visible: Vec<(f64, f64, &super::WorldObject)> = s
        .objects
        .iter()
        .filter_map(|o| {
            let dx = cfg.centerline(o.y) + o.e - s.x;
            let dy = o.y - s.y;
            let z = dx * sin + dy * cos;
            let lat = dx * cos - dy * sin;
            (z + o.half_length > 0.5).then(|| ((z - o.half_length).max(0.5), lat, o))
        })
        .collect();
    visible.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (z, lat, o) in visible {
        let (c0, c1) = (f + f * (lat - o.half_width) / z, f + f * (lat + o.half_width) / z);
        let (r0, r1) = (hz + f * (CAMERA_HEIGHT - o.height) / z, hz + f * CAMERA_HEIGHT / z);
        for r in 0..h {
            let v = r as f64 + 0.5;
            if v < r0 || v > r1 {
                continue;
            }
            for c in 0..w {
                let u = c as f64 + 0.5;
                if u >= c0 && u <= c1 {
                    labels[r * w + c] = o.class;
                }
            }
        }
    }

    let seed = rng::derive(s.seed, "render", s.step as u64);
    let mut noise = rng::stream(seed, "render-noise");
    let normal = Normal::new(0.0, cfg.render_noise.max(f64::MIN_POSITIVE)).expect("valid sd");
    let mut features = Vec::with_capacity(h * w * FEATURE_DIM);
    for class in &labels {
        for p in class.prototype() {
            let e = if cfg.render_noise > 0.0 {
                normal.sample(&mut noise)
            } else {
                0.0
            };
            features.push(p + e);
        }
    }
    SceneSample {
        height: h,
        width: w,
        features,
        labels: labels.into_iter().map(Class::index).collect(),
        seed,
    }
}

/// Agent input: two stacked latent grids and the measurement vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Current latent grid followed by the previous one.
    pub latent: Vec<f64>,
    pub measurements: [f64; MEASUREMENTS],
}

impl Observation {
    pub fn current(&self) -> &[f64] {
        &self.latent[..self.latent.len() / 2]
    }
}

/// Average-pools per-pixel rows of `width` values onto a `POOL x POOL` grid.
fn pool(rows: &[f64], h: usize, w: usize, width: usize) -> Vec<f64> {
    let mut out = vec![0.0; POOL * POOL * width];
    for gr in 0..POOL {
        let (r0, r1) = (gr * h / POOL, ((gr + 1) * h / POOL).max(gr * h / POOL + 1).min(h));
        for gc in 0..POOL {
            let (c0, c1) = (gc * w / POOL, ((gc + 1) * w / POOL).max(gc * w / POOL + 1).min(w));
            let cell = &mut out[(gr * POOL + gc) * width..(gr * POOL + gc + 1) * width];
            let count = ((r1 - r0) * (c1 - c0)) as f64;
            for r in r0..r1 {
                for c in c0..c1 {
                    let p = r * w + c;
                    for (acc, v) in cell.iter_mut().zip(&rows[p * width..(p + 1) * width]) {
                        *acc += v / count;
                    }
                }
            }
        }
    }
    out
}

/// Renders, runs the segmenter and stacks its pooled penultimate activations
/// with those of `previous`; the first observation repeats its own grid.
pub fn observe(world: &World, segmenter: &SoftmaxModel, previous: Option<&Observation>) -> Result<Observation> {
    if segmenter.input() != FEATURE_DIM {
        return Err(invalid(format!(
            "segmenter expects {} features per pixel, the world renders {FEATURE_DIM}",
            segmenter.input()
        )));
    }
    let view = world.render();
    let rows = segmenter.features(&view)?;
    let current = pool(&rows, view.height, view.width, segmenter.width());
    let mut latent = current.clone();
    match previous {
        Some(p) if p.current().len() == current.len() => latent.extend_from_slice(p.current()),
        Some(_) => return Err(invalid("previous observation has a different latent size")),
        None => latent.extend_from_slice(&current),
    }
    let s = world.state();
    let cmd = world.command().one_hot();
    Ok(Observation {
        latent,
        measurements: [s.speed, world.goal_distance(), s.damage, cmd[0], cmd[1], cmd[2]],
    })
}
