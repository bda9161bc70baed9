//! Lane-following world on a sinusoidal two-lane road.
//!
//! Positions are in meters: `y` runs along the track and `x` across it. The
//! ego lane is centered on the road centerline `x_c(y)`; the opposite lane
//! lies to the left and a narrow shoulder to the right. Speed is in meters per
//! step.

mod log;
mod render;

pub use log::{episode_record, read_log, write_log, StepLog};
pub use render::{observe, Observation, MEASUREMENTS, POOL};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng;
use crate::seg::{Class, SceneSample};

/// Hard cap on episode length.
pub const MAX_STEPS: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackConfig {
    pub length: f64,
    pub amplitude: f64,
    pub period: f64,
    pub lane_width: f64,
    pub shoulder: f64,
    pub sidewalk_width: f64,
    pub vehicle_width: f64,
    pub vehicle_length: f64,
    pub wheelbase: f64,
    /// Steering angle at `steer = 1`, radians.
    pub max_steer: f64,
    /// Speed gained per step at full throttle.
    pub accel: f64,
    /// Speed lost per step at full brake.
    pub brake: f64,
    /// Fraction of speed lost per step.
    pub drag: f64,
    pub max_speed: f64,
    pub start_speed: f64,
    /// Seconds per step, for km/h reporting.
    pub dt: f64,
    pub max_steps: usize,
    pub objects: usize,
    pub alpha: f64,
    pub beta: f64,
    pub psi: f64,
    pub tiers: CollisionTiers,
    pub render_height: usize,
    pub render_width: usize,
    pub render_noise: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            length: 300.0,
            amplitude: 4.0,
            period: 120.0,
            lane_width: 3.5,
            shoulder: 0.25,
            sidewalk_width: 3.0,
            vehicle_width: 1.8,
            vehicle_length: 4.0,
            wheelbase: 2.7,
            max_steer: 0.5,
            accel: 0.08,
            brake: 0.06,
            drag: 0.02,
            max_speed: 1.5,
            start_speed: 0.5,
            dt: 0.1,
            max_steps: MAX_STEPS,
            objects: 6,
            alpha: 1.0,
            beta: 1.0,
            psi: 10.0,
            tiers: CollisionTiers::default(),
            render_height: 16,
            render_width: 16,
            render_noise: 0.1,
        }
    }
}

impl TrackConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("length", self.length),
            ("period", self.period),
            ("lane_width", self.lane_width),
            ("vehicle_width", self.vehicle_width),
            ("vehicle_length", self.vehicle_length),
            ("wheelbase", self.wheelbase),
            ("max_speed", self.max_speed),
            ("dt", self.dt),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let nonnegative = [
            ("amplitude", self.amplitude),
            ("shoulder", self.shoulder),
            ("sidewalk_width", self.sidewalk_width),
            ("max_steer", self.max_steer),
            ("accel", self.accel),
            ("brake", self.brake),
            ("drag", self.drag),
            ("start_speed", self.start_speed),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("psi", self.psi),
            ("render_noise", self.render_noise),
        ];
        for (name, v) in nonnegative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if self.max_steps == 0 || self.max_steps > MAX_STEPS {
            return Err(invalid(format!("max_steps must lie in 1..={MAX_STEPS}")));
        }
        if self.render_height < 2 || self.render_width < 2 {
            return Err(invalid("render grid must be at least 2x2"));
        }
        self.tiers.validate()
    }

    pub fn centerline(&self, y: f64) -> f64 {
        self.amplitude * (std::f64::consts::TAU * y / self.period).sin()
    }

    fn centerline_slope(&self, y: f64) -> f64 {
        let w = std::f64::consts::TAU / self.period;
        self.amplitude * w * (w * y).cos()
    }

    /// Left and right road edges as lateral offsets from the ego lane center.
    pub fn road_edges(&self) -> (f64, f64) {
        let half = self.lane_width / 2.0;
        (-half - self.lane_width, half + self.shoulder)
    }
}

/// Crash severities on the ladder `{0, 1/4, 1/2, 3/4, 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionTiers {
    /// Pedestrians and bikes.
    pub vulnerable: f64,
    pub vehicle_fast: f64,
    pub vehicle_slow: f64,
    /// Contact speed at or above which a vehicle hit counts as fast.
    pub fast_speed: f64,
    pub fixed: f64,
}

impl Default for CollisionTiers {
    fn default() -> Self {
        Self {
            vulnerable: 1.0,
            vehicle_fast: 0.75,
            vehicle_slow: 0.5,
            fast_speed: 1.0,
            fixed: 0.25,
        }
    }
}

pub const SEVERITY_LADDER: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

impl CollisionTiers {
    fn validate(&self) -> Result<()> {
        for v in [self.vulnerable, self.vehicle_fast, self.vehicle_slow, self.fixed] {
            if !SEVERITY_LADDER.contains(&v) {
                return Err(invalid(format!("collision severity {v} is not on the ladder")));
            }
        }
        Ok(())
    }

    fn severity(&self, class: Class, speed: f64) -> f64 {
        match class {
            Class::Person | Class::Bike => self.vulnerable,
            Class::Car | Class::Bus if speed >= self.fast_speed => self.vehicle_fast,
            Class::Car | Class::Bus => self.vehicle_slow,
            _ => self.fixed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub steer: f64,
    pub throttle: f64,
    pub brake: f64,
}

impl Action {
    pub fn new(steer: f64, throttle: f64, brake: f64) -> Self {
        Self { steer, throttle, brake }.clamped()
    }

    /// Components clamped to their ranges; NaN becomes 0.
    pub fn clamped(self) -> Self {
        let c = |v: f64, lo: f64| if v.is_nan() { 0.0 } else { v.clamp(lo, 1.0) };
        Self {
            steer: c(self.steer, -1.0),
            throttle: c(self.throttle, 0.0),
            brake: c(self.brake, 0.0),
        }
    }

    /// Uniform over the action box.
    pub fn random(rng: &mut impl Rng) -> Self {
        Self {
            steer: rng.random_range(-1.0..=1.0),
            throttle: rng.random_range(0.0..=1.0),
            brake: rng.random_range(0.0..=1.0),
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.steer, self.throttle, self.brake]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DoneReason {
    Crash,
    Offroad,
    Offline,
    Goal,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Follow,
    Left,
    Right,
}

impl Command {
    pub fn one_hot(self) -> [f64; 3] {
        match self {
            Command::Follow => [1.0, 0.0, 0.0],
            Command::Left => [0.0, 1.0, 0.0],
            Command::Right => [0.0, 0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldObject {
    pub class: Class,
    /// Lateral center offset from the ego lane center.
    pub e: f64,
    pub y: f64,
    pub half_width: f64,
    pub half_length: f64,
    pub height: f64,
}

impl WorldObject {
    fn overlaps(&self, other: &WorldObject) -> bool {
        (self.e - other.e).abs() < self.half_width + other.half_width
            && (self.y - other.y).abs() < self.half_length + other.half_length + 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub seed: u64,
    pub x: f64,
    pub y: f64,
    /// Radians from the +y axis, positive toward +x.
    pub heading: f64,
    pub speed: f64,
    pub step: usize,
    pub damage: f64,
    /// Meters driven.
    pub distance: f64,
    pub objects: Vec<WorldObject>,
    pub done: Option<DoneReason>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub reward: f64,
    pub o_l: f64,
    pub o_r: f64,
    pub c: f64,
    pub collision: Option<Class>,
    pub done: Option<DoneReason>,
}

/// Reward of one step; shared by the world and every consumer of its logs.
pub fn reward(config: &TrackConfig, o_l: f64, o_r: f64, c: f64) -> f64 {
    1.0 - config.alpha * o_l - config.beta * o_r - config.psi * c
}

const SPAWN_RETRIES: u64 = 32;

fn place_objects(seed: u64, config: &TrackConfig) -> Vec<WorldObject> {
    let mut placed: Vec<WorldObject> = Vec::with_capacity(config.objects);
    let (lo, hi) = (30.0f64.min(config.length), (config.length - 10.0).max(0.0));
    for k in 0..config.objects as u64 {
        for attempt in 0..SPAWN_RETRIES {
            let mut rng = rng::stream(rng::derive(seed, "spawn", k * SPAWN_RETRIES + attempt), "object");
            let class = match rng.random_range(0..20) {
                0..=4 => Class::Person,
                5..=7 => Class::Bike,
                8..=13 => Class::Car,
                14..=15 => Class::Bus,
                _ => Class::Building,
            };
            let (half_width, half_length, height) = match class {
                Class::Person => (0.3, 0.3, 1.8),
                Class::Bike => (0.4, 0.9, 1.6),
                Class::Car => (0.9, 2.2, 1.5),
                Class::Bus => (1.25, 5.0, 3.2),
                _ => (0.6, 0.6, 1.0),
            };
            // inner edge leaves at least a 2 m gap around the lane center
            let inner: f64 = rng.random_range(1.0..3.0);
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let obj = WorldObject {
                class,
                e: side * (inner + half_width),
                y: if hi > lo { rng.random_range(lo..hi) } else { lo },
                half_width,
                half_length,
                height,
            };
            if !placed.iter().any(|p| p.overlaps(&obj)) {
                placed.push(obj);
                break;
            }
        }
    }
    placed
}

/// One world instance: configuration plus mutable state.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    config: TrackConfig,
    state: WorldState,
}

impl World {
    /// Vehicle at the track start, centered in its lane and aligned with it.
    pub fn reset(seed: u64, config: &TrackConfig) -> Result<Self> {
        config.validate()?;
        let state = WorldState {
            seed,
            x: config.centerline(0.0),
            y: 0.0,
            heading: config.centerline_slope(0.0).atan(),
            speed: config.start_speed.min(config.max_speed),
            step: 0,
            damage: 0.0,
            distance: 0.0,
            objects: place_objects(seed, config),
            done: None,
        };
        Ok(Self {
            config: config.clone(),
            state,
        })
    }

    pub fn from_state(config: &TrackConfig, state: WorldState) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            state,
        })
    }

    pub fn config(&self) -> &TrackConfig {
        &self.config
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.state.done.is_some()
    }

    /// Lateral offset of the vehicle from the ego lane center.
    pub fn lateral_offset(&self) -> f64 {
        self.state.x - self.config.centerline(self.state.y)
    }

    pub fn o_l(&self) -> f64 {
        (self.lateral_offset().abs() / (self.config.lane_width / 2.0)).min(1.0)
    }

    pub fn o_r(&self) -> f64 {
        let e = self.lateral_offset();
        let half = self.config.vehicle_width / 2.0;
        let (left, right) = self.config.road_edges();
        let outside = (e + half - right).clamp(0.0, 2.0 * half) + (left - (e - half)).clamp(0.0, 2.0 * half);
        (outside / self.config.vehicle_width).min(1.0)
    }

    pub fn goal_distance(&self) -> f64 {
        (self.config.length - self.state.y).max(0.0)
    }

    /// High-level command from the road bend over the next 20 m.
    pub fn command(&self) -> Command {
        let y = self.state.y;
        let ahead = 20.0;
        let bend =
            self.config.centerline(y + ahead) - self.config.centerline(y) - ahead * self.config.centerline_slope(y);
        if bend > 0.5 {
            Command::Right
        } else if bend < -0.5 {
            Command::Left
        } else {
            Command::Follow
        }
    }

    /// Most severe contact between the vehicle footprint and any object.
    fn contact(&self) -> Option<(Class, f64)> {
        let e = self.lateral_offset();
        let (hw, hl) = (self.config.vehicle_width / 2.0, self.config.vehicle_length / 2.0);
        self.state
            .objects
            .iter()
            .filter(|o| (o.e - e).abs() < hw + o.half_width && (o.y - self.state.y).abs() < hl + o.half_length)
            .map(|o| (o.class, self.config.tiers.severity(o.class, self.state.speed)))
            .filter(|&(_, c)| c > 0.0)
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Advances one step. Stepping a finished episode is an error.
    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if let Some(reason) = self.state.done {
            return Err(invalid(format!("episode already finished ({reason:?})")));
        }
        let a = action.clamped();
        let cfg = &self.config;
        let s = &mut self.state;
        s.speed =
            (s.speed + cfg.accel * a.throttle - cfg.brake * a.brake - cfg.drag * s.speed).clamp(0.0, cfg.max_speed);
        s.heading += s.speed / cfg.wheelbase * (cfg.max_steer * a.steer).tan();
        s.x += s.speed * s.heading.sin();
        s.y += s.speed * s.heading.cos();
        s.distance += s.speed;
        s.step += 1;

        let (o_l, o_r) = (self.o_l(), self.o_r());
        let (collision, c) = match self.contact() {
            Some((class, c)) => (Some(class), c),
            None => (None, 0.0),
        };
        let cfg = &self.config;
        let s = &mut self.state;
        s.damage += c;
        let done = if c > 0.0 {
            Some(DoneReason::Crash)
        } else if o_r >= 0.5 {
            Some(DoneReason::Offroad)
        } else if o_l >= 1.0 {
            Some(DoneReason::Offline)
        } else if s.y >= cfg.length {
            Some(DoneReason::Goal)
        } else if s.step >= cfg.max_steps {
            Some(DoneReason::Timeout)
        } else {
            None
        };
        s.done = done;
        Ok(StepOutcome {
            reward: reward(cfg, o_l, o_r, c),
            o_l,
            o_r,
            c,
            collision,
            done,
        })
    }

    /// Labelled front-camera view in the segmentation format.
    pub fn render(&self) -> SceneSample {
        render::render(self)
    }
}
