use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use sevot::ground::{build_importance_matrix, load_matrix};
use sevot::{GroundMatrix, ImportanceGrouping, MetricTransform};
use sevot_lab::drive::TrackConfig;
use sevot_lab::seg::{severity_matrix, SceneConfig, TrainConfig, N_CLASSES};

use crate::config::Config;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    CrossEntropy,
    Wasserstein,
    Sinkhorn,
}

impl std::str::FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ce" => Ok(Self::CrossEntropy),
            "wasserstein" => Ok(Self::Wasserstein),
            "sinkhorn" => Ok(Self::Sinkhorn),
            other => Err(format!("expected ce, wasserstein or sinkhorn, found `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatrixSource {
    Severity,
    Step,
    Importance(ImportanceGrouping),
    File(PathBuf),
    /// Final matrix of a previous `train-agent` run in the same output directory.
    Learned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalPolicy {
    Trained,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSegmenter {
    Model,
    /// Nearest class prototype, exact on noiseless scenes.
    Oracle,
}

fn choice<T: Copy>(value: &str, options: &[(&str, T)]) -> Result<T, String> {
    options
        .iter()
        .find(|(name, _)| *name == value)
        .map(|(_, v)| *v)
        .ok_or_else(|| {
            let names: Vec<_> = options.iter().map(|(n, _)| *n).collect();
            format!("expected one of {}, found `{value}`", names.join(", "))
        })
}

impl std::str::FromStr for EvalPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        choice(s, &[("trained", Self::Trained), ("random", Self::Random)])
    }
}

impl std::str::FromStr for EvalSegmenter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        choice(s, &[("model", Self::Model), ("oracle", Self::Oracle)])
    }
}

#[derive(Debug, Clone)]
pub struct DataConfig {
    pub scenes: usize,
    pub scene: SceneConfig,
    pub test_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct AdaptConfig {
    pub rounds: usize,
    pub lambda: f64,
    pub threshold: f64,
    pub scenes: usize,
    pub noise: f64,
    pub shift: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub rounds: usize,
    pub steps_per_round: usize,
    pub workers: usize,
    pub lr: f64,
    pub entropy: f64,
    pub gamma: f64,
    pub pool_frames: usize,
    pub finetune_frames: usize,
    pub finetune_steps: usize,
    pub freeze: bool,
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub episodes: usize,
    pub threshold: f64,
    pub policy: EvalPolicy,
    pub segmenter: EvalSegmenter,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub hidden: usize,
    pub pretrain: TrainConfig,
    /// `None` when `finetune.steps` is 0.
    pub finetune: Option<(LossKind, TrainConfig)>,
    pub transform: MetricTransform,
    /// Absolute Sinkhorn epsilon; defaults to a fraction of the matrix's mean cost.
    pub epsilon: Option<f64>,
    pub matrix: MatrixSource,
    pub adapt: AdaptConfig,
    pub agent: AgentConfig,
    pub track: TrackConfig,
    pub eval: EvalConfig,
}

fn check(c: &Config, key: &str, ok: bool, why: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(c.invalid(key, why))
    }
}

fn shift(c: &mut Config, key: &str) -> Result<[f64; 3]> {
    let v: Vec<f64> = c.list(key, vec![0.0; 3])?;
    v.as_slice()
        .try_into()
        .map_err(|_| c.invalid(key, format!("expected 3 comma-separated values, found {}", v.len())))
}

impl ExperimentConfig {
    /// Reads every known key and rejects the rest.
    pub fn from_config(mut c: Config) -> Result<Self> {
        let seed: u64 = c.require("seed", "set it in the config or pass --seed")?;

        let scene = SceneConfig {
            height: c.get("data.height", 16)?,
            width: c.get("data.width", 16)?,
            min_objects: c.get("data.min_objects", 2)?,
            max_objects: c.get("data.max_objects", 5)?,
            noise: c.get("data.noise", 0.1)?,
            shift: shift(&mut c, "data.shift")?,
        };
        check(
            &c,
            "data.noise",
            scene.noise.is_finite() && scene.noise >= 0.0,
            "must be nonnegative",
        )?;
        check(
            &c,
            "data.max_objects",
            scene.min_objects <= scene.max_objects,
            "must be at least data.min_objects",
        )?;
        check(
            &c,
            "data.height",
            scene.height > 0 && scene.width > 0,
            "scene grid must be nonempty",
        )?;
        let data = DataConfig {
            scenes: c.get("data.scenes", 64)?,
            scene,
            test_fraction: c.get("data.test_fraction", 0.25)?,
        };
        check(&c, "data.scenes", data.scenes >= 2, "need at least 2 scenes")?;
        check(
            &c,
            "data.test_fraction",
            data.test_fraction > 0.0 && data.test_fraction < 1.0,
            "must lie strictly between 0 and 1",
        )?;

        let hidden = c.get("model.hidden", 16)?;
        check(&c, "model.hidden", hidden > 0, "must be positive")?;
        let pretrain = TrainConfig {
            lr: c.get("train.lr", 0.5)?,
            steps: c.get("train.steps", 300)?,
            batch: c.get("train.batch", 4)?,
            seed: 0,
        };
        check(
            &c,
            "train.lr",
            pretrain.lr.is_finite() && pretrain.lr >= 0.0,
            "must be nonnegative",
        )?;
        check(&c, "train.batch", pretrain.batch > 0, "must be positive")?;
        let kind = c.get("finetune.loss", LossKind::Wasserstein)?;
        let tune = TrainConfig {
            lr: c.get("finetune.lr", 0.05)?,
            steps: c.get("finetune.steps", 200)?,
            batch: c.get("finetune.batch", 4)?,
            seed: 0,
        };
        check(
            &c,
            "finetune.lr",
            tune.lr.is_finite() && tune.lr >= 0.0,
            "must be nonnegative",
        )?;
        check(&c, "finetune.batch", tune.batch > 0, "must be positive")?;
        let finetune = (tune.steps > 0).then_some((kind, tune));

        let transform = c.get("loss.transform", MetricTransform::Linear)?;
        let epsilon: Option<f64> = c.optional("loss.epsilon")?;
        if let Some(e) = epsilon {
            check(&c, "loss.epsilon", e.is_finite() && e > 0.0, "must be positive")?;
        }

        let source: String = c.get("matrix.source", "severity".to_string())?;
        let file: Option<PathBuf> = c.optional("matrix.file")?;
        let groups: Vec<usize> = c.list("matrix.groups", vec![1, 1, 1, 1, 2, 2, 3, 3])?;
        let weights: Vec<f64> = c.list("matrix.weights", vec![1.0, 2.0, 3.0])?;
        let matrix = match source.as_str() {
            "severity" => MatrixSource::Severity,
            "step" => MatrixSource::Step,
            "learned" => MatrixSource::Learned,
            "importance" => {
                check(
                    &c,
                    "matrix.groups",
                    groups.len() == N_CLASSES,
                    "needs one group per class",
                )?;
                let g = ImportanceGrouping::new(groups, weights).map_err(|e| c.invalid("matrix.groups", e))?;
                MatrixSource::Importance(g)
            }
            "file" => {
                let path = file
                    .clone()
                    .ok_or_else(|| c.invalid("matrix.file", "required when matrix.source = file"))?;
                check(
                    &c,
                    "matrix.file",
                    path.is_file(),
                    &format!("{} does not exist", path.display()),
                )?;
                MatrixSource::File(path)
            }
            other => {
                return Err(c.invalid(
                    "matrix.source",
                    format!("expected severity, step, importance, file or learned, found `{other}`"),
                ))
            }
        };
        if file.is_some() && !matches!(matrix, MatrixSource::File(_)) {
            bail!("config key `matrix.file` is only used with matrix.source = file");
        }

        let adapt = AdaptConfig {
            rounds: c.get("adapt.rounds", 0)?,
            lambda: c.get("adapt.lambda", 0.3)?,
            threshold: c.get("adapt.threshold", 0.7)?,
            scenes: c.get("adapt.scenes", 32)?,
            noise: c.get("adapt.noise", 0.2)?,
            shift: shift(&mut c, "adapt.shift")?,
        };
        check(
            &c,
            "adapt.lambda",
            (0.0..=1.0).contains(&adapt.lambda),
            "must lie in [0, 1]",
        )?;
        check(
            &c,
            "adapt.threshold",
            (0.0..=1.0).contains(&adapt.threshold),
            "must lie in [0, 1]",
        )?;
        check(
            &c,
            "adapt.noise",
            adapt.noise.is_finite() && adapt.noise >= 0.0,
            "must be nonnegative",
        )?;

        let agent = AgentConfig {
            rounds: c.get("schedule.rounds", 5)?,
            steps_per_round: c.get("schedule.steps", 4_000)?,
            workers: c.get("agent.workers", 4)?,
            lr: c.get("agent.lr", 7e-4)?,
            entropy: c.get("agent.entropy", 0.01)?,
            gamma: c.get("agent.gamma", 0.99)?,
            pool_frames: c.get("agent.pool_frames", 64)?,
            finetune_frames: c.get("agent.finetune_frames", 32)?,
            finetune_steps: c.get("agent.finetune_steps", 20)?,
            freeze: c.get("agent.freeze", false)?,
        };
        check(&c, "agent.workers", agent.workers > 0, "must be positive")?;
        check(
            &c,
            "agent.gamma",
            (0.0..=1.0).contains(&agent.gamma),
            "must lie in [0, 1]",
        )?;
        check(
            &c,
            "agent.lr",
            agent.lr.is_finite() && agent.lr >= 0.0,
            "must be nonnegative",
        )?;

        let defaults = TrackConfig::default();
        let track = TrackConfig {
            length: c.get("track.length", defaults.length)?,
            amplitude: c.get("track.amplitude", defaults.amplitude)?,
            objects: c.get("track.objects", defaults.objects)?,
            max_steps: c.get("track.max_steps", defaults.max_steps)?,
            render_noise: c.get("track.render_noise", defaults.render_noise)?,
            ..defaults
        };
        track.validate().map_err(|e| c.invalid("track", e))?;

        let eval = EvalConfig {
            episodes: c.get("eval.episodes", 20)?,
            threshold: c.get("eval.threshold", 1.0)?,
            policy: c.get("eval.policy", EvalPolicy::Trained)?,
            segmenter: c.get("eval.segmenter", EvalSegmenter::Model)?,
        };
        check(&c, "eval.episodes", eval.episodes > 0, "must be positive")?;
        check(
            &c,
            "eval.threshold",
            eval.threshold > 0.0 && eval.threshold <= 1.0,
            "must lie in (0, 1]",
        )?;

        c.finish()?;
        Ok(Self {
            seed,
            data,
            hidden,
            pretrain,
            finetune,
            transform,
            epsilon,
            matrix,
            adapt,
            agent,
            track,
            eval,
        })
    }

    /// The untransformed predefined matrix.
    pub fn ground_matrix(&self, out: &Path) -> Result<GroundMatrix> {
        let m = match &self.matrix {
            MatrixSource::Severity => severity_matrix(),
            MatrixSource::Step => GroundMatrix::step(N_CLASSES),
            MatrixSource::Importance(g) => build_importance_matrix(g),
            MatrixSource::File(path) => load_matrix(path)?,
            MatrixSource::Learned => {
                let path = out.join("agent").join("matrix-final.csv");
                if !path.is_file() {
                    bail!("learned matrix {} not found; run train-agent first", path.display());
                }
                load_matrix(&path)?
            }
        };
        if m.n() != N_CLASSES {
            bail!("ground matrix has {} classes, the scenes have {N_CLASSES}", m.n());
        }
        Ok(m)
    }

    /// Matrix the losses and severity scores use. A learned matrix is
    /// already in transformed units.
    pub fn loss_matrix(&self, out: &Path) -> Result<GroundMatrix> {
        let m = self.ground_matrix(out)?;
        Ok(match self.matrix {
            MatrixSource::Learned => m,
            _ => m.transformed(&self.transform),
        })
    }

    pub fn sinkhorn_epsilon(&self, d: &GroundMatrix) -> f64 {
        self.epsilon.unwrap_or(0.05 * d.mean_off_diagonal())
    }
}
