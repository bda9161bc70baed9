//! Advantage actor-critic driving from segmenter latents.

mod actors;
mod alternate;
mod net;

pub use actors::{drive_episode, run_actors, ActorConfig, ActorReport, CurvePoint, EpisodeLog};
pub use alternate::{
    alternate_optimize, learn_matrix, AlternationConfig, AlternationResult, AlternationSchedule, LearnedMatrix,
    RoundRecord,
};
pub use net::{
    gaussian_entropy, gaussian_log_prob, log_squash_jacobian, squash, ActionSample, NetShape, PolicyValueParams,
    LOG_STD_MAX, LOG_STD_MIN,
};

use serde::Serialize;

use crate::drive::{Action, Observation};
use crate::error::{invalid, Result};
use net::sigmoid;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub u: [f64; 3],
    pub action: Action,
    /// Log density under the policy that acted.
    pub behavior_log_prob: f64,
    pub reward: f64,
    pub done: bool,
    /// Value estimate of the policy that acted.
    pub value: f64,
}

/// Up to twenty consecutive transitions and the value at the cut.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub transitions: Vec<Transition>,
    /// Zero when the last transition ended its episode.
    pub bootstrap: f64,
}

pub const ROLLOUT_LEN: usize = 20;

/// One-step temporal-difference error.
pub fn td_error(r: f64, gamma: f64, v_next: f64, v_now: f64, terminal: bool) -> f64 {
    let next = if terminal { 0.0 } else { v_next };
    r + gamma * next - v_now
}

/// Discounted n-step returns bootstrapped at the cut, and `return - V`.
pub fn rollout_returns(rollout: &Rollout, gamma: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if rollout.transitions.is_empty() {
        return Err(invalid("empty rollout"));
    }
    let n = rollout.transitions.len();
    let mut returns = vec![0.0; n];
    let mut acc = rollout.bootstrap;
    for (k, t) in rollout.transitions.iter().enumerate().rev() {
        if t.done {
            acc = 0.0;
        }
        acc = t.reward + gamma * acc;
        returns[k] = acc;
    }
    let adv = returns
        .iter()
        .zip(&rollout.transitions)
        .map(|(r, t)| r - t.value)
        .collect();
    Ok((returns, adv))
}

/// Surrogate inputs that are held constant while differentiating.
#[derive(Debug, Clone)]
pub struct SurrogateItem<'a> {
    pub obs: &'a Observation,
    pub u: [f64; 3],
    /// Clipped importance ratio times advantage.
    pub weight: f64,
    pub target: f64,
}

/// Mean over items of `-w log pi(u|s) - c H(s) + (R - V(s))^2 / 2`.
pub fn surrogate(params: &PolicyValueParams, items: &[SurrogateItem], entropy_coef: f64) -> Result<f64> {
    let mut total = 0.0;
    for it in items {
        let c = params.forward(it.obs)?;
        let (mean, log_std) = (c.mean(), c.log_std());
        let logp = gaussian_log_prob(&mean, &log_std, &it.u) - log_squash_jacobian(&it.u);
        let err = it.target - c.value;
        total += -it.weight * logp - entropy_coef * gaussian_entropy(&log_std) + 0.5 * err * err;
    }
    Ok(total / items.len().max(1) as f64)
}

/// Neumaier-compensated running sum of gradient vectors.
struct CompensatedSum {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl CompensatedSum {
    fn new(n: usize) -> Self {
        Self {
            sum: vec![0.0; n],
            comp: vec![0.0; n],
        }
    }

    fn add(&mut self, v: &[f64]) {
        for ((s, c), &x) in self.sum.iter_mut().zip(&mut self.comp).zip(v) {
            let t = *s + x;
            if s.abs() >= x.abs() {
                *c += (*s - t) + x;
            } else {
                *c += (x - t) + *s;
            }
            *s = t;
        }
    }

    fn finish(self) -> Vec<f64> {
        self.sum.iter().zip(&self.comp).map(|(s, c)| s + c).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SurrogateEval {
    pub value: f64,
    pub grad: Vec<f64>,
    pub entropy: f64,
}

/// Surrogate value, its exact gradient and the mean policy entropy.
pub fn surrogate_grad(params: &PolicyValueParams, items: &[SurrogateItem], entropy_coef: f64) -> Result<SurrogateEval> {
    let n = items.len().max(1) as f64;
    let len = params.params().len();
    let mut acc = CompensatedSum::new(len);
    let mut scratch = vec![0.0; len];
    let mut value = 0.0;
    let mut entropy = 0.0;
    for it in items {
        let c = params.forward(it.obs)?;
        let (mean, log_std) = (c.mean(), c.log_std());
        let logp = gaussian_log_prob(&mean, &log_std, &it.u) - log_squash_jacobian(&it.u);
        let h = gaussian_entropy(&log_std);
        let err = it.target - c.value;
        value += -it.weight * logp - entropy_coef * h + 0.5 * err * err;
        entropy += h;
        let mut d_out = [0.0; 6];
        for k in 0..3 {
            let var = (2.0 * log_std[k]).exp();
            let diff = it.u[k] - mean[k];
            d_out[k] = -it.weight * diff / var / n;
            let d_log_std = -it.weight * (diff * diff / var - 1.0) - entropy_coef;
            let s = sigmoid(c.out[3 + k]);
            d_out[3 + k] = d_log_std * (LOG_STD_MAX - LOG_STD_MIN) * s * (1.0 - s) / n;
        }
        scratch.iter_mut().for_each(|g| *g = 0.0);
        params.backward(it.obs, &c, &d_out, -err / n, &mut scratch);
        acc.add(&scratch);
    }
    Ok(SurrogateEval {
        value: value / n,
        grad: acc.finish(),
        entropy: entropy / n,
    })
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct UpdateDiagnostics {
    pub loss: f64,
    pub grad_norm: f64,
    pub policy_grad_norm: f64,
    pub value_grad_norm: f64,
    pub entropy: f64,
    pub mean_advantage: f64,
    pub mean_ratio: f64,
    pub rejected: bool,
}

/// One gradient step on the clipped-importance actor-critic surrogate.
pub fn update(
    params: &mut PolicyValueParams,
    rollouts: &[Rollout],
    lr: f64,
    entropy_coef: f64,
    gamma: f64,
) -> Result<UpdateDiagnostics> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(invalid(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    let mut items = Vec::new();
    let mut ratio_sum = 0.0;
    let mut adv_sum = 0.0;
    for r in rollouts {
        let (returns, adv) = rollout_returns(r, gamma)?;
        for ((t, ret), a) in r.transitions.iter().zip(returns).zip(adv) {
            let logp = params.log_prob(&t.obs, &t.u)?;
            let ratio = (logp - t.behavior_log_prob).exp().min(1.0);
            ratio_sum += ratio;
            adv_sum += a;
            items.push(SurrogateItem {
                obs: &t.obs,
                u: t.u,
                weight: ratio * a,
                target: ret,
            });
        }
    }
    let eval = surrogate_grad(params, &items, entropy_coef)?;
    let norm = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (policy, value) = params.head_ranges();
    let count = items.len().max(1) as f64;
    let mut diag = UpdateDiagnostics {
        loss: eval.value,
        grad_norm: norm(&eval.grad),
        policy_grad_norm: norm(&eval.grad[policy]),
        value_grad_norm: norm(&eval.grad[value]),
        entropy: eval.entropy,
        mean_advantage: adv_sum / count,
        mean_ratio: ratio_sum / count,
        rejected: false,
    };
    if !diag.grad_norm.is_finite() {
        diag.rejected = true;
        return Ok(diag);
    }
    for (p, g) in params.params_mut().iter_mut().zip(&eval.grad) {
        *p -= lr * g;
    }
    Ok(diag)
}
