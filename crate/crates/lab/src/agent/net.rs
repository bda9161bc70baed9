use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::drive::{Action, Observation, MEASUREMENTS};
use crate::error::{invalid, Error, Result};
use crate::rng;

/// Bounds of the policy log standard deviation.
pub const LOG_STD_MIN: f64 = -3.0;
pub const LOG_STD_MAX: f64 = 0.5;
const HALF_LN_TAU: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub latent: usize,
    pub latent_hidden: usize,
    pub meas_hidden: usize,
    pub fused: usize,
}

impl NetShape {
    pub fn new(latent: usize) -> Self {
        Self {
            latent,
            latent_hidden: 32,
            meas_hidden: 8,
            fused: 32,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    wl: usize,
    bl: usize,
    wm: usize,
    bm: usize,
    wf: usize,
    bf: usize,
    wp: usize,
    bp: usize,
    wv: usize,
    bv: usize,
    len: usize,
}

impl Layout {
    fn new(s: &NetShape) -> Self {
        let wl = 0;
        let bl = wl + s.latent_hidden * s.latent;
        let wm = bl + s.latent_hidden;
        let bm = wm + s.meas_hidden * MEASUREMENTS;
        let wf = bm + s.meas_hidden;
        let bf = wf + s.fused * (s.latent_hidden + s.meas_hidden);
        let wp = bf + s.fused;
        let bp = wp + 6 * s.fused;
        let wv = bp + 6;
        let bv = wv + s.fused;
        Self {
            wl,
            bl,
            wm,
            bm,
            wf,
            bf,
            wp,
            bp,
            wv,
            bv,
            len: bv + 1,
        }
    }
}

/// Shared trunk (latent branch and measurement branch fused by one layer)
/// with a Gaussian policy head and a scalar value head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyValueParams {
    shape: NetShape,
    /// Fixed multipliers applied to the measurements before the trunk.
    meas_scale: [f64; MEASUREMENTS],
    params: Vec<f64>,
}

pub(crate) struct Cache {
    xm: [f64; MEASUREMENTS],
    hl: Vec<f64>,
    hm: Vec<f64>,
    hf: Vec<f64>,
    pub out: [f64; 6],
    pub value: f64,
}

impl Cache {
    pub fn mean(&self) -> [f64; 3] {
        [self.out[0], self.out[1], self.out[2]]
    }

    pub fn log_std(&self) -> [f64; 3] {
        let mut l = [0.0; 3];
        for k in 0..3 {
            l[k] = LOG_STD_MIN + (LOG_STD_MAX - LOG_STD_MIN) * sigmoid(self.out[3 + k]);
        }
        l
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Maps a pre-squash sample into the action box.
pub fn squash(u: &[f64; 3]) -> Action {
    Action::new(u[0].tanh(), sigmoid(u[1]), sigmoid(u[2]))
}

/// `log |d squash / du|`, summed over the three components.
pub fn log_squash_jacobian(u: &[f64; 3]) -> f64 {
    let tanh = 2.0 * (std::f64::consts::LN_2 - u[0] - softplus(-2.0 * u[0]));
    let sig = |x: f64| -softplus(-x) - softplus(x);
    tanh + sig(u[1]) + sig(u[2])
}

/// Diagonal Gaussian log density of `u`.
pub fn gaussian_log_prob(mean: &[f64; 3], log_std: &[f64; 3], u: &[f64; 3]) -> f64 {
    (0..3)
        .map(|k| {
            let z = (u[k] - mean[k]) / log_std[k].exp();
            -0.5 * z * z - log_std[k] - HALF_LN_TAU
        })
        .sum()
}

/// Gaussian entropy of the pre-squash distribution.
pub fn gaussian_entropy(log_std: &[f64; 3]) -> f64 {
    log_std.iter().map(|l| l + 0.5 + HALF_LN_TAU).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionSample {
    pub action: Action,
    /// Pre-squash sample.
    pub u: [f64; 3],
    /// Log density of the squashed action.
    pub log_prob: f64,
    pub value: f64,
}

impl PolicyValueParams {
    pub fn init(shape: NetShape, meas_scale: [f64; MEASUREMENTS], seed: u64) -> Self {
        let layout = Layout::new(&shape);
        let mut params = vec![0.0; layout.len];
        let mut rng = rng::stream(seed, "policy-init");
        let mut fill = |start: usize, count: usize, fan_in: usize, gain: f64| {
            let normal = Normal::new(0.0, gain / (fan_in as f64).sqrt()).expect("valid sd");
            for p in &mut params[start..start + count] {
                *p = normal.sample(&mut rng);
            }
        };
        fill(layout.wl, shape.latent_hidden * shape.latent, shape.latent, 1.0);
        fill(layout.wm, shape.meas_hidden * MEASUREMENTS, MEASUREMENTS, 1.0);
        let fused_in = shape.latent_hidden + shape.meas_hidden;
        fill(layout.wf, shape.fused * fused_in, fused_in, 1.0);
        fill(layout.wp, 6 * shape.fused, shape.fused, 0.1);
        fill(layout.wv, shape.fused, shape.fused, 0.1);
        Self {
            shape,
            meas_scale,
            params,
        }
    }

    pub fn from_params(shape: NetShape, meas_scale: [f64; MEASUREMENTS], params: Vec<f64>) -> Result<Self> {
        let len = Layout::new(&shape).len;
        if params.len() != len {
            return Err(invalid(format!(
                "expected {len} policy parameters, found {}",
                params.len()
            )));
        }
        Ok(Self {
            shape,
            meas_scale,
            params,
        })
    }

    pub fn shape(&self) -> NetShape {
        self.shape
    }

    pub fn meas_scale(&self) -> [f64; MEASUREMENTS] {
        self.meas_scale
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Parameter ranges of the policy head and of the value head.
    pub fn head_ranges(&self) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let l = Layout::new(&self.shape);
        (l.wp..l.wv, l.wv..l.len)
    }

    pub(crate) fn forward(&self, obs: &Observation) -> Result<Cache> {
        let s = &self.shape;
        if obs.latent.len() != s.latent {
            return Err(sevot::Error::DimensionMismatch {
                expected: s.latent,
                found: obs.latent.len(),
            }
            .into());
        }
        let l = Layout::new(s);
        let p = &self.params;
        let dense = |w: usize, b: usize, rows: usize, x: &[f64]| -> Vec<f64> {
            (0..rows)
                .map(|k| {
                    let row = &p[w + k * x.len()..w + (k + 1) * x.len()];
                    (p[b + k] + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()).tanh()
                })
                .collect()
        };
        let mut xm = [0.0; MEASUREMENTS];
        for k in 0..MEASUREMENTS {
            xm[k] = obs.measurements[k] * self.meas_scale[k];
        }
        let hl = dense(l.wl, l.bl, s.latent_hidden, &obs.latent);
        let hm = dense(l.wm, l.bm, s.meas_hidden, &xm);
        let joined: Vec<f64> = hl.iter().chain(&hm).copied().collect();
        let hf = dense(l.wf, l.bf, s.fused, &joined);
        let mut out = [0.0; 6];
        for (k, o) in out.iter_mut().enumerate() {
            let row = &p[l.wp + k * s.fused..l.wp + (k + 1) * s.fused];
            *o = p[l.bp + k] + row.iter().zip(&hf).map(|(a, v)| a * v).sum::<f64>();
        }
        let value = p[l.bv] + p[l.wv..l.wv + s.fused].iter().zip(&hf).map(|(a, v)| a * v).sum::<f64>();
        if out.iter().any(|v| !v.is_finite()) || !value.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(Cache {
            xm,
            hl,
            hm,
            hf,
            out,
            value,
        })
    }

    /// Accumulates `scale * d(loss)/d(params)` given the loss gradient with
    /// respect to the six head outputs and the value.
    pub(crate) fn backward(&self, obs: &Observation, cache: &Cache, d_out: &[f64; 6], d_value: f64, grad: &mut [f64]) {
        let s = &self.shape;
        let l = Layout::new(s);
        let p = &self.params;
        let mut d_hf = vec![0.0; s.fused];
        for k in 0..6 {
            for i in 0..s.fused {
                grad[l.wp + k * s.fused + i] += d_out[k] * cache.hf[i];
                d_hf[i] += d_out[k] * p[l.wp + k * s.fused + i];
            }
            grad[l.bp + k] += d_out[k];
        }
        for i in 0..s.fused {
            grad[l.wv + i] += d_value * cache.hf[i];
            d_hf[i] += d_value * p[l.wv + i];
        }
        grad[l.bv] += d_value;

        let fused_in = s.latent_hidden + s.meas_hidden;
        let mut d_joined = vec![0.0; fused_in];
        for k in 0..s.fused {
            let dz = d_hf[k] * (1.0 - cache.hf[k] * cache.hf[k]);
            if dz == 0.0 {
                continue;
            }
            for i in 0..fused_in {
                let x = if i < s.latent_hidden {
                    cache.hl[i]
                } else {
                    cache.hm[i - s.latent_hidden]
                };
                grad[l.wf + k * fused_in + i] += dz * x;
                d_joined[i] += dz * p[l.wf + k * fused_in + i];
            }
            grad[l.bf + k] += dz;
        }
        for k in 0..s.latent_hidden {
            let dz = d_joined[k] * (1.0 - cache.hl[k] * cache.hl[k]);
            if dz == 0.0 {
                continue;
            }
            let row = &mut grad[l.wl + k * s.latent..l.wl + (k + 1) * s.latent];
            for (g, x) in row.iter_mut().zip(&obs.latent) {
                *g += dz * x;
            }
            grad[l.bl + k] += dz;
        }
        for k in 0..s.meas_hidden {
            let dz = d_joined[s.latent_hidden + k] * (1.0 - cache.hm[k] * cache.hm[k]);
            for i in 0..MEASUREMENTS {
                grad[l.wm + k * MEASUREMENTS + i] += dz * cache.xm[i];
            }
            grad[l.bm + k] += dz;
        }
    }

    pub fn value(&self, obs: &Observation) -> Result<f64> {
        Ok(self.forward(obs)?.value)
    }

    /// Log density of the action produced by pre-squash sample `u`.
    pub fn log_prob(&self, obs: &Observation, u: &[f64; 3]) -> Result<f64> {
        let c = self.forward(obs)?;
        Ok(gaussian_log_prob(&c.mean(), &c.log_std(), u) - log_squash_jacobian(u))
    }

    /// Samples from the policy, or takes the mean when `explore` is false.
    pub fn act(&self, obs: &Observation, explore: bool, rng: &mut impl Rng) -> Result<ActionSample> {
        let c = self.forward(obs)?;
        let (mean, log_std) = (c.mean(), c.log_std());
        let mut u = mean;
        if explore {
            for k in 0..3 {
                let z: f64 = StandardNormal.sample(rng);
                u[k] += log_std[k].exp() * z;
            }
        }
        let log_prob = gaussian_log_prob(&mean, &log_std, &u) - log_squash_jacobian(&u);
        if !log_prob.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(ActionSample {
            action: squash(&u),
            u,
            log_prob,
            value: c.value,
        })
    }
}
