//! Entropy-regularized transport by alternating marginal scaling.
//!
//! Solves `min_P <P, D> + eps * sum P (log P - 1)` over plans with marginals
//! `s` and `t`. The optimum has the form `P = diag(u) K diag(v)` with
//! `K = exp(-D / eps)`; writing `f = eps log u` and `g = eps log v` gives the
//! dual potentials. When `eps` is small relative to the costs the kernel
//! underflows, so the iteration moves to the log domain and works on `f`, `g`
//! with log-sum-exp reductions instead.

use super::{centered, check_dims, OtResult, TransportPlan};
use crate::error::{Error, Result};
use crate::ground::GroundMatrix;
use crate::histogram::{Histogram, MASS_TOLERANCE};

/// Zero bins are raised to this inside the iteration only.
pub const MASS_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SinkhornDomain {
    /// Log domain when `eps < 1e-2 * max(D)`, scaling otherwise.
    #[default]
    Auto,
    Scaling,
    Log,
}

#[derive(Debug, Clone, Copy)]
pub struct SinkhornConfig {
    pub epsilon: f64,
    pub max_iter: usize,
    /// Bound on the l1 residual of the source marginal.
    pub tol: f64,
    pub domain: SinkhornDomain,
}

impl SinkhornConfig {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            max_iter: 100_000,
            tol: 1e-9,
            domain: SinkhornDomain::Auto,
        }
    }
}

/// Approximate transport from `s` to `t`. A run that hits `max_iter` is
/// returned with `converged == false`.
///
/// `grad_source` is the source potential `f` centered to zero mean. It is the
/// exact gradient of `objective` (the regularized value) and an envelope
/// approximation of the gradient of `cost = <P, D>`.
pub fn sinkhorn(s: &Histogram, t: &Histogram, d: &GroundMatrix, config: &SinkhornConfig) -> Result<OtResult> {
    check_dims(s, t, d)?;
    let eps = config.epsilon;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::invalid(format!("sinkhorn epsilon must be positive, got {eps}")));
    }
    let (ms, mt) = (s.total(), t.total());
    if (ms - mt).abs() > MASS_TOLERANCE {
        return Err(Error::MassMismatch {
            source_mass: ms,
            target_mass: mt,
        });
    }
    let a: Vec<f64> = s.as_slice().iter().map(|&x| x.max(MASS_FLOOR)).collect();
    let scale = if mt > 0.0 { ms / mt } else { 1.0 };
    let b: Vec<f64> = t.as_slice().iter().map(|&x| (x * scale).max(MASS_FLOOR)).collect();

    let log_domain = match config.domain {
        SinkhornDomain::Auto => eps < 1e-2 * d.max(),
        SinkhornDomain::Scaling => false,
        SinkhornDomain::Log => true,
    };
    let mut state = if log_domain { None } else { scaling(&a, &b, d, config) };
    // overflow in the scaling iteration falls back to the log domain
    if state.is_none() {
        state = Some(log_iterations(&a, &b, d, config));
    }
    let Potentials {
        f,
        g,
        iterations,
        converged,
    } = state.expect("log-domain iteration always yields potentials");

    let n = d.n();
    let mut flow = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            flow[i * n + j] = ((f[i] + g[j] - d.get(i, j)) / eps).exp();
        }
    }
    let plan = TransportPlan {
        flow,
        source: s.clone(),
        target: t.clone(),
    };
    let cost = plan.cost(d);
    let objective = dot(&f, &a) + dot(&g, &b) - eps * plan.total();
    Ok(OtResult {
        cost,
        plan,
        grad_source: centered(f),
        objective,
        converged,
        iterations,
    })
}

struct Potentials {
    f: Vec<f64>,
    g: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn scaling(a: &[f64], b: &[f64], d: &GroundMatrix, config: &SinkhornConfig) -> Option<Potentials> {
    let n = a.len();
    let eps = config.epsilon;
    let kernel: Vec<f64> = d.as_slice().iter().map(|c| (-c / eps).exp()).collect();
    let mut u = vec![1.0; n];
    let mut v = vec![1.0; n];
    let mut kv: Vec<f64> = (0..n).map(|i| kernel[i * n..(i + 1) * n].iter().sum()).collect();
    let mut ktu = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iter {
        iterations += 1;
        for i in 0..n {
            u[i] = a[i] / kv[i];
        }
        ktu.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            let row = &kernel[i * n..(i + 1) * n];
            for j in 0..n {
                ktu[j] += row[j] * u[i];
            }
        }
        for j in 0..n {
            v[j] = b[j] / ktu[j];
        }
        let mut residual = 0.0;
        for i in 0..n {
            kv[i] = dot(&kernel[i * n..(i + 1) * n], &v);
            residual += (u[i] * kv[i] - a[i]).abs();
        }
        if !residual.is_finite() || u.iter().chain(&v).any(|x| !x.is_finite() || *x == 0.0) {
            return None;
        }
        if residual < config.tol {
            converged = true;
            break;
        }
    }
    Some(Potentials {
        f: u.iter().map(|x| eps * x.ln()).collect(),
        g: v.iter().map(|x| eps * x.ln()).collect(),
        iterations,
        converged,
    })
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn log_iterations(a: &[f64], b: &[f64], d: &GroundMatrix, config: &SinkhornConfig) -> Potentials {
    let n = a.len();
    let eps = config.epsilon;
    let log_a: Vec<f64> = a.iter().map(|x| x.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|x| x.ln()).collect();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n];
    let row_lse = |g: &[f64], i: usize| log_sum_exp((0..n).map(move |j| (g[j] - d.get(i, j)) / eps));
    let mut rows: Vec<f64> = (0..n).map(|i| row_lse(&g, i)).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iter {
        iterations += 1;
        for i in 0..n {
            f[i] = eps * (log_a[i] - rows[i]);
        }
        for j in 0..n {
            let f = &f;
            let col = log_sum_exp((0..n).map(move |i| (f[i] - d.get(i, j)) / eps));
            g[j] = eps * (log_b[j] - col);
        }
        let mut residual = 0.0;
        for i in 0..n {
            rows[i] = row_lse(&g, i);
            residual += ((f[i] / eps + rows[i]).exp() - a[i]).abs();
        }
        if residual < config.tol {
            converged = true;
            break;
        }
    }
    Potentials {
        f,
        g,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot::{exact_wasserstein, validate_plan};

    fn h(v: &[f64]) -> Histogram {
        Histogram::new(v.to_vec()).unwrap()
    }

    #[test]
    fn identical_marginals_small_cost() {
        let d = GroundMatrix::step(2);
        let s = h(&[0.5, 0.5]);
        let r = sinkhorn(&s, &s, &d, &SinkhornConfig::new(0.01)).unwrap();
        assert!(r.converged);
        assert!(r.cost <= 1e-3, "cost {}", r.cost);
        assert_eq!(exact_wasserstein(&s, &s, &d).unwrap().cost, 0.0);
    }

    #[test]
    fn rows_match_source() {
        let d = GroundMatrix::from_rows(vec![vec![0.0, 1.0, 4.0], vec![2.0, 0.0, 1.0], vec![3.0, 1.0, 0.0]]).unwrap();
        let s = h(&[0.2, 0.5, 0.3]);
        let t = h(&[0.6, 0.1, 0.3]);
        let cfg = SinkhornConfig::new(0.3);
        let r = sinkhorn(&s, &t, &d, &cfg).unwrap();
        assert!(r.converged);
        let res: f64 = r
            .plan
            .row_sums()
            .iter()
            .zip(s.as_slice())
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(res < cfg.tol);
        assert!(validate_plan(&r.plan).is_empty());
    }

    #[test]
    fn large_epsilon_gives_independent_coupling() {
        let d = GroundMatrix::from_rows(vec![vec![0.0, 1.0, 4.0], vec![2.0, 0.0, 1.0], vec![3.0, 1.0, 0.0]]).unwrap();
        let s = h(&[0.2, 0.5, 0.3]);
        let t = h(&[0.6, 0.1, 0.3]);
        let r = sinkhorn(&s, &t, &d, &SinkhornConfig::new(1e6)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((r.plan.get(i, j) - s[i] * t[j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn log_and_scaling_domains_agree() {
        let d = GroundMatrix::from_rows(vec![vec![0.0, 1.0, 4.0], vec![2.0, 0.0, 1.0], vec![3.0, 1.0, 0.0]]).unwrap();
        let s = h(&[0.2, 0.5, 0.3]);
        let t = h(&[0.6, 0.1, 0.3]);
        let mut cfg = SinkhornConfig::new(0.2);
        cfg.tol = 1e-13;
        cfg.domain = SinkhornDomain::Scaling;
        let a = sinkhorn(&s, &t, &d, &cfg).unwrap();
        cfg.domain = SinkhornDomain::Log;
        let b = sinkhorn(&s, &t, &d, &cfg).unwrap();
        assert!((a.cost - b.cost).abs() < 1e-10);
        for (x, y) in a.grad_source.iter().zip(&b.grad_source) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn tiny_epsilon_uses_log_domain_without_underflow() {
        let d = GroundMatrix::from_rows(vec![vec![0.0, 50.0], vec![80.0, 0.0]]).unwrap();
        let s = h(&[0.3, 0.7]);
        let t = h(&[0.6, 0.4]);
        let r = sinkhorn(&s, &t, &d, &SinkhornConfig::new(0.01)).unwrap();
        assert!(r.converged);
        let exact = exact_wasserstein(&s, &t, &d).unwrap().cost;
        assert!((r.cost - exact).abs() / exact < 1e-6);
    }

    #[test]
    fn zero_bins_are_handled() {
        let d = GroundMatrix::step(3);
        let s = h(&[0.0, 0.5, 0.5]);
        let t = Histogram::onehot(3, 1).unwrap();
        let r = sinkhorn(&s, &t, &d, &SinkhornConfig::new(0.05)).unwrap();
        assert!(r.converged);
        assert!((r.cost - 0.5).abs() < 1e-6);
        assert!(validate_plan(&r.plan).is_empty());
    }

    #[test]
    fn non_convergence_is_flagged() {
        let d = GroundMatrix::step(3);
        let s = h(&[0.2, 0.5, 0.3]);
        let t = h(&[0.6, 0.1, 0.3]);
        let cfg = SinkhornConfig {
            epsilon: 0.01,
            max_iter: 1,
            tol: 1e-15,
            domain: SinkhornDomain::Auto,
        };
        let r = sinkhorn(&s, &t, &d, &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn bad_epsilon_rejected() {
        let d = GroundMatrix::step(2);
        let s = h(&[0.5, 0.5]);
        assert!(sinkhorn(&s, &s, &d, &SinkhornConfig::new(0.0)).is_err());
        assert!(sinkhorn(&s, &s, &d, &SinkhornConfig::new(f64::NAN)).is_err());
    }
}
