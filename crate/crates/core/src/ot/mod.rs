//! Discrete optimal transport between class histograms.
//!
//! * [`exact_wasserstein`] solves the transportation problem to optimality.
//! * [`onehot_wasserstein`] is the `O(N)` closed form for a one-hot target,
//!   where the only feasible plan sends every source bin to the target class.
//! * [`l1_wasserstein`] is the closed form under the step ground matrix.
//! * [`sinkhorn`] is the entropic approximation for soft targets.

mod exact;
mod sinkhorn;

pub use exact::{exact_wasserstein, exact_wasserstein_with, ExactConfig, MassPolicy};
pub use sinkhorn::{sinkhorn, SinkhornConfig, SinkhornDomain};

use crate::error::{Error, Result};
use crate::ground::GroundMatrix;
use crate::histogram::{Histogram, MASS_TOLERANCE};

/// Default slack used by [`validate_plan`].
pub const PLAN_TOLERANCE: f64 = 1e-8;

/// Mass flow from source bins (rows) to target bins (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub flow: Vec<f64>,
    pub source: Histogram,
    pub target: Histogram,
}

impl TransportPlan {
    pub fn n(&self) -> usize {
        self.source.len()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.flow[i * self.n() + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let n = self.n();
        (0..n).map(|i| self.flow[i * n..(i + 1) * n].iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let n = self.n();
        (0..n).map(|j| (0..n).map(|i| self.get(i, j)).sum()).collect()
    }

    pub fn total(&self) -> f64 {
        self.flow.iter().sum()
    }

    /// `<plan, D>`.
    pub fn cost(&self, d: &GroundMatrix) -> f64 {
        self.flow.iter().zip(d.as_slice()).map(|(w, c)| w * c).sum()
    }

    pub fn to_csv(&self) -> String {
        let n = self.n();
        let mut out = String::new();
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format!("{}", self.get(i, j))).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Result of a transport solve.
#[derive(Debug, Clone)]
pub struct OtResult {
    /// `<plan, D>`.
    pub cost: f64,
    pub plan: TransportPlan,
    /// Subgradient of the loss with respect to the source histogram.
    pub grad_source: Vec<f64>,
    /// Value whose exact gradient is `grad_source`. Equals `cost` for the
    /// exact solvers; for Sinkhorn it is the entropy-regularized objective.
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// One failed constraint of a transport plan.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanViolation {
    Negative { row: usize, col: usize, value: f64 },
    RowExcess { row: usize, excess: f64 },
    ColumnExcess { col: usize, excess: f64 },
    TotalMismatch { expected: f64, found: f64 },
    Shape { expected: usize, found: usize },
}

/// Checks the transport constraints with the default 1e-8 slack.
pub fn validate_plan(plan: &TransportPlan) -> Vec<PlanViolation> {
    validate_plan_with_tolerance(plan, PLAN_TOLERANCE)
}

pub fn validate_plan_with_tolerance(plan: &TransportPlan, tol: f64) -> Vec<PlanViolation> {
    let n = plan.source.len();
    if plan.target.len() != n || plan.flow.len() != n * n {
        return vec![PlanViolation::Shape {
            expected: n * n,
            found: plan.flow.len(),
        }];
    }
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let value = plan.get(i, j);
            if value < -tol || !value.is_finite() {
                out.push(PlanViolation::Negative { row: i, col: j, value });
            }
        }
    }
    for (i, r) in plan.row_sums().into_iter().enumerate() {
        let excess = r - plan.source[i];
        if excess > tol {
            out.push(PlanViolation::RowExcess { row: i, excess });
        }
    }
    for (j, c) in plan.column_sums().into_iter().enumerate() {
        let excess = c - plan.target[j];
        if excess > tol {
            out.push(PlanViolation::ColumnExcess { col: j, excess });
        }
    }
    let expected = plan.source.total().min(plan.target.total());
    let found = plan.total();
    if (found - expected).abs() > tol {
        out.push(PlanViolation::TotalMismatch { expected, found });
    }
    out
}

fn check_dims(s: &Histogram, t: &Histogram, d: &GroundMatrix) -> Result<()> {
    if s.len() != d.n() {
        return Err(Error::DimensionMismatch {
            expected: d.n(),
            found: s.len(),
        });
    }
    if t.len() != d.n() {
        return Err(Error::DimensionMismatch {
            expected: d.n(),
            found: t.len(),
        });
    }
    Ok(())
}

/// Closed-form loss against a one-hot target at `j_star`:
/// `sum_i s_i D[i][j_star]`. `d_f` is the already-transformed matrix.
pub fn onehot_wasserstein(s: &Histogram, j_star: usize, d_f: &GroundMatrix) -> Result<OtResult> {
    let n = d_f.n();
    if s.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: s.len(),
        });
    }
    if j_star >= n {
        return Err(Error::ClassOutOfRange { index: j_star, n });
    }
    let grad_source = d_f.column(j_star);
    let cost: f64 = s.as_slice().iter().zip(&grad_source).map(|(m, c)| m * c).sum();
    let mut flow = vec![0.0; n * n];
    for (i, &m) in s.as_slice().iter().enumerate() {
        flow[i * n + j_star] = m;
    }
    let mut target = vec![0.0; n];
    target[j_star] = s.total();
    let plan = TransportPlan {
        flow,
        source: s.clone(),
        target: Histogram::unnormalized(target)?,
    };
    Ok(OtResult {
        cost,
        plan,
        grad_source,
        objective: cost,
        converged: true,
        iterations: 0,
    })
}

/// Half the l1 distance: optimal transport under the step ground matrix.
pub fn l1_wasserstein(s: &Histogram, t: &Histogram) -> Result<f64> {
    if s.len() != t.len() {
        return Err(Error::DimensionMismatch {
            expected: s.len(),
            found: t.len(),
        });
    }
    let (ms, mt) = (s.total(), t.total());
    if (ms - mt).abs() > MASS_TOLERANCE {
        return Err(Error::MassMismatch {
            source_mass: ms,
            target_mass: mt,
        });
    }
    Ok(0.5
        * s.as_slice()
            .iter()
            .zip(t.as_slice())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

fn centered(mut v: Vec<f64>) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    v
}
