//! Exact transport via the transportation simplex (a minimum-cost flow on the
//! complete bipartite class graph).
//!
//! The basis is a spanning tree of `m + n - 1` cells, seeded by the
//! north-west corner rule. Each pivot prices the non-basic cells with the
//! tree potentials `u_i + v_j = c_ij`, brings in the most negative reduced
//! cost (lowest cell index on ties) and drops the first minimum-flow cell of
//! the cycle it closes. Runs of degenerate pivots switch to Bland's rule so
//! the method cannot cycle.

use std::collections::VecDeque;

use super::{centered, check_dims, OtResult, TransportPlan};
use crate::error::{Error, Result};
use crate::ground::GroundMatrix;
use crate::histogram::{Histogram, MASS_TOLERANCE};

/// What to do when source and target masses differ by at most 1e-6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MassPolicy {
    /// Scale the target to the source mass.
    #[default]
    Rescale,
    /// Keep the masses and move `min(total source, total target)`.
    Partial,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExactConfig {
    pub mass_policy: MassPolicy,
}

/// Globally optimal transport from `s` to `t` under `d`.
pub fn exact_wasserstein(s: &Histogram, t: &Histogram, d: &GroundMatrix) -> Result<OtResult> {
    exact_wasserstein_with(s, t, d, &ExactConfig::default())
}

pub fn exact_wasserstein_with(
    s: &Histogram,
    t: &Histogram,
    d: &GroundMatrix,
    config: &ExactConfig,
) -> Result<OtResult> {
    check_dims(s, t, d)?;
    let n = d.n();
    let (ms, mt) = (s.total(), t.total());
    if (ms - mt).abs() > MASS_TOLERANCE {
        return Err(Error::MassMismatch {
            source_mass: ms,
            target_mass: mt,
        });
    }

    let supply = s.as_slice().to_vec();
    let mut demand = t.as_slice().to_vec();
    let mut costs = d.as_slice().to_vec();
    let (mut rows, mut cols) = (n, n);
    match config.mass_policy {
        MassPolicy::Rescale => {
            if mt > 0.0 && ms != mt {
                demand.iter_mut().for_each(|b| *b *= ms / mt);
            }
        }
        MassPolicy::Partial => {
            // a zero-cost dummy bin absorbs the surplus side
            if ms > mt {
                demand.push(ms - mt);
                costs = (0..n)
                    .flat_map(|i| d.row(i).iter().copied().chain(std::iter::once(0.0)))
                    .collect();
                cols += 1;
            } else if mt > ms {
                let mut supply_ext = supply.clone();
                supply_ext.push(mt - ms);
                costs.extend(std::iter::repeat_n(0.0, n));
                rows += 1;
                return finish(s, t, d, solve(&supply_ext, &demand, &costs, rows, cols), n);
            }
        }
    }
    let solution = solve(&supply, &demand, &costs, rows, cols);
    finish(s, t, d, solution, n)
}

fn finish(s: &Histogram, t: &Histogram, d: &GroundMatrix, solution: Solution, n: usize) -> Result<OtResult> {
    let cols = solution.cols;
    let mut flow = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            flow[i * n + j] = solution.flow[i * cols + j];
        }
    }
    let plan = TransportPlan {
        flow,
        source: s.clone(),
        target: t.clone(),
    };
    let cost = plan.cost(d);
    Ok(OtResult {
        cost,
        plan,
        grad_source: centered(solution.u[..n].to_vec()),
        objective: cost,
        converged: solution.optimal,
        iterations: solution.pivots,
    })
}

struct Solution {
    cols: usize,
    flow: Vec<f64>,
    u: Vec<f64>,
    pivots: usize,
    optimal: bool,
}

/// Degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_STREAK: usize = 32;

fn solve(supply: &[f64], demand: &[f64], costs: &[f64], m: usize, n: usize) -> Solution {
    let mut flow = vec![0.0; m * n];
    let mut basic = vec![false; m * n];
    north_west_corner(supply, demand, n, &mut flow, &mut basic);

    let scale = costs.iter().fold(1.0_f64, |acc, c| acc.max(c.abs()));
    let eps = 1e-12 * scale;
    let max_pivots = 50 * m * n + 1000;

    let mut u = vec![0.0; m];
    let mut v = vec![0.0; n];
    let mut pivots = 0;
    let mut streak = 0;
    let mut optimal = false;
    let mut tree = Tree::new(m, n);
    while pivots < max_pivots {
        tree.rebuild(&basic);
        tree.potentials(costs, &mut u, &mut v);

        let bland = streak >= DEGENERATE_STREAK;
        let mut entering = None;
        let mut best = -eps;
        'scan: for i in 0..m {
            for j in 0..n {
                let k = i * n + j;
                if basic[k] {
                    continue;
                }
                let reduced = costs[k] - u[i] - v[j];
                if reduced < best {
                    entering = Some((i, j));
                    if bland {
                        break 'scan;
                    }
                    best = reduced;
                }
            }
        }
        let Some((p, q)) = entering else {
            optimal = true;
            break;
        };

        let cycle = tree.path(p, q);
        // cycle[0], cycle[2], ... lose flow; cycle[1], cycle[3], ... gain
        let mut leave = cycle[0];
        for &k in cycle.iter().step_by(2) {
            if flow[k] < flow[leave] || (flow[k] == flow[leave] && k < leave) {
                leave = k;
            }
        }
        let theta = flow[leave];
        for (pos, &k) in cycle.iter().enumerate() {
            if pos % 2 == 0 {
                flow[k] = (flow[k] - theta).max(0.0);
            } else {
                flow[k] += theta;
            }
        }
        let enter = p * n + q;
        flow[enter] = theta;
        flow[leave] = 0.0;
        basic[leave] = false;
        basic[enter] = true;
        pivots += 1;
        streak = if theta > 0.0 { 0 } else { streak + 1 };
    }
    Solution {
        cols: n,
        flow,
        u,
        pivots,
        optimal,
    }
}

fn north_west_corner(supply: &[f64], demand: &[f64], n: usize, flow: &mut [f64], basic: &mut [bool]) {
    let m = supply.len();
    let mut ra = supply.to_vec();
    let mut rb = demand.to_vec();
    let (mut i, mut j) = (0, 0);
    loop {
        let x = ra[i].min(rb[j]).max(0.0);
        flow[i * n + j] = x;
        basic[i * n + j] = true;
        ra[i] -= x;
        rb[j] -= x;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if i == m - 1 {
            j += 1;
        } else if j == n - 1 || ra[i] <= rb[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
}

/// Adjacency of the basis tree; row nodes are `0..m`, column nodes `m..m+n`.
struct Tree {
    m: usize,
    n: usize,
    adj: Vec<Vec<usize>>,
    parent: Vec<usize>,
    seen: Vec<bool>,
    queue: VecDeque<usize>,
    order: Vec<usize>,
}

impl Tree {
    fn new(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            adj: vec![Vec::new(); m + n],
            parent: vec![usize::MAX; m + n],
            seen: vec![false; m + n],
            queue: VecDeque::new(),
            order: Vec::with_capacity(m + n),
        }
    }

    fn rebuild(&mut self, basic: &[bool]) {
        self.adj.iter_mut().for_each(Vec::clear);
        for i in 0..self.m {
            for j in 0..self.n {
                if basic[i * self.n + j] {
                    self.adj[i].push(self.m + j);
                    self.adj[self.m + j].push(i);
                }
            }
        }
    }

    fn bfs(&mut self, root: usize) {
        self.seen.iter_mut().for_each(|s| *s = false);
        self.parent.iter_mut().for_each(|p| *p = usize::MAX);
        self.queue.clear();
        self.order.clear();
        self.seen[root] = true;
        self.queue.push_back(root);
        while let Some(x) = self.queue.pop_front() {
            self.order.push(x);
            for idx in 0..self.adj[x].len() {
                let y = self.adj[x][idx];
                if !self.seen[y] {
                    self.seen[y] = true;
                    self.parent[y] = x;
                    self.queue.push_back(y);
                }
            }
        }
    }

    fn cell(&self, a: usize, b: usize) -> usize {
        let (row, col) = if a < self.m { (a, b - self.m) } else { (b, a - self.m) };
        row * self.n + col
    }

    /// Dual potentials with `u[0] = 0`.
    fn potentials(&mut self, costs: &[f64], u: &mut [f64], v: &mut [f64]) {
        self.bfs(0);
        u[0] = 0.0;
        // BFS order prices every parent before its children
        for idx in 1..self.order.len() {
            let x = self.order[idx];
            let p = self.parent[x];
            let c = costs[self.cell(x, p)];
            if x < self.m {
                u[x] = c - v[p - self.m];
            } else {
                v[x - self.m] = c - u[p];
            }
        }
    }

    /// Basis cells on the tree path from column `q` back to row `p`,
    /// starting with the cell that touches column `q`.
    fn path(&mut self, p: usize, q: usize) -> Vec<usize> {
        self.bfs(p);
        let mut cells = Vec::new();
        let mut x = self.m + q;
        while x != p {
            let parent = self.parent[x];
            cells.push(self.cell(x, parent));
            x = parent;
        }
        cells
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot::validate_plan;

    fn h(v: &[f64]) -> Histogram {
        Histogram::new(v.to_vec()).unwrap()
    }

    #[test]
    fn identity_costs_nothing() {
        let d = GroundMatrix::from_rows(vec![vec![0.0, 2.0, 3.0], vec![1.0, 0.0, 4.0], vec![5.0, 1.0, 0.0]]).unwrap();
        let s = h(&[0.2, 0.3, 0.5]);
        let r = exact_wasserstein(&s, &s, &d).unwrap();
        assert_eq!(r.cost, 0.0);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(r.plan.get(i, j), 0.0);
                }
            }
        }
        assert!(validate_plan(&r.plan).is_empty());
    }

    #[test]
    fn two_bin_swap() {
        let d = GroundMatrix::step(2);
        let r = exact_wasserstein(&h(&[0.7, 0.3]), &h(&[0.3, 0.7]), &d).unwrap();
        assert!((r.cost - 0.4).abs() < 1e-15);
        assert!(r.converged);
    }

    #[test]
    fn hand_solved_asymmetric_instance() {
        // moving from bin 0 to bin 2 directly costs 10, via the cheap route 1
        let d = GroundMatrix::from_rows(vec![vec![0.0, 1.0, 10.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]]).unwrap();
        let s = h(&[0.5, 0.5, 0.0]);
        let t = h(&[0.0, 0.5, 0.5]);
        // optimal: 0 -> 1 (0.5, cost 1), 1 -> 2 (0.5, cost 1) = 1.0
        let r = exact_wasserstein(&s, &t, &d).unwrap();
        assert!((r.cost - 1.0).abs() < 1e-12);
        assert!(validate_plan(&r.plan).is_empty());
    }

    #[test]
    fn mass_mismatch_rules() {
        let d = GroundMatrix::step(2);
        let s = Histogram::unnormalized(vec![0.5, 0.5]).unwrap();
        let far = Histogram::unnormalized(vec![0.5, 0.6]).unwrap();
        assert!(matches!(
            exact_wasserstein(&s, &far, &d),
            Err(Error::MassMismatch { .. })
        ));

        let near = Histogram::unnormalized(vec![0.5, 0.5 + 5e-7]).unwrap();
        let r = exact_wasserstein(&s, &near, &d).unwrap();
        assert!(r.cost < 1e-6);

        let partial = ExactConfig {
            mass_policy: MassPolicy::Partial,
        };
        let r = exact_wasserstein_with(&s, &near, &d, &partial).unwrap();
        assert!((r.plan.total() - 1.0).abs() < 1e-15);
        assert!(validate_plan(&r.plan).is_empty());
        let r = exact_wasserstein_with(&near, &s, &d, &partial).unwrap();
        assert!((r.plan.total() - 1.0).abs() < 1e-15);
        assert!(validate_plan(&r.plan).is_empty());
    }

    #[test]
    fn dimension_mismatch() {
        let d = GroundMatrix::step(3);
        assert!(exact_wasserstein(&h(&[0.5, 0.5]), &h(&[0.5, 0.5]), &d).is_err());
    }

    #[test]
    fn duals_certify_optimality() {
        let d = GroundMatrix::from_rows(vec![
            vec![0.0, 3.0, 1.0, 4.0],
            vec![2.0, 0.0, 6.0, 1.0],
            vec![5.0, 2.0, 0.0, 3.0],
            vec![1.0, 4.0, 2.0, 0.0],
        ])
        .unwrap();
        let s = h(&[0.1, 0.4, 0.3, 0.2]);
        let t = h(&[0.25, 0.25, 0.25, 0.25]);
        let r = exact_wasserstein(&s, &t, &d).unwrap();
        let u = &r.grad_source;
        // complementary slackness gives v_j = min_i (c_ij - u_i) and
        // dual objective = primal cost
        let v: Vec<f64> = (0..4)
            .map(|j| (0..4).map(|i| d.get(i, j) - u[i]).fold(f64::INFINITY, f64::min))
            .collect();
        let dual: f64 = (0..4).map(|i| u[i] * s[i] + v[i] * t[i]).sum();
        assert!((dual - r.cost).abs() < 1e-12, "dual {dual} primal {}", r.cost);
    }

    #[test]
    fn deterministic_plans() {
        let d = GroundMatrix::step(4);
        let s = h(&[0.25, 0.25, 0.25, 0.25]);
        let t = h(&[0.1, 0.2, 0.3, 0.4]);
        let a = exact_wasserstein(&s, &t, &d).unwrap();
        let b = exact_wasserstein(&s, &t, &d).unwrap();
        assert_eq!(a.plan, b.plan);
    }
}
