//! Exhaustive transport oracle over small integer-mass instances.
//!
//! Every vertex of the transportation polytope is a basic solution whose
//! support lies on a spanning tree of the bipartite row/column graph, so the
//! minimum over all spanning-tree bases with nonnegative flows is the optimum.

/// Minimum transport cost for integer masses `s`, `t` over a common
/// denominator `denom`. `d` is row-major `n x n`.
pub fn brute_force_cost(s: &[i64], t: &[i64], d: &[f64], denom: i64) -> f64 {
    let n = s.len();
    assert_eq!(t.len(), n);
    assert_eq!(s.iter().sum::<i64>(), t.iter().sum::<i64>());
    let cells = n * n;
    let basis = 2 * n - 1;
    let mut best = f64::INFINITY;
    let mut pick: Vec<usize> = (0..basis).collect();
    loop {
        if let Some(flows) = tree_flows(&pick, s, t) {
            let cost: f64 = pick
                .iter()
                .zip(&flows)
                .map(|(&c, &w)| w as f64 / denom as f64 * d[c])
                .sum();
            best = best.min(cost);
        }
        if !next_combination(&mut pick, cells) {
            break;
        }
    }
    best
}

fn next_combination(pick: &mut [usize], n: usize) -> bool {
    let k = pick.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if pick[i] < n - k + i {
            pick[i] += 1;
            for j in i + 1..k {
                pick[j] = pick[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Flows on the chosen cells by repeatedly peeling a leaf node. `None` when
/// the cells contain a cycle or any flow is negative.
fn tree_flows(pick: &[usize], s: &[i64], t: &[i64]) -> Option<Vec<i64>> {
    let n = s.len();
    let mut residual: Vec<i64> = s.iter().chain(t).copied().collect();
    let ends: Vec<(usize, usize)> = pick.iter().map(|&c| (c / n, n + c % n)).collect();
    let mut degree = vec![0usize; 2 * n];
    for &(a, b) in &ends {
        degree[a] += 1;
        degree[b] += 1;
    }
    let mut flows = vec![0i64; pick.len()];
    let mut done = vec![false; pick.len()];
    for _ in 0..pick.len() {
        let (e, leaf) = (0..pick.len()).filter(|&e| !done[e]).find_map(|e| {
            let (a, b) = ends[e];
            if degree[a] == 1 {
                Some((e, a))
            } else if degree[b] == 1 {
                Some((e, b))
            } else {
                None
            }
        })?;
        let (a, b) = ends[e];
        let other = if leaf == a { b } else { a };
        let w = residual[leaf];
        if w < 0 {
            return None;
        }
        flows[e] = w;
        residual[leaf] = 0;
        residual[other] -= w;
        degree[a] -= 1;
        degree[b] -= 1;
        done[e] = true;
    }
    residual.iter().all(|&r| r == 0).then_some(flows)
}
