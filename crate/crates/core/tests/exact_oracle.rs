mod support;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sevot::ot::{exact_wasserstein, validate_plan};
use sevot::{GroundMatrix, Histogram};
use support::oracle::brute_force_cost;

fn composition(rng: &mut ChaCha8Rng, n: usize, total: i64) -> Vec<i64> {
    let mut cuts: Vec<i64> = (0..n - 1).map(|_| rng.random_range(0..=total)).collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(n);
    let mut prev = 0;
    for c in cuts {
        out.push(c - prev);
        prev = c;
    }
    out.push(total - prev);
    out
}

#[test]
fn oracle_on_hand_instance() {
    let d = [0.0, 1.0, 1.0, 0.0];
    assert_eq!(brute_force_cost(&[45, 19], &[19, 45], &d, 64), 26.0 / 64.0);
}

#[test]
fn exact_solver_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..60 {
        let n = rng.random_range(1..=4);
        let s = composition(&mut rng, n, 64);
        let t = composition(&mut rng, n, 64);
        let mut costs = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    costs[i * n + j] = (rng.random_range(0..=40) as f64) / 4.0;
                }
            }
        }
        let d = GroundMatrix::new(n, costs.clone()).unwrap();
        let hs = Histogram::new(s.iter().map(|&k| k as f64 / 64.0).collect()).unwrap();
        let ht = Histogram::new(t.iter().map(|&k| k as f64 / 64.0).collect()).unwrap();
        let r = exact_wasserstein(&hs, &ht, &d).unwrap();
        let oracle = brute_force_cost(&s, &t, &costs, 64);
        assert!(
            (r.cost - oracle).abs() < 1e-9,
            "{s:?} {t:?} {costs:?}: {} vs {oracle}",
            r.cost
        );
        assert!(validate_plan(&r.plan).is_empty());
    }
}
