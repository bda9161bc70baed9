use proptest::prelude::*;
use sevot::ground::{build_importance_matrix, centroid_distances, class_centroids, update_learned_matrix};
use sevot::metrics::{
    driving_metrics, iou, severity_score, ConfusionMatrix, DrivingRecord, Infraction, InfractionKind,
};
use sevot::ot::{
    exact_wasserstein, l1_wasserstein, onehot_wasserstein, sinkhorn, validate_plan, validate_plan_with_tolerance,
    SinkhornConfig,
};
use sevot::{GroundMatrix, Histogram, ImportanceGrouping, MetricTransform};

fn histogram(n: usize) -> impl Strategy<Value = Histogram> {
    prop::collection::vec(0.0f64..1.0, n).prop_map(|v| {
        let v: Vec<f64> = v.into_iter().map(|x| x + 1e-3).collect();
        Histogram::normalized(v).unwrap()
    })
}

fn ground(n: usize) -> impl Strategy<Value = GroundMatrix> {
    prop::collection::vec(0.0f64..10.0, n * n).prop_map(move |mut v| {
        for k in 0..n {
            v[k * n + k] = 0.0;
        }
        GroundMatrix::new(n, v).unwrap()
    })
}

fn sized<T: std::fmt::Debug, S: Strategy<Value = T>>(
    max: usize,
    f: impl Fn(usize) -> S + Clone,
) -> impl Strategy<Value = (usize, T)> {
    (1..=max).prop_flat_map(move |n| (Just(n), f(n)))
}

fn transforms() -> impl Strategy<Value = MetricTransform> {
    prop_oneof![
        Just(MetricTransform::Linear),
        Just(MetricTransform::Step),
        (1.0001f64..4.0).prop_map(|r| MetricTransform::power(r).unwrap()),
        (0.01f64..5.0).prop_map(|t| MetricTransform::huber(t).unwrap()),
    ]
}

proptest! {
    #[test]
    fn transforms_are_monotone(f in transforms(), a in 0.0f64..20.0, b in 0.0f64..20.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(f.apply(hi) >= f.apply(lo));
        prop_assert!(f.apply(lo) >= 0.0);
        prop_assert_eq!(f.apply(0.0), 0.0);
    }

    #[test]
    fn power_and_huber_are_convex(rho in 1.0001f64..4.0, tau in 0.01f64..5.0, a in 0.0f64..20.0, b in 0.0f64..20.0) {
        for f in [MetricTransform::power(rho).unwrap(), MetricTransform::huber(tau).unwrap()] {
            let mid = f.apply(0.5 * (a + b));
            let avg = 0.5 * (f.apply(a) + f.apply(b));
            prop_assert!(mid <= avg * (1.0 + 1e-12) + 1e-12);
        }
    }

    #[test]
    fn onehot_closed_form_matches_exact((n, (s, d)) in sized(12, |n| (histogram(n), ground(n))), pick in 0usize..12) {
        let j = pick % n;
        let closed = onehot_wasserstein(&s, j, &d).unwrap();
        let exact = exact_wasserstein(&s, &Histogram::onehot(n, j).unwrap(), &d).unwrap();
        prop_assert!((closed.cost - exact.cost).abs() < 1e-9);
        prop_assert!(validate_plan(&exact.plan).is_empty());
    }

    #[test]
    fn step_matrix_reduces_to_l1((n, (s, t)) in sized(10, |n| (histogram(n), histogram(n)))) {
        let exact = exact_wasserstein(&s, &t, &GroundMatrix::step(n)).unwrap();
        prop_assert!((exact.cost - l1_wasserstein(&s, &t).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn self_transport_is_free((_n, (s, d)) in sized(10, |n| (histogram(n), ground(n)))) {
        let r = exact_wasserstein(&s, &s, &d).unwrap();
        prop_assert!(r.cost.abs() < 1e-12);
    }

    #[test]
    fn exact_cost_is_plan_cost((_n, (s, t, d)) in sized(10, |n| (histogram(n), histogram(n), ground(n)))) {
        let r = exact_wasserstein(&s, &t, &d).unwrap();
        prop_assert!((r.cost - r.plan.cost(&d)).abs() < 1e-10);
        prop_assert!(validate_plan(&r.plan).is_empty());
    }

    #[test]
    fn exact_potentials_certify_optimality((n, (s, t, d)) in sized(8, |n| (histogram(n), histogram(n), ground(n)))) {
        // any other feasible plan, such as the product coupling, costs at least as much
        let r = exact_wasserstein(&s, &t, &d).unwrap();
        let mut product = 0.0;
        for i in 0..n {
            for j in 0..n {
                product += s[i] * t[j] * d.get(i, j);
            }
        }
        prop_assert!(r.cost <= product + 1e-12);
    }

    #[test]
    fn importance_matrix_reduces_to_weighted_miss(
        (n, (groups, s)) in sized(10, |n| (prop::collection::vec(1usize..=4, n), histogram(n))),
        w in prop::collection::vec(0.1f64..5.0, 4),
        pick in 0usize..10,
    ) {
        let mut weights = w;
        weights.sort_by(f64::total_cmp);
        let grouping = ImportanceGrouping::new(groups, weights).unwrap();
        let d = build_importance_matrix(&grouping);
        let j = pick % n;
        let loss = onehot_wasserstein(&s, j, &d).unwrap().cost;
        let expected = grouping.class_weight(j) * (1.0 - s[j]);
        prop_assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn onehot_gradient_matches_finite_differences((n, (s, d)) in sized(8, |n| (histogram(n), ground(n))), pick in 0usize..8, a in 0usize..8, b in 0usize..8) {
        let j = pick % n;
        let (i, k) = (a % n, b % n);
        prop_assume!(i != k);
        let h = 1e-6;
        let r = onehot_wasserstein(&s, j, &d).unwrap();
        let shifted = |sign: f64| {
            let mut v = s.as_slice().to_vec();
            v[i] += sign * h;
            v[k] -= sign * h;
            onehot_wasserstein(&Histogram::unnormalized(v.iter().map(|x| x.max(0.0)).collect()).unwrap(), j, &d).unwrap().cost
        };
        prop_assume!(s[i] > h && s[k] > h);
        let numeric = (shifted(1.0) - shifted(-1.0)) / (2.0 * h);
        let analytic = r.grad_source[i] - r.grad_source[k];
        let scale = analytic.abs().max(numeric.abs()).max(1e-8);
        prop_assert!((numeric - analytic).abs() / scale < 1e-6 || (numeric - analytic).abs() < 1e-8);
    }

    #[test]
    fn sinkhorn_plans_are_valid((_n, (s, t, d)) in sized(8, |n| (histogram(n), histogram(n), ground(n))), eps in 0.05f64..5.0) {
        let r = sinkhorn(&s, &t, &d, &SinkhornConfig::new(eps)).unwrap();
        prop_assert!(validate_plan_with_tolerance(&r.plan, 1e-6).is_empty());
        prop_assert!((r.cost - r.plan.cost(&d)).abs() < 1e-10);
    }

    #[test]
    fn csv_round_trip((_n, d) in sized(9, ground)) {
        prop_assert_eq!(GroundMatrix::from_csv(&d.to_csv()).unwrap(), d);
    }

    #[test]
    fn learned_update_symmetry(
        (n, (raw, feats)) in sized(6, |n| (prop::collection::vec(0.0f64..5.0, n * n), prop::collection::vec(-1.0f64..1.0, n * 3))),
        alpha in 0.0f64..10.0,
        f in transforms(),
    ) {
        let centroids: Vec<Option<Vec<f64>>> = feats.chunks(3).map(|c| Some(c.to_vec())).collect();
        let dbar = centroid_distances(&centroids);
        let mut asym = raw.clone();
        let mut sym = raw.clone();
        for i in 0..n {
            asym[i * n + i] = 0.0;
            sym[i * n + i] = 0.0;
            for j in 0..i {
                sym[i * n + j] = sym[j * n + i];
            }
        }
        let sym = GroundMatrix::new(n, sym).unwrap();
        let asym = GroundMatrix::new(n, asym).unwrap();
        prop_assert!(update_learned_matrix(&sym, &dbar, alpha, &f).unwrap().is_symmetric());
        let out = update_learned_matrix(&asym, &dbar, alpha, &f).unwrap();
        for i in 0..n {
            for j in 0..n {
                let got = out.get(i, j) - out.get(j, i);
                let want = alpha / (1.0 + alpha) * (f.apply(asym.get(i, j)) - f.apply(asym.get(j, i)));
                prop_assert!((got - want).abs() < 1e-9 * (1.0 + want.abs()));
            }
        }
    }

    #[test]
    fn centroid_distances_match_naive_loop(feats in prop::collection::vec(-3.0f64..3.0, 12)) {
        let centroids: Vec<Option<Vec<f64>>> = feats.chunks(4).map(|c| Some(c.to_vec())).collect();
        let table = centroid_distances(&centroids);
        for i in 0..3 {
            for j in 0..3 {
                let mut naive = 0.0;
                for k in 0..4 {
                    naive += (feats[i * 4 + k] - feats[j * 4 + k]).abs();
                }
                prop_assert_eq!(table.get(i, j), Some(naive));
            }
        }
    }

    #[test]
    fn iou_is_relabeling_equivariant(counts in prop::collection::vec(0u64..50, 16), perm in Just((0..4).collect::<Vec<usize>>()).prop_shuffle()) {
        let cm = ConfusionMatrix::from_counts(4, counts).unwrap();
        let base = iou(&cm);
        let moved = iou(&cm.permuted(&perm));
        for k in 0..4 {
            prop_assert_eq!(moved.per_class[perm[k]], base.per_class[k]);
        }
    }

    #[test]
    fn step_severity_is_error_rate(counts in prop::collection::vec(0u64..50, 25)) {
        let cm = ConfusionMatrix::from_counts(5, counts).unwrap();
        prop_assume!(cm.total() > 0);
        let s = severity_score(&cm, &GroundMatrix::step(5)).unwrap();
        prop_assert!((s - (1.0 - cm.accuracy())).abs() < 1e-12);
    }

    #[test]
    fn driving_totals_are_additive(eps in prop::collection::vec((1usize..500, 0.0f64..3.0, 0usize..4), 1..8)) {
        let records: Vec<DrivingRecord> = eps
            .iter()
            .map(|&(steps, km, hits)| DrivingRecord {
                steps,
                distance_km: km,
                infractions: (0..hits)
                    .map(|k| Infraction { kind: InfractionKind::ALL[k % 5], step: k, position: (0.0, 0.0) })
                    .collect(),
                reached_goal: hits == 0,
            })
            .collect();
        let all = driving_metrics(&records, 10_000, 0.1).unwrap();
        let mut steps = 0;
        let mut km = 0.0;
        let mut counts = std::collections::BTreeMap::new();
        for r in &records {
            let one = driving_metrics(std::slice::from_ref(r), 10_000, 0.1).unwrap();
            steps += one.total_steps;
            km += one.km;
            for (k, c) in one.infraction_counts {
                *counts.entry(k).or_insert(0) += c;
            }
        }
        prop_assert_eq!(all.total_steps, steps);
        prop_assert!((all.km - km).abs() < 1e-12);
        prop_assert_eq!(all.infraction_counts, counts);
    }
}

#[test]
fn sinkhorn_error_shrinks_along_epsilon_ladder() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let n = rng.random_range(2..=8);
        let s = Histogram::normalized((0..n).map(|_| rng.random_range(0.05..1.0)).collect()).unwrap();
        let t = Histogram::normalized((0..n).map(|_| rng.random_range(0.05..1.0)).collect()).unwrap();
        let mut costs = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    costs[i * n + j] = rng.random_range(0.1..5.0);
                }
            }
        }
        let d = GroundMatrix::new(n, costs).unwrap();
        let exact = exact_wasserstein(&s, &t, &d).unwrap().cost;
        let mut last = f64::INFINITY;
        for scale in [1.0, 0.3, 0.1, 0.03, 0.01] {
            let r = sinkhorn(&s, &t, &d, &SinkhornConfig::new(scale * d.mean_off_diagonal())).unwrap();
            let err = (r.cost - exact).abs();
            assert!(err <= last + 1e-9, "error rose to {err} from {last}");
            last = err;
        }
    }
}

#[test]
fn centroids_skip_missing_classes() {
    let rows = [vec![0.0, 0.0], vec![2.0, 2.0]];
    let c = class_centroids(rows.iter().map(|r| (r.as_slice(), 0)), 2, 2).unwrap();
    assert_eq!(c[0], Some(vec![1.0, 1.0]));
    assert_eq!(c[1], None);
    let table = centroid_distances(&c);
    assert_eq!(table.get(0, 1), None);
}
