use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sevot::metrics::{driving_metrics, InfractionKind};
use sevot_lab::drive::*;

fn run_random(seed: u64, cfg: &TrackConfig) -> (Vec<StepOutcome>, Vec<StepLog>) {
    let mut world = World::reset(seed, cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outcomes = Vec::new();
    let mut logs = Vec::new();
    while !world.is_done() {
        let a = Action::random(&mut rng);
        let out = world.step(a).unwrap();
        logs.push(StepLog::new(&world, a, &out));
        outcomes.push(out);
    }
    (outcomes, logs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reward_identity_holds(seed in any::<u64>()) {
        let cfg = TrackConfig::default();
        let (outcomes, _) = run_random(seed, &cfg);
        prop_assert!(outcomes.len() <= MAX_STEPS);
        for o in &outcomes {
            prop_assert_eq!(o.reward, 1.0 - o.o_l - o.o_r - 10.0 * o.c);
            prop_assert!(SEVERITY_LADDER.contains(&o.c));
            prop_assert!((0.0..=1.0).contains(&o.o_l) && (0.0..=1.0).contains(&o.o_r));
        }
        prop_assert!(outcomes.last().unwrap().done.is_some());
        prop_assert!(outcomes[..outcomes.len() - 1].iter().all(|o| o.done.is_none()));
    }

    #[test]
    fn reset_is_reproducible(seed in any::<u64>()) {
        let cfg = TrackConfig::default();
        prop_assert_eq!(World::reset(seed, &cfg).unwrap(), World::reset(seed, &cfg).unwrap());
        prop_assert_eq!(run_random(seed, &cfg).0, run_random(seed, &cfg).0);
    }

    #[test]
    fn short_cap_times_out(seed in any::<u64>(), cap in 1usize..20) {
        let cfg = TrackConfig { max_steps: cap, amplitude: 0.0, objects: 0, ..TrackConfig::default() };
        let mut world = World::reset(seed, &cfg).unwrap();
        let mut steps = 0;
        while !world.is_done() {
            world.step(Action::new(0.0, 0.0, 0.0)).unwrap();
            steps += 1;
        }
        prop_assert_eq!(steps, cap);
        prop_assert_eq!(world.state().done, Some(DoneReason::Timeout));
    }
}

#[test]
fn stepping_after_done_fails() {
    let cfg = TrackConfig {
        max_steps: 1,
        ..TrackConfig::default()
    };
    let mut world = World::reset(0, &cfg).unwrap();
    world.step(Action::new(0.0, 0.0, 0.0)).unwrap();
    assert!(world.step(Action::new(0.0, 0.0, 0.0)).is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    for cfg in [
        TrackConfig {
            max_steps: MAX_STEPS + 1,
            ..TrackConfig::default()
        },
        TrackConfig {
            lane_width: 0.0,
            ..TrackConfig::default()
        },
        TrackConfig {
            psi: -1.0,
            ..TrackConfig::default()
        },
    ] {
        assert!(World::reset(0, &cfg).is_err());
    }
}

#[test]
fn random_policy_report_is_finite() {
    let cfg = TrackConfig::default();
    let records: Vec<_> = (0..40).map(|s| episode_record(&run_random(s, &cfg).1, 1.0)).collect();
    let report = driving_metrics(&records, cfg.max_steps, cfg.dt).unwrap();
    assert!(report.km > 0.0);
    assert!(report.infraction_counts.values().sum::<usize>() > 0);
    let offline = report.infraction_counts[&InfractionKind::OffLine];
    assert!(offline > 0);
}

#[test]
fn logs_survive_a_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("episode.jsonl");
    let (_, logs) = run_random(3, &TrackConfig::default());
    write_log(&path, &logs).unwrap();
    assert_eq!(read_log(&path).unwrap(), logs);
}
