use super::*;

fn angle_between(a: [f64; 2], b: [f64; 2]) -> f64 {
    (dot(a, b) / (a[0].hypot(a[1]) * b[0].hypot(b[1])))
        .clamp(-1.0, 1.0)
        .acos()
}

fn zero_action(task: TaskKind) -> Vec<f64> {
    vec![0.0; task.action_dim()]
}

#[test]
fn reset_is_deterministic_and_in_bounds() {
    for task in TaskKind::ALL {
        assert_eq!(reset(task, 17), reset(task, 17));
        assert_ne!(reset(task, 17), reset(task, 18));
        for seed in 0..1000 {
            let s = reset(task, seed);
            assert!(s.in_workspace(), "{task} seed {seed}");
            let target = if task == TaskKind::PegInSlot {
                s.slot.mouth
            } else {
                s.object_pos
            };
            assert!(dist(s.gripper_pos, target) >= 0.4);
            assert!(!is_success(&s));
        }
    }
}

#[test]
fn zero_action_only_advances_clock() {
    for task in TaskKind::ALL {
        let s = reset(task, 3);
        let next = step(&s, &zero_action(task)).unwrap();
        assert_eq!(next, SimState { step_count: 1, ..s });
    }
}

#[test]
fn far_gripper_leaves_object() {
    for task in [TaskKind::ReachLift, TaskKind::PushBlock] {
        let s = reset(task, 5);
        let mut a = zero_action(task);
        a[0] = 0.05;
        a[1] = -0.05;
        if task == TaskKind::ReachLift {
            a[2] = 1.0;
        }
        assert_eq!(step(&s, &a).unwrap().object_pos, s.object_pos);
    }
}

#[test]
fn actions_are_clipped() {
    let s = reset(TaskKind::PushBlock, 9);
    let next = step(&s, &[3.0, -0.01]).unwrap();
    assert!((next.gripper_vel[0] - MAX_STEP).abs() < 1e-15);
    assert!((next.gripper_vel[1] + 0.01).abs() < 1e-15);
    assert!(step(&s, &[0.0]).is_err());
}

#[test]
fn push_toward_goal_reduces_distance() {
    let mut s = reset(TaskKind::PushBlock, 0);
    s.object_pos = [0.0, 0.0];
    s.goal_pos = [0.2, 0.0];
    s.gripper_pos = [-0.066, 0.0];
    let before = dist(s.object_pos, s.goal_pos);
    let next = step(&s, &[0.04, 0.0]).unwrap();
    assert!(next.contact);
    assert!(dist(next.object_pos, next.goal_pos) < before - 0.03);
}

#[test]
fn grasp_requires_closure_and_proximity() {
    let mut s = reset(TaskKind::ReachLift, 1);
    s.gripper_pos = add(s.object_pos, [0.02, 0.0]);
    assert!(!step(&s, &[0.0, 0.0, 0.0]).unwrap().attached);
    let held = step(&s, &[0.0, 0.0, 1.0]).unwrap();
    assert!(held.attached);
    let carried = step(&held, &[0.03, 0.01, 1.0]).unwrap();
    assert_eq!(
        sub(carried.object_pos, held.object_pos),
        carried.gripper_vel
    );
    assert!(!step(&carried, &[0.0, 0.0, 0.0]).unwrap().attached);
    s.gripper_pos = add(s.object_pos, [0.1, 0.0]);
    assert!(!step(&s, &[0.0, 0.0, 1.0]).unwrap().attached);
}

#[test]
fn constructed_goal_states_succeed() {
    let mut s = reset(TaskKind::ReachLift, 2);
    s.object_pos = s.goal_pos;
    s.gripper_pos = s.goal_pos;
    assert!(!is_success(&s));
    s.attached = true;
    assert!(is_success(&s));

    let mut s = reset(TaskKind::PushBlock, 2);
    s.object_pos = s.goal_pos;
    assert!(is_success(&s));

    let mut s = reset(TaskKind::PegInSlot, 2);
    s.object_pos = s.goal_pos;
    s.gripper_pos = s.goal_pos;
    assert!(is_success(&s));
    s.object_pos = s.slot.mouth;
    assert!(!is_success(&s));
}

#[test]
fn expert_succeeds_on_nearly_all_seeds() {
    for task in TaskKind::ALL {
        let wins = (0..200)
            .filter(|&seed| {
                let mut rng = stream_rng(seed, 1);
                rollout_expert(reset(task, seed), &mut rng)
                    .unwrap()
                    .success()
            })
            .count();
        assert!(wins >= 190, "{task}: {wins}/200");
    }
}

#[test]
fn expert_idles_at_goal() {
    let mut rng = stream_rng(0, 0);
    for task in TaskKind::ALL {
        let mut r = stream_rng(4, 1);
        let last = rollout_expert(reset(task, 4), &mut r).unwrap().last;
        assert!(is_success(&last));
        let a = scripted_expert(&last, &mut rng);
        assert!(a[0].hypot(a[1]) < 1e-3, "{task}: {a:?}");
    }
}

#[test]
fn expert_heads_for_target_from_reset() {
    let mut rng = stream_rng(0, 0);
    for task in TaskKind::ALL {
        for seed in 0..100 {
            let s = reset(task, seed);
            let a = scripted_expert(&s, &mut rng);
            let a = [a[0], a[1]];
            if task == TaskKind::PushBlock {
                // Closes in along the push line while removing the lateral offset.
                let d = unit(sub(s.goal_pos, s.object_pos));
                let n = [-d[1], d[0]];
                let lat = dot(sub(s.gripper_pos, s.object_pos), n);
                assert!(dot(a, d) > 0.0, "seed {seed}");
                assert!(dot(a, n) * lat <= 0.0, "seed {seed}");
                continue;
            }
            let target = if task == TaskKind::PegInSlot {
                s.slot.mouth
            } else {
                s.object_pos
            };
            let err = angle_between(a, sub(target, s.gripper_pos));
            assert!(
                err < 5f64.to_radians(),
                "{task} seed {seed}: {}",
                err.to_degrees()
            );
        }
    }
}

#[test]
fn perturbed_rollout_records_clean_actions() {
    let (mut r1, mut r2) = (stream_rng(5, 1), stream_rng(5, 1));
    let start = reset(TaskKind::PushBlock, 5);
    let noisy = rollout_expert_perturbed(start, &mut r1, 0.01, &mut stream_rng(5, 2)).unwrap();
    for (s, a) in noisy.states.iter().zip(&noisy.actions) {
        assert_eq!(&scripted_expert(s, &mut r2), a);
    }
    let clean = rollout_expert(start, &mut stream_rng(5, 1)).unwrap();
    assert_ne!(noisy.states, clean.states);
}

#[test]
fn insertion_actions_vary_more_than_approach_actions() {
    let mut r = stream_rng(11, 1);
    let run = rollout_expert(reset(TaskKind::PegInSlot, 11), &mut r).unwrap();
    let approach = run.states[0];
    let insert = *run.states.iter().find(|s| in_slot_approach(s)).unwrap();
    let variance = |s: &SimState| {
        let mut rng = stream_rng(99, 0);
        let xs: Vec<f64> = (0..100).map(|_| scripted_expert(s, &mut rng)[0]).collect();
        let m = xs.iter().sum::<f64>() / 100.0;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 99.0
    };
    assert!(variance(&approach) < 1e-20);
    assert!(variance(&insert) > 1e-5);
}

#[test]
fn demos_are_reproducible_and_reload_exactly() {
    let a = gen_demos(TaskKind::PegInSlot, 20, 42).unwrap();
    let b = gen_demos_with(
        TaskKind::PegInSlot,
        20,
        42,
        crate::par::ExecPolicy::Sequential,
    )
    .unwrap();
    assert_eq!(a, b);
    assert_eq!(a.demos.len(), 20);
    assert!(a
        .demos
        .iter()
        .all(|d| d.success && d.observations.len() == d.actions.len()));
    let mut buf = Vec::new();
    write_demos(&a, &mut buf).unwrap();
    let mut again = Vec::new();
    write_demos(&b, &mut again).unwrap();
    assert_eq!(buf, again);
    assert_eq!(read_demos(&mut buf.as_slice()).unwrap(), a);
}

#[test]
fn demo_loader_rejects_bad_lengths() {
    let set = gen_demos(TaskKind::ReachLift, 2, 1).unwrap();
    let mut buf = Vec::new();
    write_demos(&set, &mut buf).unwrap();
    assert!(read_demos(&mut &buf[..buf.len() - 3]).is_err());
    let mut extra = buf.clone();
    extra.push(0);
    assert!(read_demos(&mut extra.as_slice()).is_err());
    let mut wrong = buf.clone();
    wrong[9..13].copy_from_slice(&7u32.to_le_bytes());
    assert!(read_demos(&mut wrong.as_slice()).is_err());
}

#[test]
fn observation_round_trips() {
    let s = reset(TaskKind::PegInSlot, 8);
    let back = SimState::from_observation(s.task, &s.observation(), s.step_count).unwrap();
    assert_eq!(back, s);
}

#[test]
fn trajectories_are_bitwise_reproducible() {
    let actions: Vec<[f64; 2]> = (0..60)
        .map(|k| {
            [
                0.04 * (k as f64 * 0.3).sin(),
                -0.03 * (k as f64 * 0.2).cos(),
            ]
        })
        .collect();
    for task in [TaskKind::PushBlock, TaskKind::PegInSlot] {
        let run = || {
            let mut s = reset(task, 21);
            let mut out = vec![s];
            for a in &actions {
                s = step(&s, a).unwrap();
                out.push(s);
            }
            out
        };
        assert_eq!(run(), run());
    }
}
