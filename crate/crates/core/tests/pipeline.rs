//! Cross-module flows: demos to trained policy to episodes, checkpoint
//! persistence, and execution-policy independence.

use sip_core::difficulty::{ConfigMap, OracleEstimator};
use sip_core::envs::{gen_demos, gen_demos_with, load_demos, save_demos, TaskKind};
use sip_core::field::{Checkpoint, FieldArch, FieldModel, TrainConfig};
use sip_core::interpolant::{InterpolantSchedule, PredictionTarget};
use sip_core::par::ExecPolicy;
use sip_core::runtime::{evaluate, run_episode, train_policy, PolicyBundle, PolicyFit, PolicyMode};
use sip_core::sampler::{sample_many, InferenceConfig, LastStep, Mode, Solver};

fn small_fit(task: TaskKind, target: PredictionTarget) -> PolicyFit {
    let set = gen_demos(task, 6, 21).unwrap();
    let arch = FieldArch {
        hidden: vec![24],
        ..FieldArch::default()
    };
    let cfg = TrainConfig {
        max_steps: Some(40),
        batch_size: 32,
        seed: 5,
        ..TrainConfig::default()
    };
    train_policy(&set, &InterpolantSchedule::gvp(), target, &arch, &cfg).unwrap()
}

#[test]
fn demos_survive_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.sipd");
    let set = gen_demos(TaskKind::PegInSlot, 5, 3).unwrap();
    save_demos(&set, &path).unwrap();
    assert_eq!(load_demos(&path).unwrap(), set);
}

#[test]
fn demo_generation_ignores_execution_policy() {
    let a = gen_demos_with(TaskKind::PushBlock, 8, 4, ExecPolicy::Sequential).unwrap();
    let b = gen_demos_with(TaskKind::PushBlock, 8, 4, ExecPolicy::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn saved_policy_reproduces_episodes() {
    let fit = small_fit(TaskKind::ReachLift, PredictionTarget::Velocity);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.ckpt");
    fit.checkpoint.save(&path).unwrap();
    let loaded = PolicyBundle::from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
    assert_eq!(loaded, fit.bundle);

    let cfg = InferenceConfig::new(5, Solver::Heun, Mode::Sde, LastStep::Tweedie);
    let a = run_episode(&fit.bundle, PolicyMode::Fixed(cfg), 77).unwrap();
    let b = run_episode(&loaded, PolicyMode::Fixed(cfg), 77).unwrap();
    assert_eq!(a.total_nfe, b.total_nfe);
    for (x, y) in a.cycles.iter().zip(&b.cycles) {
        assert_eq!(x.actions, y.actions);
    }
}

#[test]
fn every_head_drives_episodes() {
    for target in [
        PredictionTarget::Velocity,
        PredictionTarget::Score,
        PredictionTarget::Noise,
    ] {
        let fit = small_fit(TaskKind::PushBlock, target);
        let ep = run_episode(
            &fit.bundle,
            PolicyMode::Fixed(InferenceConfig::ode(3, Solver::Rk4)),
            1,
        )
        .unwrap();
        assert!(ep.steps > 0);
        assert_eq!(ep.total_nfe, 12 * ep.cycles.len());
    }
}

#[test]
fn sampling_and_evaluation_ignore_execution_policy() {
    let fit = small_fit(TaskKind::PegInSlot, PredictionTarget::Velocity);
    let b = &fit.bundle;
    let obs = vec![0.0; b.field.obs_dim()];
    let cfg = InferenceConfig::new(4, Solver::Euler, Mode::Sde, LastStep::EulerStep);
    let seq = sample_many(
        &b.field,
        &b.schedule,
        &cfg,
        &obs,
        16,
        9,
        ExecPolicy::Sequential,
    )
    .unwrap();
    let par = sample_many(
        &b.field,
        &b.schedule,
        &cfg,
        &obs,
        16,
        9,
        ExecPolicy::Parallel,
    )
    .unwrap();
    assert_eq!(seq, par);

    let map = ConfigMap::default();
    let oracle = OracleEstimator::default();
    let modes = vec![(
        "adaptive".to_string(),
        PolicyMode::Adaptive {
            estimator: &oracle,
            map: &map,
        },
    )];
    let seeds = [3, 4, 5];
    let run = |exec| evaluate(b, &modes, &seeds, map.max_config(), exec).unwrap();
    let (s, p) = (run(ExecPolicy::Sequential), run(ExecPolicy::Parallel));
    assert_eq!(s[0].row(), p[0].row());
    assert_eq!(s[0].episodes.len(), 3);
}
