use super::*;
use crate::field::{AnalyticGaussianField, AnalyticModel};

fn gaussian(
    mean: f64,
    var: f64,
    dim: usize,
    sched: InterpolantSchedule,
    target: PredictionTarget,
) -> AnalyticModel {
    AnalyticModel::gaussian(
        AnalyticGaussianField::new(vec![mean; dim], vec![var; dim]).unwrap(),
        sched,
        target,
    )
}

fn moments(xs: &[Vec<f64>]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().map(|x| x[0]).sum::<f64>() / n;
    let v = xs.iter().map(|x| (x[0] - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

#[test]
fn gvp_standard_normal_is_stationary() {
    let f = gaussian(
        0.0,
        1.0,
        3,
        InterpolantSchedule::gvp(),
        PredictionTarget::Velocity,
    );
    let x0 = [0.3, -1.2, 2.2];
    for solver in Solver::ALL {
        for steps in [1, 4, 17] {
            let (x, _) = integrate_ode(
                &f,
                &f.schedule,
                &InferenceConfig::ode(steps, solver),
                &x0,
                &[],
            )
            .unwrap();
            assert_eq!(x, x0.to_vec(), "{solver:?} {steps}");
        }
    }
}

#[test]
fn single_euler_step_on_point_mass() {
    let c = 0.7;
    let f = gaussian(
        c,
        1e-10,
        1,
        InterpolantSchedule::linear(),
        PredictionTarget::Velocity,
    );
    let x0 = [-0.4];
    let v0 = f.predict(&x0, 0.0, &[]).unwrap()[0];
    let (x, nfe) = integrate_ode(
        &f,
        &f.schedule,
        &InferenceConfig::ode(1, Solver::Euler),
        &x0,
        &[],
    )
    .unwrap();
    assert_eq!(nfe, 1);
    assert!((x[0] - (x0[0] + v0 * 0.999)).abs() < 1e-15);
}

#[test]
fn zero_diffusion_sde_is_bitwise_ode() {
    let f = gaussian(
        0.5,
        0.3,
        2,
        InterpolantSchedule::linear(),
        PredictionTarget::Velocity,
    );
    for solver in [Solver::Euler, Solver::Heun] {
        for last in LastStep::ALL {
            let ode = InferenceConfig::new(13, solver, Mode::Ode, last);
            let sde = InferenceConfig {
                mode: Mode::Sde,
                w_scale: 0.0,
                seed: 77,
                ..ode
            };
            let a = integrate_ode(&f, &f.schedule, &ode, &[0.2, -0.9], &[]).unwrap();
            let b = integrate_sde(&f, &f.schedule, &sde, &[0.2, -0.9], &[]).unwrap();
            assert_eq!(a, b);
        }
    }
}

#[test]
fn sde_is_deterministic_per_seed() {
    let f = gaussian(
        0.5,
        0.3,
        2,
        InterpolantSchedule::vp(),
        PredictionTarget::Score,
    );
    let cfg = InferenceConfig {
        seed: 5,
        ..InferenceConfig::new(20, Solver::Heun, Mode::Sde, LastStep::Tweedie)
    };
    let a = integrate_sde(&f, &f.schedule, &cfg, &[0.1, 0.2], &[]).unwrap();
    let b = integrate_sde(&f, &f.schedule, &cfg, &[0.1, 0.2], &[]).unwrap();
    assert_eq!(a, b);
    let c = integrate_sde(&f, &f.schedule, &cfg.with_seed(6), &[0.1, 0.2], &[]).unwrap();
    assert_ne!(a.0, c.0);
}

#[test]
fn rk4_sde_rejected() {
    let f = gaussian(
        0.0,
        1.0,
        1,
        InterpolantSchedule::linear(),
        PredictionTarget::Velocity,
    );
    let cfg = InferenceConfig::new(5, Solver::Rk4, Mode::Sde, LastStep::None);
    assert!(matches!(
        integrate_sde(&f, &f.schedule, &cfg, &[0.0], &[]),
        Err(Error::InvalidConfig(_))
    ));
    let mut rng = stream_rng(0, 0);
    assert!(sample_actions(&f, &f.schedule, &cfg, &[], &mut rng).is_err());
}

#[test]
fn nfe_accounting_is_exact() {
    for target in PredictionTarget::ALL {
        let f = gaussian(0.2, 0.5, 2, InterpolantSchedule::gvp(), target);
        for solver in Solver::ALL {
            for mode in [Mode::Ode, Mode::Sde] {
                for last in LastStep::ALL {
                    for steps in [1, 5, 10] {
                        let cfg = InferenceConfig::new(steps, solver, mode, last);
                        let mut rng = stream_rng(1, 0);
                        let out = sample_actions(&f, &f.schedule, &cfg, &[], &mut rng);
                        if mode == Mode::Sde && solver == Solver::Rk4 {
                            assert!(out.is_err());
                        } else {
                            assert_eq!(out.unwrap().nfe, expected_nfe(&cfg), "{}", cfg.label());
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn non_finite_state_reports_knot() {
    struct Exploding;
    impl FieldModel for Exploding {
        fn action_dim(&self) -> usize {
            1
        }
        fn obs_dim(&self) -> usize {
            0
        }
        fn target(&self) -> PredictionTarget {
            PredictionTarget::Velocity
        }
        fn predict(&self, _x: &[f64], t: f64, _obs: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![if t > 0.6 { f64::INFINITY } else { 1.0 }])
        }
    }
    let err = integrate_ode(
        &Exploding,
        &InterpolantSchedule::linear(),
        &InferenceConfig::ode(4, Solver::Euler),
        &[0.0],
        &[],
    )
    .unwrap_err();
    assert!(matches!(err, Error::NonFinite { index: 4, .. }), "{err:?}");
}

#[test]
fn ode_matches_target_moments_per_schedule() {
    for sched in [
        InterpolantSchedule::linear(),
        InterpolantSchedule::vp(),
        InterpolantSchedule::gvp(),
    ] {
        let f = gaussian(0.0, 1.0, 1, sched, PredictionTarget::Velocity);
        let cfg = InferenceConfig::ode(50, Solver::Heun);
        let xs = sample_many(&f, &sched, &cfg, &[], 5000, 9, ExecPolicy::default()).unwrap();
        let (m, v) = moments(&xs);
        assert!(
            m.abs() < 0.05 && (v - 1.0).abs() < 0.1,
            "{:?}: mean {m} var {v}",
            sched.kind
        );
    }
}

#[test]
fn sde_preserves_standard_normal_under_gvp() {
    let sched = InterpolantSchedule::gvp();
    let f = gaussian(0.0, 1.0, 1, sched, PredictionTarget::Velocity);
    let cfg = InferenceConfig::new(100, Solver::Euler, Mode::Sde, LastStep::None);
    let xs = sample_many(&f, &sched, &cfg, &[], 5000, 3, ExecPolicy::default()).unwrap();
    let (m, v) = moments(&xs);
    assert!(m.abs() < 0.05 && (v - 1.0).abs() < 0.1, "mean {m} var {v}");
}

#[test]
fn score_and_noise_heads_sample_like_velocity_head() {
    let sched = InterpolantSchedule::linear();
    for target in [PredictionTarget::Score, PredictionTarget::Noise] {
        let f = gaussian(1.0, 0.25, 1, sched, target);
        let cfg = InferenceConfig::new(50, Solver::Heun, Mode::Ode, LastStep::Tweedie);
        let xs = sample_many(&f, &sched, &cfg, &[], 4000, 1, ExecPolicy::default()).unwrap();
        let (m, v) = moments(&xs);
        assert!(
            (m - 1.0).abs() < 0.05 && (v - 0.25).abs() < 0.025,
            "{target:?}: {m} {v}"
        );
    }
}
