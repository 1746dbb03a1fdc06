//! Probability-flow ODE and marginal-preserving SDE samplers.
//!
//! Integration runs forward from noise at `t = 0` to `1 - t_end_clamp`; the
//! configured last step then covers the remaining gap. The SDE is
//! `dX = [v + w_t s / 2] dt + sqrt(w_t) dW` with `w_t = w_scale * sigma_t`,
//! which shares its marginals with the ODE `dX = v dt`.

mod config;

pub use config::{
    build_time_grid, expected_nfe, InferenceConfig, LastStep, Mode, Solver, TimeGrid,
};

use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::field::FieldModel;
use crate::interpolant::{
    score_from_prediction, tweedie_denoise, velocity_and_score, velocity_from_prediction,
    InterpolantSchedule, PredictionTarget, ScheduleKind, TimePoint,
};
use crate::par::{stream_rng, try_map_range, ExecPolicy};

/// Field evaluations with NFE bookkeeping.
struct Drift<'a, F: FieldModel + ?Sized> {
    field: &'a F,
    sched: &'a InterpolantSchedule,
    obs: &'a [f64],
    /// Evaluation times are clamped from below to this value.
    t_min: f64,
    nfe: usize,
}

impl<'a, F: FieldModel + ?Sized> Drift<'a, F> {
    fn new(
        field: &'a F,
        sched: &'a InterpolantSchedule,
        obs: &'a [f64],
        cfg: &InferenceConfig,
    ) -> Self {
        // Only a velocity head on a path with finite dalpha_0 is well defined at t = 0;
        // all other combinations divide by alpha_t (or hit dalpha_0 = inf for VP).
        let exact_at_zero =
            field.target() == PredictionTarget::Velocity && sched.kind != ScheduleKind::Vp;
        let t_min = if exact_at_zero { 0.0 } else { cfg.t_end_clamp };
        Drift {
            field,
            sched,
            obs,
            t_min,
            nfe: 0,
        }
    }

    fn time(&self, t: f64) -> Result<TimePoint> {
        TimePoint::new(t.max(self.t_min))
    }

    fn predict(&mut self, x: &[f64], t: TimePoint) -> Result<Vec<f64>> {
        self.nfe += 1;
        self.field.predict(x, t.get(), self.obs)
    }

    fn velocity(&mut self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let t = self.time(t)?;
        let pred = self.predict(x, t)?;
        velocity_from_prediction(self.field.target(), x, &pred, t, self.sched)
    }

    fn score(&mut self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let t = self.time(t)?;
        let pred = self.predict(x, t)?;
        score_from_prediction(self.field.target(), x, &pred, t, self.sched)
    }

    /// SDE drift `v + w s / 2`; reduces to `v` when `w == 0`.
    fn sde_drift(&mut self, x: &[f64], t: f64, w: f64) -> Result<Vec<f64>> {
        if w == 0.0 {
            return self.velocity(x, t);
        }
        let tp = self.time(t)?;
        let pred = self.predict(x, tp)?;
        let (v, s) = velocity_and_score(self.field.target(), x, &pred, tp, self.sched)?;
        Ok(v.iter().zip(&s).map(|(v, s)| v + 0.5 * w * s).collect())
    }
}

fn axpy(x: &[f64], h: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(x, d)| x + h * d).collect()
}

fn check_finite(x: &[f64], knot: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: "integration",
            index: knot,
        })
    }
}

fn ode_step<F: FieldModel + ?Sized>(
    drift: &mut Drift<'_, F>,
    solver: Solver,
    x: &[f64],
    t: f64,
    h: f64,
) -> Result<Vec<f64>> {
    match solver {
        Solver::Euler => {
            let k1 = drift.velocity(x, t)?;
            Ok(axpy(x, h, &k1))
        }
        Solver::Heun => {
            let k1 = drift.velocity(x, t)?;
            let pred = axpy(x, h, &k1);
            let k2 = drift.velocity(&pred, t + h)?;
            Ok(x.iter()
                .zip(k1.iter().zip(&k2))
                .map(|(x, (a, b))| x + 0.5 * h * (a + b))
                .collect())
        }
        Solver::Rk4 => {
            let k1 = drift.velocity(x, t)?;
            let k2 = drift.velocity(&axpy(x, 0.5 * h, &k1), t + 0.5 * h)?;
            let k3 = drift.velocity(&axpy(x, 0.5 * h, &k2), t + 0.5 * h)?;
            let k4 = drift.velocity(&axpy(x, h, &k3), t + h)?;
            Ok((0..x.len())
                .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                .collect())
        }
    }
}

fn finish<F: FieldModel + ?Sized>(
    drift: &mut Drift<'_, F>,
    cfg: &InferenceConfig,
    x: Vec<f64>,
    t_end: f64,
) -> Result<Vec<f64>> {
    match cfg.last_step {
        LastStep::None => Ok(x),
        LastStep::EulerStep => {
            let v = drift.velocity(&x, t_end)?;
            Ok(axpy(&x, 1.0 - t_end, &v))
        }
        LastStep::Tweedie => {
            let s = drift.score(&x, t_end)?;
            tweedie_denoise(&x, &s, drift.time(t_end)?, drift.sched)
        }
    }
}

/// Integrates `dX = v dt` over the configured grid from `x0`, applies the last
/// step, and returns the sample with its NFE.
pub fn integrate_ode<F: FieldModel + ?Sized>(
    field: &F,
    sched: &InterpolantSchedule,
    cfg: &InferenceConfig,
    x0: &[f64],
    obs: &[f64],
) -> Result<(Vec<f64>, usize)> {
    cfg.validate()?;
    check_dim(field.action_dim(), x0.len())?;
    let grid = build_time_grid(cfg)?;
    let mut drift = Drift::new(field, sched, obs, cfg);
    let mut x = x0.to_vec();
    for (k, w) in grid.knots().windows(2).enumerate() {
        x = ode_step(&mut drift, cfg.solver, &x, w[0], w[1] - w[0])?;
        check_finite(&x, k + 1)?;
    }
    let x = finish(&mut drift, cfg, x, grid.end())?;
    check_finite(&x, grid.len())?;
    Ok((x, drift.nfe))
}

/// Euler-Maruyama or stochastic Heun integration of the SDE; Brownian
/// increments come from a stream seeded by `cfg.seed`.
pub fn integrate_sde<F: FieldModel + ?Sized>(
    field: &F,
    sched: &InterpolantSchedule,
    cfg: &InferenceConfig,
    x0: &[f64],
    obs: &[f64],
) -> Result<(Vec<f64>, usize)> {
    cfg.validate()?;
    if cfg.solver == Solver::Rk4 {
        return Err(Error::InvalidConfig("RK4 is ODE-only".into()));
    }
    check_dim(field.action_dim(), x0.len())?;
    let grid = build_time_grid(cfg)?;
    let mut noise = stream_rng(cfg.seed, 0);
    let mut drift = Drift::new(field, sched, obs, cfg);
    let w_at = |t: f64| cfg.w_scale * sched.eval_raw(t).sigma;
    let mut x = x0.to_vec();
    for (k, win) in grid.knots().windows(2).enumerate() {
        let (t, h) = (win[0], win[1] - win[0]);
        let w = w_at(t);
        let xi: Vec<f64> = (0..x.len()).map(|_| noise.sample(StandardNormal)).collect();
        let amp = (w * h).sqrt();
        x = match cfg.solver {
            Solver::Euler => {
                let b = drift.sde_drift(&x, t, w)?;
                (0..x.len())
                    .map(|i| x[i] + h * b[i] + amp * xi[i])
                    .collect()
            }
            Solver::Heun => {
                let b1 = drift.sde_drift(&x, t, w)?;
                let pred: Vec<f64> = (0..x.len())
                    .map(|i| x[i] + h * b1[i] + amp * xi[i])
                    .collect();
                let b2 = drift.sde_drift(&pred, t + h, w_at(t + h))?;
                (0..x.len())
                    .map(|i| x[i] + 0.5 * h * (b1[i] + b2[i]) + amp * xi[i])
                    .collect()
            }
            Solver::Rk4 => unreachable!(),
        };
        check_finite(&x, k + 1)?;
    }
    let x = finish(&mut drift, cfg, x, grid.end())?;
    check_finite(&x, grid.len())?;
    Ok((x, drift.nfe))
}

/// One generated action chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutput {
    pub action: Vec<f64>,
    pub nfe: usize,
    pub wall: Duration,
}

/// Draws `x0 ~ N(0, I)` from `rng` and integrates according to `cfg.mode`.
/// In SDE mode the Brownian stream seed is also drawn from `rng`.
pub fn sample_actions<F: FieldModel + ?Sized, R: Rng + ?Sized>(
    field: &F,
    sched: &InterpolantSchedule,
    cfg: &InferenceConfig,
    obs: &[f64],
    rng: &mut R,
) -> Result<SampleOutput> {
    check_dim(field.obs_dim(), obs.len())?;
    let start = Instant::now();
    let x0: Vec<f64> = (0..field.action_dim())
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let (action, nfe) = match cfg.mode {
        Mode::Ode => integrate_ode(field, sched, cfg, &x0, obs)?,
        Mode::Sde => {
            let cfg = InferenceConfig {
                seed: rng.random(),
                ..*cfg
            };
            integrate_sde(field, sched, &cfg, &x0, obs)?
        }
    };
    Ok(SampleOutput {
        action,
        nfe,
        wall: start.elapsed(),
    })
}

/// `n` independent samples; sample `i` uses RNG stream `i` of `seed`.
pub fn sample_many<F: FieldModel + ?Sized>(
    field: &F,
    sched: &InterpolantSchedule,
    cfg: &InferenceConfig,
    obs: &[f64],
    n: usize,
    seed: u64,
    exec: ExecPolicy,
) -> Result<Vec<Vec<f64>>> {
    try_map_range(exec, n, |i| {
        let mut rng = stream_rng(seed, i as u64);
        sample_actions(field, sched, cfg, obs, &mut rng).map(|o| o.action)
    })
}

#[cfg(test)]
mod tests;
