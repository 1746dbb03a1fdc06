//! Interpolant schedules and conversions between prediction targets.
//!
//! Time runs from pure noise at `t = 0` to data at `t = 1`:
//! `I_t = alpha_t * x_star + sigma_t * eps` with `alpha_0 = 0`, `sigma_0 = 1`.
//! All conversions are elementwise and refuse to divide by a coefficient
//! below [`ALPHA_FLOOR`] / [`SIGMA_FLOOR`].

use std::f64::consts::FRAC_PI_2;

use crate::error::{check_dim, Error, Result};

/// Smallest `alpha_t` accepted by conversions that divide by it.
pub const ALPHA_FLOOR: f64 = 1e-4;
/// Smallest `sigma_t` accepted by conversions that divide by it.
pub const SIGMA_FLOOR: f64 = 1e-4;

pub const DEFAULT_BETA_MIN: f64 = 0.1;
pub const DEFAULT_BETA_MAX: f64 = 20.0;

/// A time in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct TimePoint(f64);

impl TimePoint {
    pub fn new(t: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&t) {
            Ok(TimePoint(t))
        } else {
            Err(Error::InvalidTime(t))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScheduleKind {
    Linear,
    Vp,
    Gvp,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 3] = [ScheduleKind::Linear, ScheduleKind::Vp, ScheduleKind::Gvp];

    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Linear => "linear",
            ScheduleKind::Vp => "vp",
            ScheduleKind::Gvp => "gvp",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            ScheduleKind::Linear => 0,
            ScheduleKind::Vp => 1,
            ScheduleKind::Gvp => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(ScheduleKind::Linear),
            "vp" => Ok(ScheduleKind::Vp),
            "gvp" => Ok(ScheduleKind::Gvp),
            other => Err(Error::InvalidConfig(format!("unknown schedule `{other}`"))),
        }
    }
}

/// Schedule coefficients at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleValues {
    pub alpha: f64,
    pub sigma: f64,
    pub dalpha: f64,
    pub dsigma: f64,
}

impl ScheduleValues {
    /// `dalpha * sigma - alpha * dsigma`, positive on `(0, 1)` for every kind.
    pub fn denominator(&self) -> f64 {
        self.dalpha * self.sigma - self.alpha * self.dsigma
    }
}

/// An interpolant path. `beta_min` / `beta_max` only matter for [`ScheduleKind::Vp`],
/// whose noise rate is `beta_t = beta_min + t (beta_max - beta_min)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolantSchedule {
    pub kind: ScheduleKind,
    pub beta_min: f64,
    pub beta_max: f64,
}

impl InterpolantSchedule {
    pub fn new(kind: ScheduleKind) -> Self {
        InterpolantSchedule {
            kind,
            beta_min: DEFAULT_BETA_MIN,
            beta_max: DEFAULT_BETA_MAX,
        }
    }

    pub fn linear() -> Self {
        Self::new(ScheduleKind::Linear)
    }

    pub fn vp() -> Self {
        Self::new(ScheduleKind::Vp)
    }

    pub fn gvp() -> Self {
        Self::new(ScheduleKind::Gvp)
    }

    pub fn vp_with(beta_min: f64, beta_max: f64) -> Result<Self> {
        if !(beta_min > 0.0 && beta_max >= beta_min && beta_max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "VP betas must satisfy 0 < beta_min <= beta_max, got ({beta_min}, {beta_max})"
            )));
        }
        Ok(InterpolantSchedule {
            kind: ScheduleKind::Vp,
            beta_min,
            beta_max,
        })
    }

    /// `int_0^t beta_s ds` for the linear VP rate.
    fn integrated_beta(&self, t: f64) -> f64 {
        self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t * t
    }

    pub fn eval(&self, t: TimePoint) -> ScheduleValues {
        self.eval_raw(t.get())
    }

    /// Same as [`eval`](Self::eval) without the range check; callers guarantee `t` in `[0, 1]`.
    pub(crate) fn eval_raw(&self, t: f64) -> ScheduleValues {
        match self.kind {
            ScheduleKind::Linear => ScheduleValues {
                alpha: t,
                sigma: 1.0 - t,
                dalpha: 1.0,
                dsigma: -1.0,
            },
            ScheduleKind::Gvp => {
                let (s, c) = (FRAC_PI_2 * t).sin_cos();
                ScheduleValues {
                    alpha: s,
                    sigma: c,
                    dalpha: FRAC_PI_2 * c,
                    dsigma: -FRAC_PI_2 * s,
                }
            }
            ScheduleKind::Vp => {
                let b = self.integrated_beta(t);
                let beta = self.beta_min + t * (self.beta_max - self.beta_min);
                let sigma = (-0.5 * b).exp();
                let alpha = (-(-b).exp_m1()).sqrt();
                // d/dt sqrt(1 - e^{-B}) = beta e^{-B} / (2 alpha); infinite at t = 0.
                let dalpha = beta * sigma * sigma / (2.0 * alpha);
                ScheduleValues {
                    alpha,
                    sigma,
                    dalpha,
                    dsigma: -0.5 * beta * sigma,
                }
            }
        }
    }
}

/// Which quantity a field model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PredictionTarget {
    Velocity,
    Score,
    Noise,
}

impl PredictionTarget {
    pub const ALL: [PredictionTarget; 3] = [
        PredictionTarget::Velocity,
        PredictionTarget::Score,
        PredictionTarget::Noise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PredictionTarget::Velocity => "velocity",
            PredictionTarget::Score => "score",
            PredictionTarget::Noise => "noise",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            PredictionTarget::Velocity => 0,
            PredictionTarget::Score => 1,
            PredictionTarget::Noise => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }
}

impl std::str::FromStr for PredictionTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "velocity" => Ok(PredictionTarget::Velocity),
            "score" => Ok(PredictionTarget::Score),
            "noise" => Ok(PredictionTarget::Noise),
            other => Err(Error::InvalidConfig(format!(
                "unknown prediction target `{other}`"
            ))),
        }
    }
}

/// A point on the interpolant together with its time derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolantSample {
    pub i_t: Vec<f64>,
    pub di_t: Vec<f64>,
    pub t: TimePoint,
}

pub fn make_interpolant(
    x_star: &[f64],
    eps: &[f64],
    t: TimePoint,
    sched: &InterpolantSchedule,
) -> Result<InterpolantSample> {
    check_dim(x_star.len(), eps.len())?;
    let v = sched.eval(t);
    let i_t = x_star
        .iter()
        .zip(eps)
        .map(|(x, e)| v.alpha * x + v.sigma * e)
        .collect();
    let di_t = x_star
        .iter()
        .zip(eps)
        .map(|(x, e)| v.dalpha * x + v.dsigma * e)
        .collect();
    Ok(InterpolantSample { i_t, di_t, t })
}

fn require_sigma(v: &ScheduleValues, t: f64) -> Result<()> {
    if v.sigma > SIGMA_FLOOR {
        Ok(())
    } else {
        Err(Error::DegenerateSchedule {
            what: "sigma_t below floor",
            t,
        })
    }
}

fn require_alpha(v: &ScheduleValues, t: f64) -> Result<()> {
    if v.alpha > ALPHA_FLOOR && v.dalpha.is_finite() {
        Ok(())
    } else {
        Err(Error::DegenerateSchedule {
            what: "alpha_t below floor",
            t,
        })
    }
}

/// `s = (alpha v - dalpha x) / (sigma (dalpha sigma - alpha dsigma))`.
pub fn score_from_velocity(
    x: &[f64],
    v: &[f64],
    t: TimePoint,
    sched: &InterpolantSchedule,
) -> Result<Vec<f64>> {
    check_dim(x.len(), v.len())?;
    let c = sched.eval(t);
    require_sigma(&c, t.get())?;
    if !c.dalpha.is_finite() {
        return Err(Error::DegenerateSchedule {
            what: "dalpha_t not finite",
            t: t.get(),
        });
    }
    let scale = 1.0 / (c.sigma * c.denominator());
    Ok(x.iter()
        .zip(v)
        .map(|(x, v)| (c.alpha * v - c.dalpha * x) * scale)
        .collect())
}

/// `v = (dalpha / alpha) x + sigma (dalpha sigma - alpha dsigma) / alpha * s`.
pub fn velocity_from_score(
    x: &[f64],
    s: &[f64],
    t: TimePoint,
    sched: &InterpolantSchedule,
) -> Result<Vec<f64>> {
    check_dim(x.len(), s.len())?;
    let c = sched.eval(t);
    require_alpha(&c, t.get())?;
    let a = c.dalpha / c.alpha;
    let b = c.sigma * c.denominator() / c.alpha;
    Ok(x.iter().zip(s).map(|(x, s)| a * x + b * s).collect())
}

pub fn score_from_noise(
    eps_hat: &[f64],
    t: TimePoint,
    sched: &InterpolantSchedule,
) -> Result<Vec<f64>> {
    let c = sched.eval(t);
    require_sigma(&c, t.get())?;
    Ok(eps_hat.iter().map(|e| -e / c.sigma).collect())
}

pub fn noise_from_score(s: &[f64], t: TimePoint, sched: &InterpolantSchedule) -> Result<Vec<f64>> {
    let c = sched.eval(t);
    require_sigma(&c, t.get())?;
    Ok(s.iter().map(|s| -c.sigma * s).collect())
}

/// Posterior mean `E[x_star | I_t = x] = (x + sigma^2 s) / alpha`.
pub fn tweedie_denoise(
    x: &[f64],
    s: &[f64],
    t: TimePoint,
    sched: &InterpolantSchedule,
) -> Result<Vec<f64>> {
    check_dim(x.len(), s.len())?;
    let c = sched.eval(t);
    if c.alpha <= ALPHA_FLOOR {
        return Err(Error::DegenerateSchedule {
            what: "alpha_t below floor",
            t: t.get(),
        });
    }
    let s2 = c.sigma * c.sigma;
    Ok(x.iter()
        .zip(s)
        .map(|(x, s)| (x + s2 * s) / c.alpha)
        .collect())
}

/// Velocity and score from a single prediction in representation `target`.
pub fn velocity_and_score(
    target: PredictionTarget,
    x: &[f64],
    pred: &[f64],
    t: TimePoint,
    sched: &InterpolantSchedule,
) -> Result<(Vec<f64>, Vec<f64>)> {
    match target {
        PredictionTarget::Velocity => {
            let s = score_from_velocity(x, pred, t, sched)?;
            Ok((pred.to_vec(), s))
        }
        PredictionTarget::Score => {
            let v = velocity_from_score(x, pred, t, sched)?;
            Ok((v, pred.to_vec()))
        }
        PredictionTarget::Noise => {
            let s = score_from_noise(pred, t, sched)?;
            let v = velocity_from_score(x, &s, t, sched)?;
            Ok((v, s))
        }
    }
}

/// Velocity from a single prediction in representation `target`.
pub fn velocity_from_prediction(
    target: PredictionTarget,
    x: &[f64],
    pred: &[f64],
    t: TimePoint,
    sched: &InterpolantSchedule,
) -> Result<Vec<f64>> {
    match target {
        PredictionTarget::Velocity => Ok(pred.to_vec()),
        PredictionTarget::Score => velocity_from_score(x, pred, t, sched),
        PredictionTarget::Noise => {
            let s = score_from_noise(pred, t, sched)?;
            velocity_from_score(x, &s, t, sched)
        }
    }
}

/// Score from a single prediction in representation `target`.
pub fn score_from_prediction(
    target: PredictionTarget,
    x: &[f64],
    pred: &[f64],
    t: TimePoint,
    sched: &InterpolantSchedule,
) -> Result<Vec<f64>> {
    match target {
        PredictionTarget::Velocity => score_from_velocity(x, pred, t, sched),
        PredictionTarget::Score => Ok(pred.to_vec()),
        PredictionTarget::Noise => score_from_noise(pred, t, sched),
    }
}
