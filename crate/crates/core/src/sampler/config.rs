use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Solver {
    Euler,
    Heun,
    Rk4,
}

impl Solver {
    pub const ALL: [Solver; 3] = [Solver::Euler, Solver::Heun, Solver::Rk4];

    /// Field evaluations per integration step.
    pub fn stages(self) -> usize {
        match self {
            Solver::Euler => 1,
            Solver::Heun => 2,
            Solver::Rk4 => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Ode,
    Sde,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LastStep {
    None,
    EulerStep,
    Tweedie,
}

impl LastStep {
    pub const ALL: [LastStep; 3] = [LastStep::None, LastStep::EulerStep, LastStep::Tweedie];
}

macro_rules! names {
    ($ty:ty { $($v:ident => $s:literal $(| $alt:literal)*),+ $(,)? }) => {
        impl $ty {
            pub fn name(self) -> &'static str {
                match self { $(<$ty>::$v => $s),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl std::str::FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($s $(| $alt)* => Ok(<$ty>::$v),)+
                    other => Err(Error::InvalidConfig(format!(
                        concat!("unknown ", stringify!($ty), " `{}`"), other
                    ))),
                }
            }
        }
    };
}

names!(Solver { Euler => "euler", Heun => "heun", Rk4 => "rk4" });
names!(Mode { Ode => "ode", Sde => "sde" });
names!(LastStep { None => "none" | "-", EulerStep => "euler", Tweedie => "tweedie" });

/// Per-call sampling configuration: step count, solver, integration mode and
/// last-step rule, plus SDE diffusion scale and noise seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceConfig {
    pub steps: usize,
    pub solver: Solver,
    pub mode: Mode,
    pub last_step: LastStep,
    pub w_scale: f64,
    pub t_end_clamp: f64,
    pub seed: u64,
}

pub const DEFAULT_T_END_CLAMP: f64 = 1e-3;

impl InferenceConfig {
    pub fn new(steps: usize, solver: Solver, mode: Mode, last_step: LastStep) -> Self {
        InferenceConfig {
            steps,
            solver,
            mode,
            last_step,
            w_scale: 1.0,
            t_end_clamp: DEFAULT_T_END_CLAMP,
            seed: 0,
        }
    }

    pub fn ode(steps: usize, solver: Solver) -> Self {
        Self::new(steps, solver, Mode::Ode, LastStep::None)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be at least 1".into()));
        }
        if self.mode == Mode::Sde && self.solver == Solver::Rk4 {
            return Err(Error::InvalidConfig(
                "RK4 is ODE-only; SDE mode needs Euler or Heun".into(),
            ));
        }
        if !(self.w_scale >= 0.0 && self.w_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "w_scale must be finite and >= 0, got {}",
                self.w_scale
            )));
        }
        if !(self.t_end_clamp > 0.0 && self.t_end_clamp < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "t_end_clamp must be in (0, 0.5), got {}",
                self.t_end_clamp
            )));
        }
        Ok(())
    }

    /// Same sampling schedule, different noise seed.
    pub fn with_seed(self, seed: u64) -> Self {
        InferenceConfig { seed, ..self }
    }

    /// Triple-style label, e.g. `100/heun/sde/tweedie`.
    pub fn label(&self) -> String {
        format!(
            "{}/{}/{}/{}",
            self.steps, self.solver, self.mode, self.last_step
        )
    }
}

/// Field evaluations one sampling call with `cfg` performs.
pub fn expected_nfe(cfg: &InferenceConfig) -> usize {
    let last = match cfg.last_step {
        LastStep::None => 0,
        LastStep::EulerStep | LastStep::Tweedie => 1,
    };
    cfg.steps * cfg.solver.stages() + last
}

/// Uniform integration knots on `[0, 1 - t_end_clamp]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    knots: Vec<f64>,
}

impl TimeGrid {
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn end(&self) -> f64 {
        *self.knots.last().unwrap()
    }
}

pub fn build_time_grid(cfg: &InferenceConfig) -> Result<TimeGrid> {
    if cfg.steps == 0 {
        return Err(Error::InvalidConfig("steps must be at least 1".into()));
    }
    let end = 1.0 - cfg.t_end_clamp;
    let n = cfg.steps;
    let knots = (0..=n)
        .map(|k| {
            if k == n {
                end
            } else {
                end * k as f64 / n as f64
            }
        })
        .collect();
    Ok(TimeGrid { knots })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_examples() {
        let g = build_time_grid(&InferenceConfig::ode(1, Solver::Euler)).unwrap();
        assert_eq!(g.knots(), &[0.0, 0.999]);
        let g = build_time_grid(&InferenceConfig::ode(4, Solver::Euler)).unwrap();
        assert_eq!(g.len(), 5);
        for w in g.knots().windows(2) {
            assert!((w[1] - w[0] - 0.999 / 4.0).abs() < 1e-15);
        }
        let a = build_time_grid(&InferenceConfig::ode(7, Solver::Heun).with_seed(1)).unwrap();
        let b = build_time_grid(&InferenceConfig::ode(7, Solver::Heun).with_seed(99)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.knots()[0], 0.0);
        assert!(a.knots().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn validation() {
        assert!(
            InferenceConfig::new(5, Solver::Rk4, Mode::Sde, LastStep::None)
                .validate()
                .is_err()
        );
        assert!(
            InferenceConfig::new(0, Solver::Euler, Mode::Ode, LastStep::None)
                .validate()
                .is_err()
        );
        assert!(InferenceConfig {
            w_scale: -1.0,
            ..InferenceConfig::ode(3, Solver::Euler)
        }
        .validate()
        .is_err());
        assert!(
            InferenceConfig::new(5, Solver::Heun, Mode::Sde, LastStep::Tweedie)
                .validate()
                .is_ok()
        );
    }

    #[test]
    fn nfe_table() {
        assert_eq!(
            expected_nfe(&InferenceConfig::new(
                1,
                Solver::Euler,
                Mode::Ode,
                LastStep::None
            )),
            1
        );
        assert_eq!(
            expected_nfe(&InferenceConfig::new(
                100,
                Solver::Heun,
                Mode::Sde,
                LastStep::Tweedie
            )),
            201
        );
        assert_eq!(
            expected_nfe(&InferenceConfig::new(
                10,
                Solver::Rk4,
                Mode::Ode,
                LastStep::EulerStep
            )),
            41
        );
    }

    #[test]
    fn parse_names() {
        assert_eq!("RK4".parse::<Solver>().unwrap(), Solver::Rk4);
        assert_eq!("sde".parse::<Mode>().unwrap(), Mode::Sde);
        assert_eq!("euler".parse::<LastStep>().unwrap(), LastStep::EulerStep);
        assert!("midpoint".parse::<Solver>().is_err());
    }
}
