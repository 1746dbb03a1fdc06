use std::fmt;

use super::DifficultyLabel;
use crate::error::{Error, Result};
use crate::sampler::{expected_nfe, InferenceConfig, LastStep, Mode, Solver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    SixLevel,
    ThreeLevel,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::SixLevel => "six",
            Preset::ThreeLevel => "three",
        })
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "six" | "six_level" | "sixlevel" | "6" => Ok(Preset::SixLevel),
            "three" | "three_level" | "threelevel" | "3" => Ok(Preset::ThreeLevel),
            other => Err(Error::InvalidConfig(format!(
                "unknown preset `{other}` (expected six or three)"
            ))),
        }
    }
}

/// Label to inference configuration table, indexed by label.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigMap {
    pub preset: Preset,
    entries: [InferenceConfig; 6],
}

fn entry(steps: usize, solver: Solver, mode: Mode, last: LastStep) -> InferenceConfig {
    InferenceConfig::new(steps, solver, mode, last)
}

impl ConfigMap {
    pub fn new(preset: Preset) -> Self {
        use DifficultyLabel::*;
        use LastStep::{None as NoLast, Tweedie};
        use Mode::*;
        use Solver::*;
        let mut entries = [entry(1, Euler, Ode, NoLast); 6];
        match preset {
            Preset::SixLevel => {
                entries[I.index()] = entry(1, Euler, Ode, NoLast);
                entries[N.index()] = entry(5, Euler, Ode, NoLast);
                entries[G.index()] = entry(10, Euler, Ode, NoLast);
                entries[S.index()] = entry(50, Euler, Sde, NoLast);
                entries[C.index()] = entry(100, Heun, Sde, Tweedie);
                entries[E.index()] = entry(1, Euler, Ode, NoLast);
            }
            Preset::ThreeLevel => {
                let easy = entry(5, Euler, Ode, NoLast);
                let medium = entry(10, Heun, Ode, NoLast);
                // RK4 is ODE-only, so the stochastic hard level uses Heun.
                let hard = entry(20, Heun, Sde, NoLast);
                for l in DifficultyLabel::ALL {
                    entries[l.index()] = match l {
                        I | E => easy,
                        N | G => medium,
                        S | C => hard,
                    };
                }
            }
        }
        ConfigMap { preset, entries }
    }

    /// Coarse level 1..=3 of the three-level preset.
    pub fn three_level(label: DifficultyLabel) -> u8 {
        use DifficultyLabel::*;
        match label {
            I | E => 1,
            N | G => 2,
            S | C => 3,
        }
    }

    pub fn map_config(&self, label: DifficultyLabel) -> InferenceConfig {
        self.entries[label.index()]
    }

    /// Most expensive entry by NFE.
    pub fn max_config(&self) -> InferenceConfig {
        *self.entries.iter().max_by_key(|c| expected_nfe(c)).unwrap()
    }

    /// Cheapest entry by NFE.
    pub fn min_config(&self) -> InferenceConfig {
        *self.entries.iter().min_by_key(|c| expected_nfe(c)).unwrap()
    }
}

impl Default for ConfigMap {
    fn default() -> Self {
        ConfigMap::new(Preset::SixLevel)
    }
}
