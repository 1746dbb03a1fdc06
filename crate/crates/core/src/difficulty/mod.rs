//! Six-level difficulty taxonomy, oracle labels, learned classifiers and the
//! label-to-inference-budget maps.

mod annotation;
mod classifier;
mod config_map;

pub use annotation::{annotate_demos, read_annotations, write_annotations, AnnotationRecord};
pub use classifier::{
    accuracy, stratified_split, train_classifier, ClassifierArch, ClassifierConfig, ClassifierFit,
    ClassifierModel,
};
pub use config_map::{ConfigMap, Preset};

use std::fmt;

use crate::envs::{dist, is_success, slot_frame, SimState, TaskKind};
use crate::error::{Error, Result};

/// Default "near" radius in workspace units.
pub const D_NEAR: f64 = 0.1;
pub const N_CLASSES: usize = 6;

/// Phase labels in reporting order; the order also breaks argmax ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DifficultyLabel {
    I,
    N,
    G,
    S,
    C,
    E,
}

impl DifficultyLabel {
    pub const ALL: [DifficultyLabel; N_CLASSES] = [
        DifficultyLabel::I,
        DifficultyLabel::N,
        DifficultyLabel::G,
        DifficultyLabel::S,
        DifficultyLabel::C,
        DifficultyLabel::E,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_char(self) -> char {
        b"INGSCE"[self.index()] as char
    }

    pub fn from_char(c: char) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_char() == c.to_ascii_uppercase())
    }

    /// Labels a task can visit.
    pub fn reachable(task: TaskKind) -> [DifficultyLabel; 4] {
        use DifficultyLabel::*;
        match task {
            TaskKind::ReachLift => [I, N, G, E],
            TaskKind::PushBlock => [I, N, C, E],
            TaskKind::PegInSlot => [I, N, S, E],
        }
    }
}

impl fmt::Display for DifficultyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl std::str::FromStr for DifficultyLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut cs = s.chars();
        match (cs.next(), cs.next()) {
            (Some(c), None) => Self::from_char(c),
            _ => None,
        }
        .ok_or_else(|| Error::InvalidData(format!("unknown difficulty label `{s}`")))
    }
}

/// Point the gripper is approaching before any task contact.
pub fn approach_target(s: &SimState) -> [f64; 2] {
    match s.task {
        TaskKind::PegInSlot => s.slot.mouth,
        TaskKind::ReachLift | TaskKind::PushBlock => s.object_pos,
    }
}

/// Rule-based label with precedence E > C > S > G > N > I.
pub fn oracle_label(s: &SimState, d_near: f64) -> DifficultyLabel {
    use DifficultyLabel::*;
    if is_success(s) {
        return E;
    }
    match s.task {
        TaskKind::PushBlock if s.contact => return C,
        TaskKind::PegInSlot if crate::envs::in_slot_approach(s) => return S,
        TaskKind::ReachLift if s.attached => return G,
        _ => {}
    }
    if dist(s.gripper_pos, approach_target(s)) < d_near {
        N
    } else {
        I
    }
}

/// Number of engineered features per state.
pub const FEATURE_DIM: usize = 8;

/// Distances enter on a log scale so the sub-decimetre thresholds that
/// separate phases stay resolved after standardization.
fn log_dist(d: f64) -> f64 {
    (d + 1e-3).ln()
}

/// Slot-local window for the tip's depth and lateral offset.
const SLOT_WINDOW: (f64, f64) = (-0.2, 0.1);

/// Engineered classifier inputs: log distances (gripper to approach target,
/// object to goal, gripper to goal), contact and attachment flags, slot-frame
/// depth and lateral offset of the object clamped to a window around the
/// mouth, and gripper speed.
pub fn features(s: &SimState) -> Vec<f64> {
    let (z, y) = match s.task {
        TaskKind::PegInSlot => slot_frame(s.object_pos, &s.slot),
        _ => (SLOT_WINDOW.0, SLOT_WINDOW.1),
    };
    vec![
        log_dist(dist(s.gripper_pos, approach_target(s))),
        log_dist(dist(s.object_pos, s.goal_pos)),
        log_dist(dist(s.gripper_pos, s.goal_pos)),
        if s.contact { 1.0 } else { 0.0 },
        if s.attached { 1.0 } else { 0.0 },
        z.clamp(SLOT_WINDOW.0, SLOT_WINDOW.1),
        y.abs().min(SLOT_WINDOW.1),
        s.gripper_vel[0].hypot(s.gripper_vel[1]),
    ]
}

/// Inverse-frequency weights `n / (n_present * count_k)`; absent classes get 0.
pub fn class_weights(counts: &[usize]) -> Result<Vec<f64>> {
    let n: usize = counts.iter().sum();
    let present = counts.iter().filter(|&&c| c > 0).count();
    if n == 0 {
        return Err(Error::InvalidData("class counts are all zero".into()));
    }
    Ok(counts
        .iter()
        .map(|&c| {
            if c == 0 {
                0.0
            } else {
                n as f64 / (present as f64 * c as f64)
            }
        })
        .collect())
}

/// Per-cycle difficulty source for the control loop.
pub trait DifficultyEstimator: Sync {
    fn estimate(&self, state: &SimState) -> Result<DifficultyLabel>;
}

/// Labels from simulator state via [`oracle_label`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEstimator {
    pub d_near: f64,
}

impl Default for OracleEstimator {
    fn default() -> Self {
        OracleEstimator { d_near: D_NEAR }
    }
}

impl DifficultyEstimator for OracleEstimator {
    fn estimate(&self, state: &SimState) -> Result<DifficultyLabel> {
        Ok(oracle_label(state, self.d_near))
    }
}

/// Always returns the same label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstantEstimator(pub DifficultyLabel);

impl DifficultyEstimator for ConstantEstimator {
    fn estimate(&self, _state: &SimState) -> Result<DifficultyLabel> {
        Ok(self.0)
    }
}

impl DifficultyEstimator for ClassifierModel {
    fn estimate(&self, state: &SimState) -> Result<DifficultyLabel> {
        Ok(self.classify(&features(state))?.0)
    }
}
