//! Planar manipulation tasks on the workspace `[-1, 1]^2`.
//!
//! Steps are kinematic with a quasi-static contact model, so an episode is a
//! pure function of its reset seed and action sequence.

mod demos;
mod expert;
mod geometry;

pub use demos::{
    gen_demos, gen_demos_with, load_demos, read_demos, save_demos, write_demos, DemoSet,
    Demonstration, DEMO_EXEC_NOISE,
};
pub use expert::{
    in_slot_approach, rollout_expert, rollout_expert_perturbed, scripted_expert, ExpertRollout,
};
pub use geometry::{slot_frame, PUSH_CONTACT_RADIUS, SLOT_DEPTH, SLOT_WALL};

use std::fmt;

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::par::stream_rng;

pub const MAX_STEP: f64 = 0.05;
pub const HORIZON: usize = 300;
pub const GRASP_RADIUS: f64 = 0.03;
pub const GOAL_TOLERANCE: f64 = 0.05;
pub const SLOT_WIDTH: f64 = 0.04;
/// Tip depth past the slot mouth required for a successful insertion.
pub const INSERT_DEPTH: f64 = 0.03;
pub const WORKSPACE: f64 = 1.0;
/// Grip channel values above this request closure.
pub const GRIP_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    ReachLift,
    PushBlock,
    PegInSlot,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [
        TaskKind::ReachLift,
        TaskKind::PushBlock,
        TaskKind::PegInSlot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::ReachLift => "reach_lift",
            TaskKind::PushBlock => "push_block",
            TaskKind::PegInSlot => "peg_in_slot",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        TaskKind::ALL.get(code as usize).copied()
    }

    /// Displacement channels plus the grip channel for ReachLift.
    pub fn action_dim(self) -> usize {
        match self {
            TaskKind::ReachLift => 3,
            TaskKind::PushBlock | TaskKind::PegInSlot => 2,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "reach_lift" | "reachlift" | "reach" | "lift" => Ok(TaskKind::ReachLift),
            "push_block" | "pushblock" | "push" => Ok(TaskKind::PushBlock),
            "peg_in_slot" | "peginslot" | "peg" => Ok(TaskKind::PegInSlot),
            other => Err(Error::InvalidConfig(format!("unknown task `{other}`"))),
        }
    }
}

/// Slot mouth position, insertion axis angle and interior width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotGeometry {
    pub mouth: [f64; 2],
    pub angle: f64,
    pub width: f64,
}

impl SlotGeometry {
    pub const NONE: SlotGeometry = SlotGeometry {
        mouth: [0.0, 0.0],
        angle: 0.0,
        width: 0.0,
    };

    /// Unit insertion axis pointing into the slot.
    pub fn axis(&self) -> [f64; 2] {
        [self.angle.cos(), self.angle.sin()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub task: TaskKind,
    pub gripper_pos: [f64; 2],
    /// Displacement applied by the last step.
    pub gripper_vel: [f64; 2],
    /// Block centre, grasp object, or peg tip.
    pub object_pos: [f64; 2],
    /// Always zero: the push block is a disc.
    pub object_angle: f64,
    pub attached: bool,
    pub contact: bool,
    pub goal_pos: [f64; 2],
    pub slot: SlotGeometry,
    pub step_count: usize,
}

/// Observation length; every task uses the same layout.
pub const OBS_DIM: usize = 15;

/// Observation field names in vector order.
pub const OBS_FIELDS: [&str; OBS_DIM] = [
    "gripper_x",
    "gripper_y",
    "gripper_vx",
    "gripper_vy",
    "object_x",
    "object_y",
    "object_angle",
    "attached",
    "contact",
    "goal_x",
    "goal_y",
    "slot_x",
    "slot_y",
    "slot_angle",
    "slot_width",
];

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

impl SimState {
    /// Numeric fields in [`OBS_FIELDS`] order; `step_count` is excluded.
    pub fn observation(&self) -> Vec<f64> {
        let s = &self.slot;
        vec![
            self.gripper_pos[0],
            self.gripper_pos[1],
            self.gripper_vel[0],
            self.gripper_vel[1],
            self.object_pos[0],
            self.object_pos[1],
            self.object_angle,
            flag(self.attached),
            flag(self.contact),
            self.goal_pos[0],
            self.goal_pos[1],
            s.mouth[0],
            s.mouth[1],
            s.angle,
            s.width,
        ]
    }

    /// Inverse of [`observation`](Self::observation).
    pub fn from_observation(task: TaskKind, obs: &[f64], step_count: usize) -> Result<Self> {
        check_dim(OBS_DIM, obs.len())?;
        Ok(SimState {
            task,
            gripper_pos: [obs[0], obs[1]],
            gripper_vel: [obs[2], obs[3]],
            object_pos: [obs[4], obs[5]],
            object_angle: obs[6],
            attached: obs[7] > 0.5,
            contact: obs[8] > 0.5,
            goal_pos: [obs[9], obs[10]],
            slot: SlotGeometry {
                mouth: [obs[11], obs[12]],
                angle: obs[13],
                width: obs[14],
            },
            step_count,
        })
    }

    pub fn in_workspace(&self) -> bool {
        let inside = |p: [f64; 2]| p.iter().all(|v| v.abs() <= WORKSPACE);
        inside(self.gripper_pos) && inside(self.object_pos) && inside(self.goal_pos)
    }
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub(crate) fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn add(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

pub(crate) fn scale(a: [f64; 2], k: f64) -> [f64; 2] {
    [a[0] * k, a[1] * k]
}

pub(crate) fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub(crate) fn unit(a: [f64; 2]) -> [f64; 2] {
    let n = a[0].hypot(a[1]);
    if n > 0.0 {
        [a[0] / n, a[1] / n]
    } else {
        [0.0, 0.0]
    }
}

fn rotate(a: [f64; 2], phi: f64) -> [f64; 2] {
    let (s, c) = phi.sin_cos();
    [c * a[0] - s * a[1], s * a[0] + c * a[1]]
}

const RESET_MARGIN: f64 = 0.9;
/// Push directions lie within this angle of +y.
const PUSH_HEADING_SPREAD: f64 = 0.5;
/// Half-angle of the start cone behind the push direction.
const PUSH_START_CONE: f64 = std::f64::consts::PI / 8.0;
/// Half-angle of the start cone behind the insertion direction.
const PEG_START_CONE: f64 = std::f64::consts::FRAC_PI_3;

fn in_reset_box(points: &[[f64; 2]]) -> bool {
    points
        .iter()
        .all(|p| p[0].abs() <= RESET_MARGIN && p[1].abs() <= RESET_MARGIN)
}

/// Deterministic initial state; the gripper starts at least 0.5 from the
/// object or slot mouth. For PushBlock and PegInSlot it starts inside a cone
/// behind the push or insertion direction.
pub fn reset(task: TaskKind, seed: u64) -> SimState {
    let mut rng = stream_rng(seed, 0);
    loop {
        if let Some(s) = try_reset(task, &mut rng) {
            return s;
        }
    }
}

fn try_reset<R: Rng + ?Sized>(task: TaskKind, rng: &mut R) -> Option<SimState> {
    let mut s = SimState {
        task,
        gripper_pos: [0.0; 2],
        gripper_vel: [0.0; 2],
        object_pos: [0.0; 2],
        object_angle: 0.0,
        attached: false,
        contact: false,
        goal_pos: [0.0; 2],
        slot: SlotGeometry::NONE,
        step_count: 0,
    };
    let heading = |rng: &mut R| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let start_r = |rng: &mut R| rng.random_range(0.5..0.8);
    let behind = |rng: &mut R, half: f64| rng.random_range(-half..half);
    match task {
        TaskKind::ReachLift => {
            let obj = [rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6)];
            let psi = heading(rng);
            let goal = add(
                obj,
                scale([psi.cos(), psi.sin()], rng.random_range(0.2..0.4)),
            );
            let phi = heading(rng);
            let g = add(obj, scale([phi.cos(), phi.sin()], start_r(rng)));
            s.object_pos = obj;
            s.goal_pos = goal;
            s.gripper_pos = g;
        }
        TaskKind::PushBlock => {
            let b = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
            let psi = std::f64::consts::FRAC_PI_2
                + rng.random_range(-PUSH_HEADING_SPREAD..PUSH_HEADING_SPREAD);
            let d = [psi.cos(), psi.sin()];
            let goal = add(b, scale(d, rng.random_range(0.12..0.25)));
            let back = rotate(scale(d, -1.0), behind(rng, PUSH_START_CONE));
            let g = add(b, scale(back, start_r(rng)));
            s.object_pos = b;
            s.goal_pos = goal;
            s.gripper_pos = g;
        }
        TaskKind::PegInSlot => {
            let mouth = [rng.random_range(-0.3..0.3), rng.random_range(-0.5..-0.2)];
            let angle = -std::f64::consts::FRAC_PI_2 + rng.random_range(-0.3..0.3);
            let slot = SlotGeometry {
                mouth,
                angle,
                width: SLOT_WIDTH,
            };
            let u = slot.axis();
            let back = rotate(scale(u, -1.0), behind(rng, PEG_START_CONE));
            let g = add(mouth, scale(back, start_r(rng)));
            s.slot = slot;
            s.goal_pos = add(mouth, scale(u, 0.5 * (INSERT_DEPTH + SLOT_DEPTH)));
            s.gripper_pos = g;
            s.object_pos = g;
            s.attached = true;
        }
    }
    in_reset_box(&[s.gripper_pos, s.object_pos, s.goal_pos, s.slot.mouth]).then_some(s)
}

fn clip_component(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(-MAX_STEP, MAX_STEP)
    }
}

fn clamp_box(p: [f64; 2]) -> [f64; 2] {
    [
        p[0].clamp(-WORKSPACE, WORKSPACE),
        p[1].clamp(-WORKSPACE, WORKSPACE),
    ]
}

/// Advances one step. Displacements are clipped per component to
/// [`MAX_STEP`]; `action` carries a third grip channel for ReachLift.
pub fn step(state: &SimState, action: &[f64]) -> Result<SimState> {
    check_dim(state.task.action_dim(), action.len())?;
    let a = [clip_component(action[0]), clip_component(action[1])];
    let mut s = *state;
    s.step_count += 1;
    let start = s.gripper_pos;
    match s.task {
        TaskKind::ReachLift => {
            let g = clamp_box(add(start, a));
            let moved = sub(g, start);
            s.gripper_pos = g;
            if s.attached {
                s.object_pos = clamp_box(add(s.object_pos, moved));
            }
            let close = action[2] > GRIP_THRESHOLD;
            if !close {
                s.attached = false;
            } else if !s.attached && dist(g, s.object_pos) <= GRASP_RADIUS {
                s.attached = true;
            }
            s.contact = s.attached;
        }
        TaskKind::PushBlock => {
            let (g, b) = geometry::push_substeps(start, s.object_pos, a);
            s.gripper_pos = g;
            s.object_pos = b;
            s.contact = dist(g, b) <= PUSH_CONTACT_RADIUS + 0.005;
        }
        TaskKind::PegInSlot => {
            let (g, blocked) = geometry::peg_substeps(start, a, &s.slot);
            s.gripper_pos = g;
            s.object_pos = g;
            s.contact = blocked;
        }
    }
    s.gripper_vel = sub(s.gripper_pos, start);
    Ok(s)
}

/// Task completion predicate.
pub fn is_success(state: &SimState) -> bool {
    match state.task {
        TaskKind::ReachLift => {
            state.attached && dist(state.object_pos, state.goal_pos) < GOAL_TOLERANCE
        }
        TaskKind::PushBlock => dist(state.object_pos, state.goal_pos) < GOAL_TOLERANCE,
        TaskKind::PegInSlot => {
            let (z, y) = slot_frame(state.object_pos, &state.slot);
            z >= INSERT_DEPTH && y.abs() < 0.5 * state.slot.width
        }
    }
}

/// Episode end: success or horizon.
pub fn is_done(state: &SimState) -> bool {
    is_success(state) || state.step_count >= HORIZON
}

#[cfg(test)]
mod tests;
