//! Phase-dependent proportional controllers for every task.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::geometry::{slot_frame, PUSH_CONTACT_RADIUS};
use super::{
    add, dist, dot, is_done, is_success, scale, step, sub, unit, SimState, TaskKind, MAX_STEP,
};
use crate::error::Result;

/// Beyond this range the expert heads straight for the object or slot mouth.
const FAR_RANGE: f64 = 0.25;
const PUSH_SPEED: f64 = 0.045;
/// Half-width of the lane behind the block in which the expert pushes.
const PUSH_LANE: f64 = 0.03;
const PREINSERT_OFFSET: f64 = 0.05;
const INSERT_SPEED: f64 = 0.015;
pub const INSERT_JITTER_STD: f64 = 0.01;
/// Depth at which the slot approach region begins.
pub const SLOT_APPROACH_DEPTH: f64 = 0.06;
/// Lateral half-width of the slot approach region.
pub const SLOT_APPROACH_HALF_WIDTH: f64 = 0.03;
const GRIP_RANGE: f64 = 0.1;

/// Scales `v` uniformly so no component exceeds the step limit.
fn limit(v: [f64; 2]) -> [f64; 2] {
    let m = v[0].abs().max(v[1].abs());
    if m > MAX_STEP {
        scale(v, MAX_STEP / m)
    } else {
        v
    }
}

fn toward(from: [f64; 2], to: [f64; 2]) -> [f64; 2] {
    limit(sub(to, from))
}

/// Whether the peg tip is inside the slot approach region.
pub fn in_slot_approach(state: &SimState) -> bool {
    let (z, y) = slot_frame(state.object_pos, &state.slot);
    z >= -SLOT_APPROACH_DEPTH && y.abs() < SLOT_APPROACH_HALF_WIDTH
}

/// Expert action for `state`. Only the insertion phase of PegInSlot draws
/// from `rng`; a successful state yields a zero displacement.
pub fn scripted_expert<R: Rng + ?Sized>(state: &SimState, rng: &mut R) -> Vec<f64> {
    let done = is_success(state);
    match state.task {
        TaskKind::ReachLift => {
            let a = if done {
                [0.0; 2]
            } else if state.attached {
                toward(state.object_pos, state.goal_pos)
            } else {
                toward(state.gripper_pos, state.object_pos)
            };
            let grip = state.attached || dist(state.gripper_pos, state.object_pos) < GRIP_RANGE;
            vec![a[0], a[1], if grip { 1.0 } else { 0.0 }]
        }
        TaskKind::PushBlock => {
            let a = if done { [0.0; 2] } else { push_action(state) };
            a.to_vec()
        }
        TaskKind::PegInSlot => {
            let a = if done {
                [0.0; 2]
            } else {
                peg_action(state, rng)
            };
            a.to_vec()
        }
    }
}

fn push_action(s: &SimState) -> [f64; 2] {
    let (g, b) = (s.gripper_pos, s.object_pos);
    let to_goal = sub(s.goal_pos, b);
    let d = unit(to_goal);
    let n = [-d[1], d[0]];
    let rel = sub(g, b);
    let (along, lat) = (dot(rel, d), dot(rel, n));
    if along > -0.03 && dist(g, b) < FAR_RANGE {
        // In front of or beside the block: go around it first.
        let side = if lat >= 0.0 { 1.0 } else { -1.0 };
        return toward(g, add(b, scale(n, side * 0.12)));
    }
    // Behind the block: cancel the lateral offset every step while closing
    // in, slowing down near contact until aligned.
    let gap = (-along - PUSH_CONTACT_RADIUS).max(0.0);
    let aligned = (1.0 - lat.abs() / PUSH_LANE).clamp(0.0, 1.0);
    let cruise = (to_goal[0].hypot(to_goal[1]) + gap).clamp(0.01, PUSH_SPEED);
    let forward = cruise * if gap > 2.0 * PUSH_LANE { 1.0 } else { aligned };
    limit(add(scale(d, forward), scale(n, -lat)))
}

fn peg_action<R: Rng + ?Sized>(s: &SimState, rng: &mut R) -> [f64; 2] {
    let tip = s.object_pos;
    let u = s.slot.axis();
    let n = [-u[1], u[0]];
    let pre = sub(s.slot.mouth, scale(u, PREINSERT_OFFSET));
    if in_slot_approach(s) || dist(tip, pre) < 0.01 {
        let (_, y) = slot_frame(tip, &s.slot);
        let jitter = Normal::new(0.0, INSERT_JITTER_STD).unwrap();
        let base = add(scale(u, INSERT_SPEED), scale(n, -0.5 * y));
        return limit([base[0] + jitter.sample(rng), base[1] + jitter.sample(rng)]);
    }
    if dist(tip, s.slot.mouth) > FAR_RANGE {
        return toward(tip, s.slot.mouth);
    }
    toward(tip, pre)
}

/// One expert episode: pre-step states, actions, and the final state.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertRollout {
    pub states: Vec<SimState>,
    pub actions: Vec<Vec<f64>>,
    pub last: SimState,
}

impl ExpertRollout {
    pub fn success(&self) -> bool {
        is_success(&self.last)
    }
}

/// Runs the expert from `start` until success or the horizon.
pub fn rollout_expert<R: Rng + ?Sized>(start: SimState, rng: &mut R) -> Result<ExpertRollout> {
    // Zero noise never draws, so the stream is irrelevant.
    rollout_expert_perturbed(start, rng, 0.0, &mut crate::par::stream_rng(0, 0))
}

/// Like [`rollout_expert`], but the executed displacement gets i.i.d.
/// Gaussian noise of std `exec_noise` drawn from `noise_rng`. Recorded
/// actions stay the clean expert actions, so the rollout visits states just
/// off the expert path labelled with the expert's correction.
pub fn rollout_expert_perturbed<R: Rng + ?Sized, N: Rng + ?Sized>(
    start: SimState,
    rng: &mut R,
    exec_noise: f64,
    noise_rng: &mut N,
) -> Result<ExpertRollout> {
    let noise = Normal::new(0.0, exec_noise)
        .map_err(|e| crate::Error::InvalidConfig(format!("exec noise: {e}")))?;
    let mut s = start;
    let (mut states, mut actions) = (Vec::new(), Vec::new());
    while !is_done(&s) {
        let a = scripted_expert(&s, rng);
        let mut exec = a.clone();
        if exec_noise > 0.0 {
            exec.iter_mut()
                .take(2)
                .for_each(|c| *c += noise.sample(noise_rng));
        }
        let next = step(&s, &exec)?;
        states.push(s);
        actions.push(a);
        s = next;
    }
    Ok(ExpertRollout {
        states,
        actions,
        last: s,
    })
}
