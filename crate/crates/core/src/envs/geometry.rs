//! Contact resolution for the push disc and the slot walls.

use super::{add, clamp_box, dist, dot, scale, sub, unit, SlotGeometry};

pub const PUSH_BLOCK_RADIUS: f64 = 0.05;
pub const GRIPPER_RADIUS: f64 = 0.015;
/// Centre separation at which gripper and block touch.
pub const PUSH_CONTACT_RADIUS: f64 = PUSH_BLOCK_RADIUS + GRIPPER_RADIUS;
pub const SLOT_DEPTH: f64 = 0.06;
pub const SLOT_WALL: f64 = 0.05;

const PUSH_SUBSTEPS: usize = 5;
const PEG_SUBSTEPS: usize = 10;

/// `(depth along the insertion axis, lateral offset)` of `p` relative to the mouth.
pub fn slot_frame(p: [f64; 2], slot: &SlotGeometry) -> (f64, f64) {
    let u = slot.axis();
    let n = [-u[1], u[0]];
    let r = sub(p, slot.mouth);
    (dot(r, u), dot(r, n))
}

/// Moves the gripper by `a`; an overlapped block is pushed out along the
/// contact normal after every substep.
pub(super) fn push_substeps(mut g: [f64; 2], mut b: [f64; 2], a: [f64; 2]) -> ([f64; 2], [f64; 2]) {
    let da = scale(a, 1.0 / PUSH_SUBSTEPS as f64);
    for _ in 0..PUSH_SUBSTEPS {
        g = clamp_box(add(g, da));
        if dist(g, b) < PUSH_CONTACT_RADIUS {
            let mut normal = unit(sub(b, g));
            if normal == [0.0, 0.0] {
                normal = unit(a);
            }
            b = clamp_box(add(g, scale(normal, PUSH_CONTACT_RADIUS)));
        }
    }
    (g, b)
}

/// Solid U-shaped wall around the slot interior.
fn in_wall(p: [f64; 2], slot: &SlotGeometry) -> bool {
    let (z, y) = slot_frame(p, slot);
    let half = 0.5 * slot.width;
    let in_outer = z > 0.0 && z < SLOT_DEPTH + SLOT_WALL && y.abs() < half + SLOT_WALL;
    let in_interior = z < SLOT_DEPTH && y.abs() < half;
    in_outer && !in_interior
}

/// Moves the peg tip by `a` in substeps, sliding along walls by trying each
/// world axis alone when the full substep is blocked. Returns the new tip
/// and whether any substep was blocked.
pub(super) fn peg_substeps(mut g: [f64; 2], a: [f64; 2], slot: &SlotGeometry) -> ([f64; 2], bool) {
    let da = scale(a, 1.0 / PEG_SUBSTEPS as f64);
    let mut blocked = false;
    for _ in 0..PEG_SUBSTEPS {
        let candidates = [add(g, da), [g[0] + da[0], g[1]], [g[0], g[1] + da[1]]];
        match candidates
            .iter()
            .map(|&c| clamp_box(c))
            .position(|c| !in_wall(c, slot))
        {
            Some(0) => g = clamp_box(candidates[0]),
            Some(i) => {
                blocked = true;
                g = clamp_box(candidates[i]);
            }
            None => blocked = true,
        }
    }
    (g, blocked)
}
