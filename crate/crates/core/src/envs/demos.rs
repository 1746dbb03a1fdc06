//! Expert demonstration sets and their binary file format.
//!
//! ```text
//! magic        4 bytes "SIPD"
//! version      u32
//! task         u8
//! obs_dim      u32
//! action_dim   u32
//! count        u32
//! per episode: u32 len, u8 success, len x obs_dim f32 observations,
//!              len x action_dim f32 actions, obs_dim f32 final observation
//! ```
//!
//! All values little-endian.

use std::io::{Read, Write};
use std::path::Path;

use super::{reset, rollout_expert_perturbed, SimState, TaskKind, OBS_DIM};
use crate::error::{Error, Result};
use crate::par::{stream_rng, try_map_range, ExecPolicy};

const MAGIC: &[u8; 4] = b"SIPD";
const VERSION: u32 = 1;

/// One successful expert episode; `observations[k]` precedes `actions[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub success: bool,
    pub final_observation: Vec<f64>,
}

impl Demonstration {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Reconstructed simulator states, pre-step states first, final state last.
    pub fn states(&self, task: TaskKind) -> Result<Vec<SimState>> {
        self.observations
            .iter()
            .chain(std::iter::once(&self.final_observation))
            .enumerate()
            .map(|(k, o)| SimState::from_observation(task, o, k))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoSet {
    pub task: TaskKind,
    pub demos: Vec<Demonstration>,
}

impl DemoSet {
    pub fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    pub fn action_dim(&self) -> usize {
        self.task.action_dim()
    }

    pub fn total_steps(&self) -> usize {
        self.demos.iter().map(Demonstration::len).sum()
    }
}

/// Recorded values are f32-exact so a saved set reloads bit-identically.
fn quantize(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x as f32 as f64).collect()
}

/// Reset seed of attempt `i` under base `seed`.
pub fn attempt_seed(seed: u64, i: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i)
}

/// Std of the noise added to executed demo displacements. Demonstrations
/// then cover small deviations from the expert path, which a cloned policy
/// inevitably makes.
pub const DEMO_EXEC_NOISE: f64 = 0.01;

/// `n` successful expert demonstrations; failed attempts are discarded.
pub fn gen_demos(task: TaskKind, n: usize, seed: u64) -> Result<DemoSet> {
    gen_demos_with(task, n, seed, ExecPolicy::default())
}

pub fn gen_demos_with(task: TaskKind, n: usize, seed: u64, exec: ExecPolicy) -> Result<DemoSet> {
    let mut demos = Vec::with_capacity(n);
    let mut next = 0u64;
    while demos.len() < n {
        let batch = (n - demos.len()) + 8;
        let base = next;
        let got = try_map_range(exec, batch, |i| {
            let s = attempt_seed(seed, base + i as u64);
            let (mut rng, mut noise) = (stream_rng(s, 1), stream_rng(s, 2));
            let r =
                rollout_expert_perturbed(reset(task, s), &mut rng, DEMO_EXEC_NOISE, &mut noise)?;
            Ok::<_, Error>(r.success().then(|| Demonstration {
                observations: r.states.iter().map(|s| quantize(s.observation())).collect(),
                actions: r.actions.into_iter().map(quantize).collect(),
                success: true,
                final_observation: quantize(r.last.observation()),
            }))
        })?;
        next += batch as u64;
        demos.extend(got.into_iter().flatten().take(n - demos.len()));
        if next > 10 * n as u64 + 100 {
            return Err(Error::InvalidData(format!(
                "expert succeeded on only {} of {next} attempts",
                demos.len()
            )));
        }
    }
    Ok(DemoSet { task, demos })
}

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} exceeds u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f32s<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    for &x in xs {
        w.write_all(&(x as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn write_demos<W: Write>(set: &DemoSet, w: &mut W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[set.task.code()])?;
    put_u32(w, set.obs_dim())?;
    put_u32(w, set.action_dim())?;
    put_u32(w, set.demos.len())?;
    for d in &set.demos {
        if d.observations.len() != d.actions.len() {
            return Err(Error::InvalidData(
                "observation and action counts differ".into(),
            ));
        }
        put_u32(w, d.len())?;
        w.write_all(&[d.success as u8])?;
        for o in &d.observations {
            put_f32s(w, o)?;
        }
        for a in &d.actions {
            put_f32s(w, a)?;
        }
        put_f32s(w, &d.final_observation)?;
    }
    Ok(())
}

struct Reader<'a, R: Read>(&'a mut R);

impl<R: Read> Reader<'_, R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0
            .read_exact(&mut b)
            .map_err(|_| Error::Format("truncated demonstration file".into()))?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.bytes()?) as usize)
    }

    fn rows(&mut self, n: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
        (0..n)
            .map(|_| {
                (0..dim)
                    .map(|_| Ok(f32::from_le_bytes(self.bytes()?) as f64))
                    .collect()
            })
            .collect()
    }
}

pub fn read_demos<R: Read>(r: &mut R) -> Result<DemoSet> {
    let mut rd = Reader(r);
    if &rd.bytes::<4>()? != MAGIC {
        return Err(Error::Format("not a demonstration file".into()));
    }
    let version = rd.u32()?;
    if version != VERSION as usize {
        return Err(Error::Format(format!(
            "unsupported demonstration file version {version}"
        )));
    }
    let [code] = rd.bytes::<1>()?;
    let task = TaskKind::from_code(code)
        .ok_or_else(|| Error::Format(format!("unknown task code {code}")))?;
    let (obs_dim, action_dim, count) = (rd.u32()?, rd.u32()?, rd.u32()?);
    if obs_dim != OBS_DIM || action_dim != task.action_dim() {
        return Err(Error::Format(format!(
            "dims {obs_dim}/{action_dim} do not match task {task}"
        )));
    }
    let mut demos = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = rd.u32()?;
        let [success] = rd.bytes::<1>()?;
        let observations = rd.rows(len, obs_dim)?;
        let actions = rd.rows(len, action_dim)?;
        let final_observation = rd.rows(1, obs_dim)?.remove(0);
        demos.push(Demonstration {
            observations,
            actions,
            success: success != 0,
            final_observation,
        });
    }
    let mut tail = [0u8; 1];
    if rd.0.read(&mut tail)? != 0 {
        return Err(Error::Format("trailing bytes after demonstrations".into()));
    }
    Ok(DemoSet { task, demos })
}

pub fn save_demos(set: &DemoSet, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_demos(set, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_demos(path: &Path) -> Result<DemoSet> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    read_demos(&mut r)
}
