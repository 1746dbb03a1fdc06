//! Trained policies with their observation and action normalization.

use ndarray::Array2;

use crate::envs::{DemoSet, TaskKind, MAX_STEP, OBS_DIM};
use crate::error::{check_dim, Error, Result};
use crate::field::{
    train_field, Checkpoint, FieldArch, FieldDataset, FieldModel, MlpField, Tensor, TrainConfig,
    TrainOutcome,
};
use crate::interpolant::{InterpolantSchedule, PredictionTarget};

pub const CHUNK_LEN: usize = 8;
pub const EXEC_LEN: usize = 4;
/// Conditioning length: the raw observation plus three relative vectors.
pub const POLICY_OBS_DIM: usize = OBS_DIM + 6;

/// Raw observation followed by object minus gripper, goal minus object and
/// slot mouth minus object. Expert behaviour depends on these differences,
/// which a small network otherwise has to reconstruct from absolute
/// coordinates.
pub fn policy_features(obs: &[f64]) -> Result<Vec<f64>> {
    check_dim(OBS_DIM, obs.len())?;
    let mut f = Vec::with_capacity(POLICY_OBS_DIM);
    f.extend_from_slice(obs);
    let (grip, object, goal, mouth) = (
        [obs[0], obs[1]],
        [obs[4], obs[5]],
        [obs[9], obs[10]],
        [obs[11], obs[12]],
    );
    for (a, b) in [(object, grip), (goal, object), (mouth, object)] {
        f.extend([a[0] - b[0], a[1] - b[1]]);
    }
    Ok(f)
}

/// Maps an environment action to the unit-scale training representation:
/// displacements divided by the step limit, grip mapped to `{-1, 1}`.
pub fn encode_action(task: TaskKind, a: &[f64]) -> Vec<f64> {
    a.iter()
        .enumerate()
        .map(|(i, &v)| if i < 2 { v / MAX_STEP } else { 2.0 * v - 1.0 })
        .take(task.action_dim())
        .collect()
}

/// Inverse of [`encode_action`].
pub fn decode_action(task: TaskKind, z: &[f64]) -> Vec<f64> {
    z.iter()
        .enumerate()
        .map(|(i, &v)| if i < 2 { v * MAX_STEP } else { 0.5 * (v + 1.0) })
        .take(task.action_dim())
        .collect()
}

/// A field model that emits normalized action chunks of `chunk_len` steps,
/// of which the first `exec_len` are executed per control cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyBundle {
    pub task: TaskKind,
    pub field: MlpField,
    pub schedule: InterpolantSchedule,
    pub chunk_len: usize,
    pub exec_len: usize,
    obs_mean: Vec<f64>,
    obs_std: Vec<f64>,
}

fn quantized(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x as f32 as f64).collect()
}

impl PolicyBundle {
    pub fn new(
        task: TaskKind,
        field: MlpField,
        schedule: InterpolantSchedule,
        chunk_len: usize,
        exec_len: usize,
        obs_mean: Vec<f64>,
        obs_std: Vec<f64>,
    ) -> Result<Self> {
        if exec_len == 0 || exec_len > chunk_len {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= exec_len <= chunk_len, got {exec_len} and {chunk_len}"
            )));
        }
        check_dim(chunk_len * task.action_dim(), field.action_dim())?;
        check_dim(POLICY_OBS_DIM, field.obs_dim())?;
        check_dim(POLICY_OBS_DIM, obs_mean.len())?;
        check_dim(POLICY_OBS_DIM, obs_std.len())?;
        Ok(PolicyBundle {
            task,
            field,
            schedule,
            chunk_len,
            exec_len,
            obs_mean,
            obs_std,
        })
    }

    pub fn target(&self) -> PredictionTarget {
        self.field.target()
    }

    /// Conditioning vector for a raw observation.
    pub fn normalize_obs(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(policy_features(obs)?
            .iter()
            .zip(self.obs_mean.iter().zip(&self.obs_std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }

    /// Splits a sampled chunk into environment actions.
    pub fn decode_chunk(&self, chunk: &[f64]) -> Result<Vec<Vec<f64>>> {
        let a = self.task.action_dim();
        check_dim(self.chunk_len * a, chunk.len())?;
        Ok(chunk
            .chunks(a)
            .map(|z| decode_action(self.task, z))
            .collect())
    }

    /// Checkpoint holding EMA weights for inference and `raw` for resuming;
    /// auxiliary tensors are the observation mean and std plus
    /// `[task, chunk_len, exec_len]`.
    pub fn to_checkpoint(&self, raw: &MlpField, seed: u64) -> Checkpoint {
        let meta = [
            self.task.code() as f64,
            self.chunk_len as f64,
            self.exec_len as f64,
        ];
        let extra = vec![
            Tensor::vector(&self.obs_mean),
            Tensor::vector(&self.obs_std),
            Tensor::vector(&meta),
        ];
        Checkpoint::from_field(&self.field, raw, &self.schedule, seed, extra)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let field = ck.ema_field()?;
        let schedule = ck
            .schedule
            .ok_or_else(|| Error::Format("policy checkpoint without schedule".into()))?;
        let [mean, std, meta] = <&[Tensor; 3]>::try_from(ck.extra.as_slice())
            .map_err(|_| Error::Format("policy checkpoint needs 3 auxiliary tensors".into()))?;
        let meta = meta.to_f64();
        if meta.len() != 3 {
            return Err(Error::Format(
                "policy metadata tensor must have 3 entries".into(),
            ));
        }
        let task = TaskKind::from_code(meta[0] as u8)
            .ok_or_else(|| Error::Format("unknown task code in checkpoint".into()))?;
        Self::new(
            task,
            field,
            schedule,
            meta[1] as usize,
            meta[2] as usize,
            mean.to_f64(),
            std.to_f64(),
        )
    }
}

/// Training pairs: normalized conditioning features at step `k` and the normalized
/// expert actions for steps `k..k + chunk_len`, padded past the episode end
/// with zero displacement and the last grip command.
pub fn policy_dataset(
    set: &DemoSet,
    chunk_len: usize,
) -> Result<(FieldDataset, Vec<f64>, Vec<f64>)> {
    let n = set.total_steps();
    if n == 0 {
        return Err(Error::InvalidData("demonstration set has no steps".into()));
    }
    let feats: Vec<Vec<f64>> = set
        .demos
        .iter()
        .flat_map(|d| &d.observations)
        .map(|o| policy_features(o))
        .collect::<Result<_>>()?;
    let mut mean = vec![0.0; POLICY_OBS_DIM];
    for o in &feats {
        mean.iter_mut().zip(o).for_each(|(m, x)| *m += x / n as f64);
    }
    let mut var = vec![0.0; POLICY_OBS_DIM];
    for o in &feats {
        var.iter_mut()
            .zip(o.iter().zip(&mean))
            .for_each(|(v, (x, m))| *v += (x - m).powi(2) / n as f64);
    }
    let std = quantized(
        var.into_iter()
            .map(|v| if v > 1e-12 { v.sqrt() } else { 1.0 })
            .collect(),
    );
    let mean = quantized(mean);

    let a = set.action_dim();
    let mut actions = Array2::zeros((n, chunk_len * a));
    let mut obs = Array2::zeros((n, POLICY_OBS_DIM));
    let mut row = 0;
    for d in &set.demos {
        let last = d.actions.last().cloned().unwrap_or_else(|| vec![0.0; a]);
        let mut idle = vec![0.0; a];
        idle[2..].copy_from_slice(&last[2..]);
        for k in 0..d.len() {
            for (j, o) in feats[row].iter().enumerate() {
                obs[[row, j]] = (o - mean[j]) / std[j];
            }
            for h in 0..chunk_len {
                let act = d.actions.get(k + h).unwrap_or(&idle);
                for (c, v) in encode_action(set.task, act).into_iter().enumerate() {
                    actions[[row, h * a + c]] = v;
                }
            }
            row += 1;
        }
    }
    Ok((FieldDataset::new(actions, obs)?, mean, std))
}

#[derive(Debug, Clone)]
pub struct PolicyFit {
    /// Bundle rebuilt from `checkpoint`, so its weights are f32-exact.
    pub bundle: PolicyBundle,
    pub checkpoint: Checkpoint,
    pub outcome: TrainOutcome,
}

pub fn train_policy(
    set: &DemoSet,
    sched: &InterpolantSchedule,
    target: PredictionTarget,
    arch: &FieldArch,
    cfg: &TrainConfig,
) -> Result<PolicyFit> {
    let (data, mean, std) = policy_dataset(set, CHUNK_LEN)?;
    let outcome = train_field(&data, sched, target, arch, cfg)?;
    let draft = PolicyBundle::new(
        set.task,
        outcome.model.clone(),
        *sched,
        CHUNK_LEN,
        EXEC_LEN,
        mean,
        std,
    )?;
    let checkpoint = draft.to_checkpoint(&outcome.raw, cfg.seed);
    let bundle = PolicyBundle::from_checkpoint(&checkpoint)?;
    Ok(PolicyFit {
        bundle,
        checkpoint,
        outcome,
    })
}
