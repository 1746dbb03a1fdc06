use std::time::Instant;

use super::PolicyBundle;
use crate::difficulty::{ConfigMap, DifficultyEstimator, DifficultyLabel};
use crate::envs::{is_done, is_success, reset, step};
use crate::error::{Error, Result};
use crate::par::stream_rng;
use crate::sampler::{sample_actions, InferenceConfig};

/// RNG stream for policy sampling within an episode seed.
const SAMPLING_STREAM: u64 = 7;

/// Per-cycle inference configuration source.
#[derive(Clone, Copy)]
pub enum PolicyMode<'a> {
    Adaptive {
        estimator: &'a dyn DifficultyEstimator,
        map: &'a ConfigMap,
    },
    Fixed(InferenceConfig),
}

impl std::fmt::Debug for PolicyMode<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PolicyMode::Adaptive { map, .. } => write!(f, "Adaptive({})", map.preset),
            PolicyMode::Fixed(cfg) => write!(f, "Fixed({})", cfg.label()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleLog {
    pub cycle: usize,
    /// Estimated difficulty; `None` under a fixed configuration.
    pub label: Option<DifficultyLabel>,
    pub config: InferenceConfig,
    pub nfe: usize,
    pub classifier_ms: f64,
    pub sampler_ms: f64,
    pub sim_ms: f64,
    /// Actions executed in this cycle.
    pub actions: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub seed: u64,
    pub success: bool,
    pub steps: usize,
    pub total_nfe: usize,
    pub total_wall_s: f64,
    pub cycles: Vec<CycleLog>,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Receding-horizon control from `reset(bundle.task, seed)` until success
/// or the horizon. Each cycle picks a configuration, samples one chunk and
/// executes its first `exec_len` actions.
pub fn run_episode(
    bundle: &PolicyBundle,
    mode: PolicyMode<'_>,
    seed: u64,
) -> Result<EpisodeResult> {
    let mut rng = stream_rng(seed, SAMPLING_STREAM);
    let mut s = reset(bundle.task, seed);
    let mut cycles = Vec::new();
    let ctx = |cycle: usize| {
        move |e: Error| Error::InEpisode {
            episode: seed,
            cycle,
            source: Box::new(e),
        }
    };
    while !is_done(&s) {
        let cycle = cycles.len();
        let t0 = Instant::now();
        let (label, config) = match mode {
            PolicyMode::Adaptive { estimator, map } => {
                let l = estimator.estimate(&s).map_err(ctx(cycle))?;
                (Some(l), map.map_config(l))
            }
            PolicyMode::Fixed(cfg) => (None, cfg),
        };
        let classifier_ms = ms_since(t0);
        let t1 = Instant::now();
        let obs = bundle.normalize_obs(&s.observation()).map_err(ctx(cycle))?;
        let out = sample_actions(&bundle.field, &bundle.schedule, &config, &obs, &mut rng)
            .map_err(ctx(cycle))?;
        let chunk = bundle.decode_chunk(&out.action).map_err(ctx(cycle))?;
        let sampler_ms = ms_since(t1);
        let t2 = Instant::now();
        let mut executed = Vec::with_capacity(bundle.exec_len);
        for a in chunk.into_iter().take(bundle.exec_len) {
            if is_done(&s) {
                break;
            }
            s = step(&s, &a).map_err(ctx(cycle))?;
            executed.push(a);
        }
        let sim_ms = ms_since(t2);
        cycles.push(CycleLog {
            cycle,
            label,
            config,
            nfe: out.nfe,
            classifier_ms,
            sampler_ms,
            sim_ms,
            actions: executed,
        });
    }
    Ok(EpisodeResult {
        seed,
        success: is_success(&s),
        steps: s.step_count,
        total_nfe: cycles.iter().map(|c| c.nfe).sum(),
        total_wall_s: cycles
            .iter()
            .map(|c| c.classifier_ms + c.sampler_ms + c.sim_ms)
            .sum::<f64>()
            / 1e3,
        cycles,
    })
}
