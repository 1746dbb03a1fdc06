//! Paired multi-mode evaluation and its result files.
//!
//! `results.csv` holds only seed-determined quantities (success, NFE,
//! reduction) so reruns are byte-identical; wall-clock figures go to
//! `timing.csv`.

use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use super::{run_episode, EpisodeResult, PolicyBundle, PolicyMode};
use crate::envs::TaskKind;
use crate::error::{Error, Result};
use crate::par::{try_map_range, ExecPolicy};
use crate::sampler::InferenceConfig;

pub const RESULTS_HEADER: [&str; 7] = [
    "task",
    "mode",
    "episodes",
    "success_rate",
    "mean_nfe",
    "max_mean_nfe",
    "reduction_vs_max",
];
pub const TIMING_HEADER: [&str; 7] = [
    "task",
    "mode",
    "mean_wall_s",
    "mean_cycles",
    "classifier_ms_per_cycle",
    "sampler_ms_per_cycle",
    "sim_ms_per_cycle",
];

/// Seed-determined aggregates of one (task, mode) evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub task: TaskKind,
    pub mode: String,
    pub episodes: usize,
    pub success_rate: f64,
    /// Mean total NFE per episode.
    pub mean_nfe: f64,
    pub max_mean_nfe: f64,
    /// `max_mean_nfe / mean_nfe`.
    pub reduction_vs_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingBreakdown {
    pub mean_wall_s: f64,
    pub mean_cycles: f64,
    pub classifier_ms: f64,
    pub sampler_ms: f64,
    pub sim_ms: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub task: TaskKind,
    pub mode: String,
    pub episodes: Vec<EpisodeResult>,
    pub success_rate: f64,
    pub mean_nfe: f64,
    pub max_mean_nfe: f64,
    pub reduction_vs_max: f64,
    pub timing: TimingBreakdown,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn mean_nfe(eps: &[EpisodeResult]) -> f64 {
    mean(eps.iter().map(|e| e.total_nfe as f64))
}

impl RunReport {
    /// Builds aggregates for `episodes` given the max-compute mean NFE on the
    /// same seeds.
    pub fn new(
        task: TaskKind,
        mode: impl Into<String>,
        episodes: Vec<EpisodeResult>,
        max_mean_nfe: f64,
    ) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::InvalidData(
                "report needs at least one episode".into(),
            ));
        }
        let nfe = mean_nfe(&episodes);
        let cycles = || episodes.iter().flat_map(|e| &e.cycles);
        let timing = TimingBreakdown {
            mean_wall_s: mean(episodes.iter().map(|e| e.total_wall_s)),
            mean_cycles: mean(episodes.iter().map(|e| e.cycles.len() as f64)),
            classifier_ms: mean(cycles().map(|c| c.classifier_ms)),
            sampler_ms: mean(cycles().map(|c| c.sampler_ms)),
            sim_ms: mean(cycles().map(|c| c.sim_ms)),
        };
        Ok(RunReport {
            task,
            mode: mode.into(),
            success_rate: mean(episodes.iter().map(|e| if e.success { 1.0 } else { 0.0 })),
            mean_nfe: nfe,
            max_mean_nfe,
            reduction_vs_max: max_mean_nfe / nfe,
            timing,
            episodes,
        })
    }

    pub fn row(&self) -> ResultRow {
        ResultRow {
            task: self.task,
            mode: self.mode.clone(),
            episodes: self.episodes.len(),
            success_rate: self.success_rate,
            mean_nfe: self.mean_nfe,
            max_mean_nfe: self.max_mean_nfe,
            reduction_vs_max: self.reduction_vs_max,
        }
    }
}

/// Runs every mode on the same seeds. The max-compute baseline is taken from
/// a mode equal to `Fixed(max_config)` when present, otherwise run separately.
pub fn evaluate(
    bundle: &PolicyBundle,
    modes: &[(String, PolicyMode<'_>)],
    seeds: &[u64],
    max_config: InferenceConfig,
    exec: ExecPolicy,
) -> Result<Vec<RunReport>> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig(
            "evaluation needs at least one seed".into(),
        ));
    }
    let run = |mode: PolicyMode<'_>| {
        try_map_range(exec, seeds.len(), |i| run_episode(bundle, mode, seeds[i]))
    };
    let mut runs = Vec::with_capacity(modes.len());
    for (_, mode) in modes {
        runs.push(run(*mode)?);
    }
    let is_max = |m: &PolicyMode<'_>| matches!(m, PolicyMode::Fixed(c) if *c == max_config);
    let max_nfe = match modes.iter().position(|(_, m)| is_max(m)) {
        Some(i) => mean_nfe(&runs[i]),
        None => mean_nfe(&run(PolicyMode::Fixed(max_config))?),
    };
    modes
        .iter()
        .zip(runs)
        .map(|((name, _), eps)| RunReport::new(bundle.task, name.clone(), eps, max_nfe))
        .collect()
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Writes `results.csv`, `timing.csv` and `episodes.csv` under `dir` and
/// returns their paths in that order.
pub fn write_report(reports: &[RunReport], dir: &Path) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        return Err(Error::InvalidData("no reports to write".into()));
    }
    fs::create_dir_all(dir)?;
    let paths = vec![
        dir.join("results.csv"),
        dir.join("timing.csv"),
        dir.join("episodes.csv"),
    ];

    let mut w = csv::Writer::from_path(&paths[0])?;
    w.write_record(RESULTS_HEADER)?;
    for r in reports {
        let row = r.row();
        w.write_record([
            row.task.name().to_string(),
            row.mode,
            row.episodes.to_string(),
            num(row.success_rate),
            num(row.mean_nfe),
            num(row.max_mean_nfe),
            num(row.reduction_vs_max),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(&paths[1])?;
    w.write_record(TIMING_HEADER)?;
    for r in reports {
        let t = &r.timing;
        w.write_record([
            r.task.name().to_string(),
            r.mode.clone(),
            num(t.mean_wall_s),
            num(t.mean_cycles),
            num(t.classifier_ms),
            num(t.sampler_ms),
            num(t.sim_ms),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(&paths[2])?;
    w.write_record([
        "task",
        "mode",
        "seed",
        "success",
        "steps",
        "cycles",
        "total_nfe",
    ])?;
    for r in reports {
        for e in &r.episodes {
            w.write_record([
                r.task.name().to_string(),
                r.mode.clone(),
                e.seed.to_string(),
                u8::from(e.success).to_string(),
                e.steps.to_string(),
                e.cycles.len().to_string(),
                e.total_nfe.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(paths)
}

pub fn read_results<R: Read>(r: R) -> Result<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_reader(r);
    if rd.headers()?.iter().ne(RESULTS_HEADER) {
        return Err(Error::Format(format!(
            "results header must be {}",
            RESULTS_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Format(format!("results row {}: bad {what}", line + 1));
        let f = |i: usize, what: &str| rec[i].parse::<f64>().map_err(|_| bad(what));
        out.push(ResultRow {
            task: rec[0].parse().map_err(|_| bad("task"))?,
            mode: rec[1].to_string(),
            episodes: rec[2].parse().map_err(|_| bad("episodes"))?,
            success_rate: f(3, "success_rate")?,
            mean_nfe: f(4, "mean_nfe")?,
            max_mean_nfe: f(5, "max_mean_nfe")?,
            reduction_vs_max: f(6, "reduction_vs_max")?,
        });
    }
    Ok(out)
}

/// Plain-text table with one line per (task, mode).
pub fn summary_table(reports: &[RunReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:<14} {:>9} {:>11} {:>10} {:>10} {:>9} {:>9} {:>9}",
        "task",
        "mode",
        "success%",
        "mean NFE",
        "reduction",
        "wall s",
        "cls ms",
        "samp ms",
        "sim ms"
    );
    for r in reports {
        let t = &r.timing;
        let _ = writeln!(
            s,
            "{:<12} {:<14} {:>9.1} {:>11.1} {:>9.2}x {:>10.4} {:>9.4} {:>9.4} {:>9.4}",
            r.task.name(),
            r.mode,
            100.0 * r.success_rate,
            r.mean_nfe,
            r.reduction_vs_max,
            t.mean_wall_s,
            t.classifier_ms,
            t.sampler_ms,
            t.sim_ms
        );
    }
    s
}
