//! Pipeline commands. Each reads its inputs from the configured paths,
//! writes artifacts under `cfg.out` and finishes with a manifest.

use std::fs;
use std::path::{Path, PathBuf};

use sip_core::difficulty::{
    accuracy, annotate_demos, train_classifier, write_annotations, AnnotationRecord,
    ClassifierModel, ConfigMap, DifficultyEstimator, OracleEstimator,
};
use sip_core::envs::{gen_demos, load_demos, save_demos, DemoSet};
use sip_core::field::Checkpoint;
use sip_core::par::{stream_rng, ExecPolicy};
use sip_core::runtime::{
    evaluate, summary_table, train_policy, write_report, PolicyBundle, PolicyMode, RunReport,
};
use sip_core::sampler::{expected_nfe, InferenceConfig, LastStep, Mode, Solver};
use sip_core::{Error, Result};

use crate::config::{EstimatorKind, RunConfig};
use crate::manifest::Manifest;

/// What a command produced, for printing and tests.
#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub outputs: Vec<PathBuf>,
    pub manifest: PathBuf,
    pub summary: String,
}

fn finish(
    command: &str,
    cfg: &RunConfig,
    inputs: &[PathBuf],
    outputs: Vec<PathBuf>,
    unhashed: &[PathBuf],
    summary: String,
) -> Result<CommandOutput> {
    let manifest = Manifest::build(command, cfg, inputs, &outputs, unhashed)?.write()?;
    Ok(CommandOutput {
        outputs,
        manifest,
        summary,
    })
}

fn prepare(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out)?;
    Ok(())
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::InvalidData(format!(
            "missing input `{}`; {hint}",
            path.display()
        )))
    }
}

fn load_task_demos(cfg: &RunConfig) -> Result<DemoSet> {
    let path = cfg.demos_path();
    require(&path, "run `gen-demos` first or set demos.input")?;
    let set = load_demos(&path)?;
    let task = cfg.task_kind()?;
    if set.task != task {
        return Err(Error::InvalidData(format!(
            "`{}` holds {} demonstrations, config task is {task}",
            path.display(),
            set.task
        )));
    }
    Ok(set)
}

pub fn gen_demos_cmd(cfg: &RunConfig) -> Result<CommandOutput> {
    prepare(cfg)?;
    let set = gen_demos(cfg.task_kind()?, cfg.demos.count, cfg.seed)?;
    let path = cfg.out.join("demos.sipd");
    save_demos(&set, &path)?;
    let summary = format!(
        "{} demonstrations, {} steps, task {}\n",
        set.demos.len(),
        set.total_steps(),
        set.task
    );
    finish("gen-demos", cfg, &[], vec![path], &[], summary)
}

pub fn train_cmd(cfg: &RunConfig) -> Result<CommandOutput> {
    prepare(cfg)?;
    let set = load_task_demos(cfg)?;
    let fit = train_policy(
        &set,
        &cfg.schedule()?,
        cfg.target()?,
        &cfg.field_arch()?,
        &cfg.train_config()?,
    )?;
    let ckpt = cfg.out.join("policy.ckpt");
    fit.checkpoint.save(&ckpt)?;
    let curve = cfg.out.join("loss_curve.csv");
    let mut w = csv::Writer::from_path(&curve)?;
    w.write_record(["step", "loss"])?;
    for (i, l) in fit.outcome.loss_curve.iter().enumerate() {
        w.write_record([i.to_string(), format!("{l:?}")])?;
    }
    w.flush()?;
    let lc = &fit.outcome.loss_curve;
    let summary = format!(
        "trained {} steps, loss {:.4} -> {:.4}\n",
        fit.outcome.steps,
        lc.first().copied().unwrap_or(f64::NAN),
        lc.last().copied().unwrap_or(f64::NAN)
    );
    finish(
        "train",
        cfg,
        &[cfg.demos_path()],
        vec![ckpt, curve],
        &[],
        summary,
    )
}

/// Tolerance for the accuracy curve's monotonicity flag.
pub const CURVE_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub size: usize,
    pub val_accuracy: f64,
    pub heldout_accuracy: f64,
}

/// Whether held-out accuracy never drops by more than [`CURVE_TOLERANCE`]
/// as the training set grows.
pub fn curve_is_monotone(points: &[CurvePoint]) -> bool {
    points
        .windows(2)
        .all(|w| w[1].heldout_accuracy >= w[0].heldout_accuracy - CURVE_TOLERANCE)
}

pub fn train_classifier_cmd(cfg: &RunConfig) -> Result<CommandOutput> {
    use rand::seq::SliceRandom;
    prepare(cfg)?;
    let set = load_task_demos(cfg)?;
    let c = &cfg.classifier;
    let mut pool = annotate_demos(&set, c.d_near, c.stride)?;
    pool.shuffle(&mut stream_rng(cfg.seed, 4));
    let mut sizes = c.sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let need = *sizes.last().expect("validated non-empty");
    if pool.len() < need {
        return Err(Error::InvalidData(format!(
            "{} annotated states, the largest curve size needs {need}",
            pool.len()
        )));
    }
    let held_set = gen_demos(set.task, c.heldout_demos, cfg.heldout_seed())?;
    let held = annotate_demos(&held_set, c.d_near, 1)?;
    let held_refs: Vec<&AnnotationRecord> = held.iter().collect();

    let ccfg = cfg.classifier_config()?;
    let mut points = Vec::new();
    let mut last = None;
    for &n in &sizes {
        let fit = train_classifier(&pool[..n], &ccfg)?;
        points.push(CurvePoint {
            size: n,
            val_accuracy: fit.val_accuracy.unwrap_or(f64::NAN),
            heldout_accuracy: accuracy(&fit.model, &held_refs)?,
        });
        last = Some(fit.model);
    }
    let model = last.expect("at least one size");
    let monotone = curve_is_monotone(&points);

    let ckpt = cfg.out.join("classifier.ckpt");
    model.to_checkpoint(cfg.seed).save(&ckpt)?;
    let ann = cfg.out.join("annotations.csv");
    write_annotations(&pool[..need], fs::File::create(&ann)?)?;
    let curve = cfg.out.join("accuracy_curve.csv");
    let mut w = csv::Writer::from_path(&curve)?;
    w.write_record([
        "size",
        "val_accuracy",
        "heldout_accuracy",
        "heldout_records",
        "monotone",
    ])?;
    for p in &points {
        w.write_record([
            p.size.to_string(),
            format!("{:?}", p.val_accuracy),
            format!("{:?}", p.heldout_accuracy),
            held.len().to_string(),
            u8::from(monotone).to_string(),
        ])?;
    }
    w.flush()?;

    let mut summary = String::from("size  val_acc  heldout_acc\n");
    for p in &points {
        summary.push_str(&format!(
            "{:>4}  {:>7.3}  {:>11.3}\n",
            p.size, p.val_accuracy, p.heldout_accuracy
        ));
    }
    summary.push_str(&format!("monotone within {CURVE_TOLERANCE}: {monotone}\n"));
    finish(
        "train-classifier",
        cfg,
        &[cfg.demos_path()],
        vec![ckpt, ann, curve],
        &[],
        summary,
    )
}

fn load_policy(cfg: &RunConfig) -> Result<PolicyBundle> {
    let path = cfg.policy_path();
    require(&path, "run `train` first or set policy.checkpoint")?;
    let bundle = PolicyBundle::from_checkpoint(&Checkpoint::load(&path)?)?;
    let task = cfg.task_kind()?;
    if bundle.task != task {
        return Err(Error::InvalidData(format!(
            "policy `{}` is for {}, config task is {task}",
            path.display(),
            bundle.task
        )));
    }
    Ok(bundle)
}

fn make_estimator(cfg: &RunConfig) -> Result<(Box<dyn DifficultyEstimator>, Vec<PathBuf>)> {
    Ok(match cfg.estimator()? {
        EstimatorKind::Oracle => (
            Box::new(OracleEstimator {
                d_near: cfg.classifier.d_near,
            }),
            vec![],
        ),
        EstimatorKind::Classifier => {
            let path = cfg.classifier_path();
            require(
                &path,
                "run `train-classifier` first or set classifier.checkpoint",
            )?;
            (
                Box::new(ClassifierModel::from_checkpoint(&Checkpoint::load(&path)?)?),
                vec![path],
            )
        }
    })
}

fn report_outputs(
    cfg: &RunConfig,
    reports: &[RunReport],
    dir_name: Option<&str>,
) -> Result<(Vec<PathBuf>, Vec<PathBuf>)> {
    let dir = dir_name.map_or_else(|| cfg.out.clone(), |d| cfg.out.join(d));
    let paths = write_report(reports, &dir)?;
    // results.csv and episodes.csv are seed-determined; timing.csv is not.
    Ok((
        vec![paths[0].clone(), paths[2].clone()],
        vec![paths[1].clone()],
    ))
}

pub fn eval_cmd(cfg: &RunConfig) -> Result<CommandOutput> {
    prepare(cfg)?;
    let bundle = load_policy(cfg)?;
    let map = ConfigMap::new(cfg.preset()?);
    let (estimator, mut inputs) = make_estimator(cfg)?;
    inputs.insert(0, cfg.policy_path());
    let modes: Vec<(String, PolicyMode<'_>)> = cfg
        .eval
        .modes
        .iter()
        .map(|m| {
            let mode = match m.as_str() {
                "min" => PolicyMode::Fixed(map.min_config()),
                "max" => PolicyMode::Fixed(map.max_config()),
                _ => PolicyMode::Adaptive {
                    estimator: estimator.as_ref(),
                    map: &map,
                },
            };
            (m.clone(), mode)
        })
        .collect();
    let seeds = cfg.eval_seeds(cfg.eval.episodes);
    let reports = evaluate(
        &bundle,
        &modes,
        &seeds,
        map.max_config(),
        ExecPolicy::default(),
    )?;
    let (outputs, unhashed) = report_outputs(cfg, &reports, None)?;
    finish(
        "eval",
        cfg,
        &inputs,
        outputs,
        &unhashed,
        summary_table(&reports),
    )
}

/// Valid cells of the ablation grid in enumeration order, plus the rejected
/// ones (RK4 with SDE).
pub fn ablation_grid(cfg: &RunConfig) -> Result<(Vec<InferenceConfig>, Vec<InferenceConfig>)> {
    let a = &cfg.ablate;
    let solvers: Vec<Solver> = a.solvers.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    let modes: Vec<Mode> = a.modes.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    let lasts: Vec<LastStep> = a
        .last_steps
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_>>()?;
    let (mut ok, mut rejected) = (Vec::new(), Vec::new());
    for &steps in &a.steps {
        for &solver in &solvers {
            for &mode in &modes {
                for &last in &lasts {
                    let c = InferenceConfig::new(steps, solver, mode, last);
                    if c.validate().is_ok() {
                        ok.push(c);
                    } else {
                        rejected.push(c);
                    }
                }
            }
        }
    }
    Ok((ok, rejected))
}

pub fn ablate_cmd(cfg: &RunConfig) -> Result<CommandOutput> {
    prepare(cfg)?;
    let bundle = load_policy(cfg)?;
    let (grid, rejected) = ablation_grid(cfg)?;
    if grid.is_empty() {
        return Err(Error::InvalidConfig(
            "ablation grid has no valid configurations".into(),
        ));
    }
    let modes: Vec<(String, PolicyMode<'_>)> = grid
        .iter()
        .map(|c| (c.label(), PolicyMode::Fixed(*c)))
        .collect();
    let seeds = cfg.eval_seeds(cfg.ablate.episodes);
    let max = ConfigMap::new(cfg.preset()?).max_config();
    let reports = evaluate(&bundle, &modes, &seeds, max, ExecPolicy::default())?;

    let path = cfg.out.join("ablation.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "steps",
        "solver",
        "mode",
        "last_step",
        "nfe_per_cycle",
        "episodes",
        "success_rate",
        "mean_nfe",
    ])?;
    for (c, r) in grid.iter().zip(&reports) {
        w.write_record([
            c.steps.to_string(),
            c.solver.to_string(),
            c.mode.to_string(),
            c.last_step.to_string(),
            expected_nfe(c).to_string(),
            r.episodes.len().to_string(),
            format!("{:?}", r.success_rate),
            format!("{:?}", r.mean_nfe),
        ])?;
    }
    w.flush()?;
    let (mut outputs, unhashed) = report_outputs(cfg, &reports, Some("ablation"))?;
    outputs.insert(0, path);
    let mut summary = summary_table(&reports);
    for c in &rejected {
        summary.push_str(&format!(
            "rejected: {} (RK4 has no SDE variant)\n",
            c.label()
        ));
    }
    finish(
        "ablate",
        cfg,
        &[cfg.policy_path()],
        outputs,
        &unhashed,
        summary,
    )
}

/// Prints the resolved configuration, then runs `f`.
pub fn run_logged<W: std::io::Write>(
    name: &str,
    cfg: &RunConfig,
    out: &mut W,
    f: fn(&RunConfig) -> Result<CommandOutput>,
) -> Result<CommandOutput> {
    writeln!(out, "# {name}: resolved configuration\n{}", cfg.to_toml())?;
    let res = f(cfg)?;
    write!(out, "{}", res.summary)?;
    writeln!(out, "manifest: {}", res.manifest.display())?;
    out.flush()?;
    Ok(res)
}
