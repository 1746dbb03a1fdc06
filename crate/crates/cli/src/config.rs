//! Run configuration: a TOML file with one section per pipeline stage.
//! Unknown keys are rejected; omitted keys take the desk-scale defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sip_core::difficulty::{ClassifierArch, ClassifierConfig, Preset, D_NEAR};
use sip_core::envs::TaskKind;
use sip_core::field::{FieldArch, LrSchedule, TrainConfig};
use sip_core::interpolant::{InterpolantSchedule, PredictionTarget, ScheduleKind};
use sip_core::nn::Activation;
use sip_core::sampler::{LastStep, Mode, Solver};
use sip_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub task: String,
    pub seed: u64,
    pub out: PathBuf,
    pub demos: DemosSection,
    pub policy: PolicySection,
    pub classifier: ClassifierSection,
    pub eval: EvalSection,
    pub ablate: AblateSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemosSection {
    pub count: usize,
    /// Existing demonstration file; defaults to `<out>/demos.sipd`.
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySection {
    pub schedule: String,
    pub target: String,
    pub hidden: Vec<usize>,
    pub activation: String,
    pub time_embed_dim: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub max_steps: usize,
    pub warmup_steps: usize,
    pub ema_rate: f64,
    pub lr_schedule: String,
    pub grad_clip: f64,
    /// Existing policy checkpoint; defaults to `<out>/policy.ckpt`.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierSection {
    pub arch: String,
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub d_near: f64,
    /// Annotate every `stride`-th demonstration state.
    pub stride: usize,
    /// Training-set sizes for the accuracy curve; the largest is saved.
    pub sizes: Vec<usize>,
    /// Demonstrations, from a disjoint seed, used as the held-out set.
    pub heldout_demos: usize,
    /// Existing classifier checkpoint; defaults to `<out>/classifier.ckpt`.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub episodes: usize,
    pub modes: Vec<String>,
    pub preset: String,
    /// `oracle` or `classifier`.
    pub estimator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateSection {
    pub episodes: usize,
    pub steps: Vec<usize>,
    pub solvers: Vec<String>,
    pub modes: Vec<String>,
    pub last_steps: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: TaskKind::PushBlock.name().into(),
            seed: 0,
            out: PathBuf::from("runs/default"),
            demos: DemosSection::default(),
            policy: PolicySection::default(),
            classifier: ClassifierSection::default(),
            eval: EvalSection::default(),
            ablate: AblateSection::default(),
        }
    }
}

impl Default for DemosSection {
    fn default() -> Self {
        DemosSection {
            count: 200,
            input: None,
        }
    }
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection {
            schedule: "linear".into(),
            target: "velocity".into(),
            hidden: vec![128, 128],
            activation: "gelu".into(),
            time_embed_dim: 32,
            learning_rate: 1e-3,
            weight_decay: 1e-6,
            batch_size: 256,
            epochs: 100_000,
            max_steps: 10_000,
            warmup_steps: 100,
            ema_rate: 0.999,
            lr_schedule: "cosine".into(),
            grad_clip: 1.0,
            checkpoint: None,
        }
    }
}

impl Default for ClassifierSection {
    fn default() -> Self {
        let c = ClassifierConfig::default();
        ClassifierSection {
            arch: "mlp1_hidden".into(),
            hidden: c.hidden,
            learning_rate: c.learning_rate,
            batch_size: c.batch_size,
            max_epochs: c.max_epochs,
            patience: c.patience,
            val_fraction: c.val_fraction,
            d_near: D_NEAR,
            stride: 1,
            sizes: vec![100, 200, 300, 500],
            heldout_demos: 100,
            checkpoint: None,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            episodes: 100,
            modes: vec!["min".into(), "max".into(), "adaptive".into()],
            preset: "six".into(),
            estimator: "oracle".into(),
        }
    }
}

impl Default for AblateSection {
    fn default() -> Self {
        AblateSection {
            episodes: 20,
            steps: vec![1, 5, 10, 25, 50, 100],
            solvers: vec!["euler".into(), "heun".into()],
            modes: vec!["ode".into(), "sde".into()],
            last_steps: vec!["none".into(), "euler".into(), "tweedie".into()],
        }
    }
}

/// Evaluation mode names accepted in `[eval] modes` and `--mode`.
pub const EVAL_MODES: [&str; 3] = ["min", "max", "adaptive"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Oracle,
    Classifier,
}

fn parse_list<T: std::str::FromStr<Err = Error>>(xs: &[String]) -> Result<Vec<T>> {
    xs.iter().map(|s| s.parse()).collect()
}

fn check_exists(what: &str, p: &Option<PathBuf>) -> Result<()> {
    match p {
        Some(p) if !p.exists() => Err(Error::InvalidConfig(format!(
            "{what} `{}` does not exist",
            p.display()
        ))),
        _ => Ok(()),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read config `{}`: {e}", path.display()))
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every enum-valued key, numeric range and referenced file.
    pub fn validate(&self) -> Result<()> {
        self.task_kind()?;
        self.schedule()?;
        self.target()?;
        self.field_arch()?;
        let t = self.train_config()?;
        t.validate()?;
        self.classifier_config()?.validate()?;
        self.preset()?;
        self.estimator()?;
        if self.demos.count == 0 {
            return Err(Error::InvalidConfig("demos.count must be positive".into()));
        }
        if self.eval.episodes == 0 || self.ablate.episodes == 0 {
            return Err(Error::InvalidConfig(
                "eval.episodes and ablate.episodes must be positive".into(),
            ));
        }
        for m in &self.eval.modes {
            if !EVAL_MODES.contains(&m.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "unknown eval mode `{m}` (expected min, max or adaptive)"
                )));
            }
        }
        if self.eval.modes.is_empty() {
            return Err(Error::InvalidConfig("eval.modes must not be empty".into()));
        }
        let c = &self.classifier;
        if c.sizes.is_empty() || c.sizes.contains(&0) || c.stride == 0 || c.heldout_demos == 0 {
            return Err(Error::InvalidConfig(
                "classifier sizes, stride and heldout_demos must be positive".into(),
            ));
        }
        if !(c.d_near > 0.0) {
            return Err(Error::InvalidConfig(
                "classifier.d_near must be positive".into(),
            ));
        }
        parse_list::<Solver>(&self.ablate.solvers)?;
        parse_list::<Mode>(&self.ablate.modes)?;
        parse_list::<LastStep>(&self.ablate.last_steps)?;
        if self.ablate.steps.contains(&0) {
            return Err(Error::InvalidConfig(
                "ablate.steps entries must be positive".into(),
            ));
        }
        check_exists("demos.input", &self.demos.input)?;
        check_exists("policy.checkpoint", &self.policy.checkpoint)?;
        check_exists("classifier.checkpoint", &self.classifier.checkpoint)?;
        Ok(())
    }

    pub fn task_kind(&self) -> Result<TaskKind> {
        self.task.parse()
    }

    pub fn schedule(&self) -> Result<InterpolantSchedule> {
        Ok(InterpolantSchedule::new(
            self.policy.schedule.parse::<ScheduleKind>()?,
        ))
    }

    pub fn target(&self) -> Result<PredictionTarget> {
        self.policy.target.parse()
    }

    pub fn field_arch(&self) -> Result<FieldArch> {
        let p = &self.policy;
        if p.hidden.is_empty() || p.hidden.contains(&0) {
            return Err(Error::InvalidConfig(
                "policy.hidden needs positive layer widths".into(),
            ));
        }
        Ok(FieldArch {
            hidden: p.hidden.clone(),
            activation: p.activation.parse::<Activation>()?,
            time_embed_dim: p.time_embed_dim,
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let p = &self.policy;
        Ok(TrainConfig {
            learning_rate: p.learning_rate,
            weight_decay: p.weight_decay,
            batch_size: p.batch_size,
            epochs: p.epochs,
            ema_rate: p.ema_rate,
            lr_schedule: p.lr_schedule.parse::<LrSchedule>()?,
            warmup_steps: p.warmup_steps,
            seed: self.seed,
            grad_clip: (p.grad_clip > 0.0).then_some(p.grad_clip),
            max_steps: Some(p.max_steps),
        })
    }

    pub fn classifier_config(&self) -> Result<ClassifierConfig> {
        let c = &self.classifier;
        Ok(ClassifierConfig {
            arch: c.arch.parse::<ClassifierArch>()?,
            hidden: c.hidden,
            learning_rate: c.learning_rate,
            batch_size: c.batch_size,
            max_epochs: c.max_epochs,
            patience: c.patience,
            val_fraction: c.val_fraction,
            seed: self.seed,
        })
    }

    pub fn preset(&self) -> Result<Preset> {
        self.eval.preset.parse()
    }

    pub fn estimator(&self) -> Result<EstimatorKind> {
        match self.eval.estimator.to_ascii_lowercase().as_str() {
            "oracle" => Ok(EstimatorKind::Oracle),
            "classifier" => Ok(EstimatorKind::Classifier),
            other => Err(Error::InvalidConfig(format!(
                "unknown estimator `{other}` (expected oracle or classifier)"
            ))),
        }
    }

    pub fn demos_path(&self) -> PathBuf {
        self.demos
            .input
            .clone()
            .unwrap_or_else(|| self.out.join("demos.sipd"))
    }

    pub fn policy_path(&self) -> PathBuf {
        self.policy
            .checkpoint
            .clone()
            .unwrap_or_else(|| self.out.join("policy.ckpt"))
    }

    pub fn classifier_path(&self) -> PathBuf {
        self.classifier
            .checkpoint
            .clone()
            .unwrap_or_else(|| self.out.join("classifier.ckpt"))
    }

    /// Episode seeds for evaluation, disjoint from demonstration seeds.
    pub fn eval_seeds(&self, n: usize) -> Vec<u64> {
        let base = EVAL_SEED_BASE.wrapping_add(self.seed.wrapping_mul(1 << 20));
        (0..n as u64).map(|i| base.wrapping_add(i)).collect()
    }

    /// Seed for the held-out classifier demonstrations.
    pub fn heldout_seed(&self) -> u64 {
        self.seed ^ HELDOUT_SEED_MASK
    }
}

const EVAL_SEED_BASE: u64 = 1 << 40;
const HELDOUT_SEED_MASK: u64 = 0x5EED_0000_0000;
