//! Feature classifiers trained with class-weighted cross-entropy.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;

use super::{class_weights, AnnotationRecord, DifficultyLabel, N_CLASSES};
use crate::error::{check_dim, Error, Result};
use crate::field::{AdamW, Checkpoint, LrSchedule, ModelKind, Tensor, TrainConfig};
use crate::nn::{Activation, Mlp};
use crate::par::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassifierArch {
    SoftmaxLinear,
    Mlp1Hidden,
}

impl ClassifierArch {
    fn code(self) -> f64 {
        match self {
            ClassifierArch::SoftmaxLinear => 0.0,
            ClassifierArch::Mlp1Hidden => 1.0,
        }
    }
}

impl std::str::FromStr for ClassifierArch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "softmax_linear" | "linear" => Ok(ClassifierArch::SoftmaxLinear),
            "mlp1_hidden" | "mlp" => Ok(ClassifierArch::Mlp1Hidden),
            other => Err(Error::InvalidConfig(format!(
                "unknown classifier architecture `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub arch: ClassifierArch,
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            arch: ClassifierArch::Mlp1Hidden,
            hidden: 64,
            learning_rate: 3e-3,
            batch_size: 64,
            max_epochs: 400,
            patience: 15,
            val_fraction: 0.2,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.hidden == 0 {
            return Err(Error::InvalidConfig(
                "classifier batch_size, max_epochs and hidden must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(
                "classifier learning_rate must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::InvalidConfig(
                "val_fraction must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// A trained classifier with its input standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub arch: ClassifierArch,
    net: Mlp,
    mean: Vec<f64>,
    std: Vec<f64>,
    pub class_weights: Vec<f64>,
}

fn softmax(logits: &[f64]) -> [f64; N_CLASSES] {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; N_CLASSES];
    let mut z = 0.0;
    for (pi, &l) in p.iter_mut().zip(logits) {
        *pi = (l - m).exp();
        z += *pi;
    }
    p.iter_mut().for_each(|v| *v /= z);
    p
}

/// First index of the maximum, so ties resolve in label order.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

impl ClassifierModel {
    pub fn feature_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn standardize(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.feature_dim(), x.len())?;
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }

    pub(crate) fn logits_standardized(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.feature_dim(), z.len())?;
        let out = self
            .net
            .forward(ArrayView2::from_shape((1, z.len()), z).unwrap());
        let logits = out.row(0).to_vec();
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "classifier logits",
                index: 0,
            });
        }
        Ok(logits)
    }

    /// Label and class probabilities for already standardized features.
    pub fn classify_standardized(&self, z: &[f64]) -> Result<(DifficultyLabel, [f64; N_CLASSES])> {
        let logits = self.logits_standardized(z)?;
        let label = DifficultyLabel::from_index(argmax(&logits)).unwrap();
        Ok((label, softmax(&logits)))
    }

    pub fn classify(&self, x: &[f64]) -> Result<(DifficultyLabel, [f64; N_CLASSES])> {
        self.classify_standardized(&self.standardize(x)?)
    }

    pub fn to_checkpoint(&self, seed: u64) -> Checkpoint {
        let dims = self.net.dims().to_vec();
        let params = crate::field::checkpoint::params_to_tensors(&dims, self.net.params());
        Checkpoint {
            kind: ModelKind::Classifier,
            target: None,
            schedule: None,
            activation: self.net.activation(),
            seed,
            action_dim: 0,
            obs_dim: self.feature_dim(),
            time_embed_dim: 0,
            layer_dims: dims,
            class_count: Some(N_CLASSES),
            raw: params.clone(),
            ema: params,
            extra: vec![
                Tensor::vector(&self.mean),
                Tensor::vector(&self.std),
                Tensor::vector(&self.class_weights),
                Tensor::vector(&[self.arch.code()]),
            ],
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != ModelKind::Classifier || ck.class_count != Some(N_CLASSES) {
            return Err(Error::Format(
                "checkpoint does not hold a six-class classifier".into(),
            ));
        }
        let [mean, std, weights, arch] = <&[Tensor; 4]>::try_from(ck.extra.as_slice())
            .map_err(|_| Error::Format("classifier checkpoint needs 4 auxiliary tensors".into()))?;
        let arch = match arch.data.first() {
            Some(&a) if a == 0.0 => ClassifierArch::SoftmaxLinear,
            Some(&a) if a == 1.0 => ClassifierArch::Mlp1Hidden,
            _ => return Err(Error::Format("unknown classifier architecture code".into())),
        };
        let params = crate::field::checkpoint::tensors_to_params(&ck.layer_dims, &ck.ema)?;
        let net = Mlp::from_params(&ck.layer_dims, ck.activation, params)?;
        let (mean, std) = (mean.to_f64(), std.to_f64());
        if mean.len() != ck.obs_dim || std.len() != ck.obs_dim || net.input_dim() != ck.obs_dim {
            return Err(Error::Format(
                "classifier feature dimensions disagree".into(),
            ));
        }
        if net.output_dim() != N_CLASSES || weights.data.len() != N_CLASSES {
            return Err(Error::Format("classifier output dimension is not 6".into()));
        }
        Ok(ClassifierModel {
            arch,
            net,
            mean,
            std,
            class_weights: weights.to_f64(),
        })
    }
}

fn quantize(xs: &mut [f64]) {
    xs.iter_mut().for_each(|v| *v = *v as f32 as f64);
}

/// Per-class shuffled split; each class with at least two records puts
/// `ceil(val_fraction * count)` of them (at most `count - 1`) in validation.
pub fn stratified_split(
    labels: &[DifficultyLabel],
    val_fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = stream_rng(seed, 2);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for l in DifficultyLabel::ALL {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == l).collect();
        idx.shuffle(&mut rng);
        let n_val = if idx.len() >= 2 {
            ((val_fraction * idx.len() as f64).ceil() as usize).min(idx.len() - 1)
        } else {
            0
        };
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Fraction of records whose predicted label matches.
pub fn accuracy(model: &ClassifierModel, records: &[&AnnotationRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::InvalidData(
            "accuracy over an empty record set".into(),
        ));
    }
    let mut hits = 0;
    for r in records {
        if model.classify(&r.features)?.0 == r.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / records.len() as f64)
}

/// Result of [`train_classifier`].
#[derive(Debug, Clone)]
pub struct ClassifierFit {
    pub model: ClassifierModel,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub val_accuracy: Option<f64>,
    pub epochs: usize,
}

/// Weighted cross-entropy and its gradient for standardized rows `z`.
fn weighted_ce(
    net: &Mlp,
    z: &Array2<f64>,
    y: &[usize],
    w: &[f64],
    grads: Option<&mut [f64]>,
) -> f64 {
    let (logits, cache) = net.forward_cached(z.view());
    let b = y.len() as f64;
    let mut d = Array2::<f64>::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (r, &yr) in y.iter().enumerate() {
        let p = softmax(logits.row(r).as_slice().unwrap());
        loss -= w[yr] * p[yr].max(1e-300).ln();
        for k in 0..N_CLASSES {
            d[[r, k]] = w[yr] * (p[k] - if k == yr { 1.0 } else { 0.0 }) / b;
        }
    }
    if let Some(g) = grads {
        net.backward(&cache, d.view(), g);
    }
    loss / b
}

/// Trains on a stratified 80/20 split with inverse-frequency class weights
/// from the training part, keeping the parameters with the lowest
/// validation loss and stopping after `patience` epochs without improvement.
pub fn train_classifier(
    records: &[AnnotationRecord],
    cfg: &ClassifierConfig,
) -> Result<ClassifierFit> {
    cfg.validate()?;
    let labels: Vec<DifficultyLabel> = records.iter().map(|r| r.label).collect();
    let distinct = DifficultyLabel::ALL
        .iter()
        .filter(|l| labels.contains(l))
        .count();
    if distinct < 2 {
        return Err(Error::InvalidData(format!(
            "classifier needs at least 2 distinct labels, found {distinct}"
        )));
    }
    let fdim = records[0].features.len();
    for r in records {
        check_dim(fdim, r.features.len())?;
        if r.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite features in {} episode {}",
                r.env_id, r.episode
            )));
        }
    }
    let (train_idx, val_idx) = stratified_split(&labels, cfg.val_fraction, cfg.seed);

    let n = train_idx.len() as f64;
    let mut mean = vec![0.0; fdim];
    for &i in &train_idx {
        mean.iter_mut()
            .zip(&records[i].features)
            .for_each(|(m, x)| *m += x / n);
    }
    let mut std = vec![0.0; fdim];
    for &i in &train_idx {
        std.iter_mut()
            .zip(records[i].features.iter().zip(&mean))
            .for_each(|(s, (x, m))| *s += (x - m).powi(2) / n);
    }
    std.iter_mut()
        .for_each(|s| *s = if *s > 1e-18 { s.sqrt() } else { 1.0 });
    quantize(&mut mean);
    quantize(&mut std);

    let mut counts = [0usize; N_CLASSES];
    train_idx
        .iter()
        .for_each(|&i| counts[labels[i].index()] += 1);
    let mut weights = class_weights(&counts)?;
    quantize(&mut weights);

    let dims: Vec<usize> = match cfg.arch {
        ClassifierArch::SoftmaxLinear => vec![fdim, N_CLASSES],
        ClassifierArch::Mlp1Hidden => vec![fdim, cfg.hidden, N_CLASSES],
    };
    let mut net = Mlp::new(&dims, Activation::Relu, &mut stream_rng(cfg.seed, 0))?;
    let mut model = ClassifierModel {
        arch: cfg.arch,
        net: net.clone(),
        mean,
        std,
        class_weights: weights,
    };

    let rows = |idx: &[usize]| -> Array2<f64> {
        let mut z = Array2::zeros((idx.len(), fdim));
        for (r, &i) in idx.iter().enumerate() {
            let s = model.standardize(&records[i].features).unwrap();
            z.row_mut(r).assign(&ndarray::ArrayView1::from(&s));
        }
        z
    };
    let z_val = rows(&val_idx);
    let y_val: Vec<usize> = val_idx.iter().map(|&i| labels[i].index()).collect();
    let z_all = rows(&train_idx);

    let opt_cfg = TrainConfig {
        learning_rate: cfg.learning_rate,
        weight_decay: 0.0,
        batch_size: cfg.batch_size,
        epochs: cfg.max_epochs,
        ema_rate: 0.0,
        lr_schedule: LrSchedule::Constant,
        warmup_steps: 0,
        seed: cfg.seed,
        grad_clip: None,
        max_steps: None,
    };
    let steps_per_epoch = train_idx.len().div_ceil(cfg.batch_size);
    let mut opt = AdamW::new(net.params(), cfg.max_epochs * steps_per_epoch);
    let mut rng = stream_rng(cfg.seed, 1);
    let mut order: Vec<usize> = (0..train_idx.len()).collect();
    let mut grads = vec![0.0; net.n_params()];
    let (mut best_loss, mut best_params, mut since_best) =
        (f64::INFINITY, net.params().to_vec(), 0);
    let mut step = 0;
    let mut epochs = 0;
    for _ in 0..cfg.max_epochs {
        epochs += 1;
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let z = z_all.select(ndarray::Axis(0), chunk);
            let y: Vec<usize> = chunk
                .iter()
                .map(|&r| labels[train_idx[r]].index())
                .collect();
            grads.iter_mut().for_each(|g| *g = 0.0);
            weighted_ce(&net, &z, &y, &model.class_weights, Some(&mut grads));
            opt.step(net.params_mut(), &grads, &opt_cfg, step);
            step += 1;
        }
        if !net.all_finite() {
            return Err(Error::Divergence {
                step,
                loss: f64::NAN,
            });
        }
        let monitor = if val_idx.is_empty() {
            let y: Vec<usize> = train_idx.iter().map(|&i| labels[i].index()).collect();
            weighted_ce(&net, &z_all, &y, &model.class_weights, None)
        } else {
            weighted_ce(&net, &z_val, &y_val, &model.class_weights, None)
        };
        if monitor < best_loss {
            best_loss = monitor;
            best_params.copy_from_slice(net.params());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    quantize(&mut best_params);
    model.net = Mlp::from_params(&dims, Activation::Relu, best_params)?;
    let val_refs: Vec<&AnnotationRecord> = val_idx.iter().map(|&i| &records[i]).collect();
    let val_accuracy = if val_refs.is_empty() {
        None
    } else {
        Some(accuracy(&model, &val_refs)?)
    };
    Ok(ClassifierFit {
        model,
        train_idx,
        val_idx,
        val_accuracy,
        epochs,
    })
}
