//! Regression losses for the three prediction targets and the training loop.

use ndarray::{s, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::field::adam::{AdamW, LrSchedule};
use crate::field::mlp::{FieldArch, MlpField};
use crate::field::FieldModel;
use crate::interpolant::{InterpolantSchedule, PredictionTarget};
use crate::par::{map_range, stream_rng, ExecPolicy};

/// Training times are drawn from `U[T_TRAIN_LO, T_TRAIN_HI]`.
pub const T_TRAIN_LO: f64 = 1e-3;
pub const T_TRAIN_HI: f64 = 1.0 - 1e-3;

/// Rows per gradient work item. Fixed so the floating-point reduction order
/// does not depend on the thread count.
const GRAD_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub ema_rate: f64,
    pub lr_schedule: LrSchedule,
    pub warmup_steps: usize,
    pub seed: u64,
    /// Global gradient-norm clip.
    pub grad_clip: Option<f64>,
    /// Caps the optimizer steps regardless of `epochs`.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            weight_decay: 1e-6,
            batch_size: 256,
            epochs: 5000,
            ema_rate: 0.9999,
            lr_schedule: LrSchedule::CosineDecay,
            warmup_steps: 500,
            seed: 0,
            grad_clip: Some(1.0),
            max_steps: Some(20_000),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.ema_rate) {
            return Err(Error::InvalidConfig(format!(
                "ema_rate must be in [0, 1), got {}",
                self.ema_rate
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig(
                "batch_size and epochs must be at least 1".into(),
            ));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig(
                "weight_decay must be non-negative".into(),
            ));
        }
        if self.max_steps == Some(0) {
            return Err(Error::InvalidConfig("max_steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, dataset_len: usize) -> usize {
        dataset_len.div_ceil(self.batch_size)
    }

    pub fn total_steps(&self, dataset_len: usize) -> usize {
        let full = self.epochs * self.steps_per_epoch(dataset_len);
        self.max_steps.map_or(full, |m| m.min(full))
    }
}

/// Paired data samples and observations. Rows are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDataset {
    pub actions: Array2<f64>,
    pub obs: Array2<f64>,
}

impl FieldDataset {
    pub fn new(actions: Array2<f64>, obs: Array2<f64>) -> Result<Self> {
        check_dim(actions.nrows(), obs.nrows())?;
        if actions.nrows() == 0 {
            return Err(Error::InvalidData("empty dataset".into()));
        }
        if actions.iter().chain(obs.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData(
                "dataset contains non-finite values".into(),
            ));
        }
        Ok(FieldDataset { actions, obs })
    }

    /// Dataset without observations.
    pub fn unconditional(actions: Array2<f64>) -> Result<Self> {
        let n = actions.nrows();
        Self::new(actions, Array2::zeros((n, 0)))
    }

    pub fn len(&self) -> usize {
        self.actions.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn action_dim(&self) -> usize {
        self.actions.ncols()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs.ncols()
    }
}

/// One minibatch: data, noise, times and observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x_star: Array2<f64>,
    pub eps: Array2<f64>,
    pub t: Vec<f64>,
    pub obs: Array2<f64>,
}

impl Batch {
    /// Draws fresh noise and times for the dataset rows `rows`.
    pub fn draw<R: Rng + ?Sized>(data: &FieldDataset, rows: &[usize], rng: &mut R) -> Self {
        let n = rows.len();
        let mut x_star = Array2::zeros((n, data.action_dim()));
        let mut obs = Array2::zeros((n, data.obs_dim()));
        for (i, &r) in rows.iter().enumerate() {
            x_star.row_mut(i).assign(&data.actions.row(r));
            obs.row_mut(i).assign(&data.obs.row(r));
        }
        let eps =
            Array2::from_shape_simple_fn((n, data.action_dim()), || rng.sample(StandardNormal));
        let t = (0..n)
            .map(|_| rng.random_range(T_TRAIN_LO..T_TRAIN_HI))
            .collect();
        Batch {
            x_star,
            eps,
            t,
            obs,
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Interpolant points and regression targets for a range of batch rows.
fn interpolate_rows(
    batch: &Batch,
    lo: usize,
    hi: usize,
    sched: &InterpolantSchedule,
    target: PredictionTarget,
) -> (Array2<f64>, Array2<f64>) {
    let d = batch.x_star.ncols();
    let mut it = Array2::zeros((hi - lo, d));
    let mut y = Array2::zeros((hi - lo, d));
    for r in lo..hi {
        let c = sched.eval_raw(batch.t[r]);
        for j in 0..d {
            let (x, e) = (batch.x_star[[r, j]], batch.eps[[r, j]]);
            it[[r - lo, j]] = c.alpha * x + c.sigma * e;
            y[[r - lo, j]] = match target {
                PredictionTarget::Velocity => c.dalpha * x + c.dsigma * e,
                PredictionTarget::Score => -e / c.sigma,
                PredictionTarget::Noise => e,
            };
        }
    }
    (it, y)
}

/// Mean squared residual against the target dictated by `model.target()`, with
/// its gradient for every network parameter.
pub fn loss_batch(
    model: &MlpField,
    batch: &Batch,
    sched: &InterpolantSchedule,
) -> Result<(f64, Vec<f64>)> {
    loss_batch_with(model, batch, sched, ExecPolicy::default())
}

pub fn loss_batch_with(
    model: &MlpField,
    batch: &Batch,
    sched: &InterpolantSchedule,
    exec: ExecPolicy,
) -> Result<(f64, Vec<f64>)> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::InvalidData("empty batch".into()));
    }
    check_dim(model.action_dim(), batch.x_star.ncols())?;
    check_dim(model.action_dim(), batch.eps.ncols())?;
    if batch.t.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidData("batch times must lie in [0, 1]".into()));
    }
    let norm = 1.0 / (n * model.action_dim()) as f64;
    let n_chunks = n.div_ceil(GRAD_CHUNK);
    let parts = map_range(exec, n_chunks, |c| -> Result<(f64, Vec<f64>)> {
        let (lo, hi) = (c * GRAD_CHUNK, ((c + 1) * GRAD_CHUNK).min(n));
        let (it, y) = interpolate_rows(batch, lo, hi, sched, model.target());
        let input =
            model.assemble_input(it.view(), &batch.t[lo..hi], batch.obs.slice(s![lo..hi, ..]))?;
        let (out, cache) = model.forward_cached(input.view());
        let resid = &out - &y;
        let loss = resid.iter().map(|r| r * r).sum::<f64>() * norm;
        let d_out = resid.mapv(|r| 2.0 * r * norm);
        let mut grads = vec![0.0; model.n_params()];
        model.net().backward(&cache, d_out.view(), &mut grads);
        Ok((loss, grads))
    });
    let mut loss = 0.0;
    let mut grads = vec![0.0; model.n_params()];
    for part in parts {
        let (l, g) = part?;
        loss += l;
        for (a, b) in grads.iter_mut().zip(g) {
            *a += b;
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            context: "loss",
            index: 0,
        });
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// EMA weights.
    pub model: MlpField,
    /// Final raw weights.
    pub raw: MlpField,
    /// Mean step loss per epoch.
    pub loss_curve: Vec<f64>,
    pub steps: usize,
}

/// Trains a field by minimizing the target-specific regression loss;
/// noise and times are drawn fresh every step.
pub fn train_field(
    data: &FieldDataset,
    sched: &InterpolantSchedule,
    target: PredictionTarget,
    arch: &FieldArch,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_field_with(data, sched, target, arch, cfg, ExecPolicy::default())
}

pub fn train_field_with(
    data: &FieldDataset,
    sched: &InterpolantSchedule,
    target: PredictionTarget,
    arch: &FieldArch,
    cfg: &TrainConfig,
    exec: ExecPolicy,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidData("empty dataset".into()));
    }
    let mut init_rng = stream_rng(cfg.seed, 0);
    let mut rng = stream_rng(cfg.seed, 1);
    let mut model = MlpField::new(
        data.action_dim(),
        data.obs_dim(),
        target,
        arch,
        &mut init_rng,
    )?;
    let total = cfg.total_steps(data.len());
    let per_epoch = cfg.steps_per_epoch(data.len());
    let mut opt = AdamW::new(model.net().params(), total);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::new();
    let mut step = 0;
    'epochs: while step < total {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_steps = 0;
        for b in 0..per_epoch {
            if step >= total {
                break;
            }
            let rows = &order[b * cfg.batch_size..((b + 1) * cfg.batch_size).min(data.len())];
            let batch = Batch::draw(data, rows, &mut rng);
            let (loss, grads) = match loss_batch_with(&model, &batch, sched, exec) {
                Ok(v) => v,
                Err(Error::NonFinite { .. }) => {
                    return Err(Error::Divergence {
                        step,
                        loss: f64::NAN,
                    })
                }
                Err(e) => return Err(e),
            };
            opt.step(model.net_mut().params_mut(), &grads, cfg, step);
            if !model.net().all_finite() {
                return Err(Error::Divergence { step, loss });
            }
            epoch_loss += loss;
            epoch_steps += 1;
            step += 1;
        }
        if epoch_steps == 0 {
            break 'epochs;
        }
        curve.push(epoch_loss / epoch_steps as f64);
    }
    let mut ema = model.clone();
    ema.net_mut().params_mut().copy_from_slice(opt.ema());
    Ok(TrainOutcome {
        model: ema,
        raw: model,
        loss_curve: curve,
        steps: step,
    })
}

/// Root-mean-square difference between two fields' predictions over a grid.
pub fn grid_rms<F>(points: &[(f64, f64)], mut f: F) -> Result<f64>
where
    F: FnMut(f64, f64) -> Result<f64>,
{
    let mut acc = 0.0;
    for &(x, t) in points {
        let d = f(x, t)?;
        acc += d * d;
    }
    Ok((acc / points.len() as f64).sqrt())
}

/// Predicts on a single unconditional 1-D sample.
pub fn predict_scalar(model: &MlpField, x: f64, t: f64) -> Result<f64> {
    let out = model.predict_batch(
        ArrayView2::from_shape((1, 1), &[x]).unwrap(),
        &[t],
        ArrayView2::from_shape((1, 0), &[]).unwrap(),
    )?;
    Ok(out[[0, 0]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    fn tiny_arch() -> FieldArch {
        FieldArch {
            hidden: vec![6],
            activation: Activation::Gelu,
            time_embed_dim: 4,
        }
    }

    #[test]
    fn zero_residual_gives_zero_loss_and_grads() {
        // Zeroing the last layer makes the output identically 0; noise target with eps = 0 matches.
        let mut rng = stream_rng(0, 0);
        let mut model =
            MlpField::new(2, 1, PredictionTarget::Noise, &tiny_arch(), &mut rng).unwrap();
        let n = model.n_params();
        let last = 6 * 2 + 2;
        for p in &mut model.net_mut().params_mut()[n - last..] {
            *p = 0.0;
        }
        let batch = Batch {
            x_star: Array2::from_elem((3, 2), 0.5),
            eps: Array2::zeros((3, 2)),
            t: vec![0.2, 0.5, 0.8],
            obs: Array2::zeros((3, 1)),
        };
        let (loss, grads) = loss_batch(&model, &batch, &InterpolantSchedule::linear()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn single_sample_velocity_loss() {
        let mut rng = stream_rng(0, 0);
        let mut model =
            MlpField::new(1, 0, PredictionTarget::Velocity, &tiny_arch(), &mut rng).unwrap();
        let n = model.n_params();
        let last = 6 + 1;
        for p in &mut model.net_mut().params_mut()[n - last..] {
            *p = 0.0;
        }
        let batch = Batch {
            x_star: Array2::from_elem((1, 1), 1.0),
            eps: Array2::zeros((1, 1)),
            t: vec![0.5],
            obs: Array2::zeros((1, 0)),
        };
        let (loss, _) = loss_batch(&model, &batch, &InterpolantSchedule::linear()).unwrap();
        assert!((loss - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sequential_and_parallel_gradients_agree() {
        let mut rng = stream_rng(3, 0);
        let model =
            MlpField::new(2, 3, PredictionTarget::Velocity, &tiny_arch(), &mut rng).unwrap();
        let data = FieldDataset::new(
            Array2::from_shape_fn((300, 2), |(i, j)| ((i * 2 + j) as f64).sin()),
            Array2::from_shape_fn((300, 3), |(i, j)| ((i + j) as f64 * 0.1).cos()),
        )
        .unwrap();
        let rows: Vec<usize> = (0..300).collect();
        let batch = Batch::draw(&data, &rows, &mut rng);
        let sched = InterpolantSchedule::gvp();
        let a = loss_batch_with(&model, &batch, &sched, ExecPolicy::Sequential).unwrap();
        let b = loss_batch_with(&model, &batch, &sched, ExecPolicy::Parallel).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn rejects_invalid_config() {
        assert!(TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            ema_rate: 1.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn step_budget() {
        let c = TrainConfig {
            batch_size: 100,
            epochs: 10,
            max_steps: Some(25),
            ..TrainConfig::default()
        };
        assert_eq!(c.steps_per_epoch(250), 3);
        assert_eq!(c.total_steps(250), 25);
        assert_eq!(
            TrainConfig {
                max_steps: None,
                ..c
            }
            .total_steps(250),
            30
        );
    }
}
