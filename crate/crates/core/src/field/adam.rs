use crate::error::{Error, Result};
use crate::field::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrSchedule {
    Constant,
    /// Cosine decay to zero after warmup.
    CosineDecay,
}

impl std::str::FromStr for LrSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "constant" => Ok(LrSchedule::Constant),
            "cosine" | "cosine_decay" => Ok(LrSchedule::CosineDecay),
            other => Err(Error::InvalidConfig(format!(
                "unknown lr schedule `{other}`"
            ))),
        }
    }
}

/// Learning rate at optimizer step `step` (0-based) out of `total_steps`:
/// linear warmup, then the configured schedule.
pub fn learning_rate(cfg: &TrainConfig, step: usize, total_steps: usize) -> f64 {
    let base = cfg.learning_rate;
    if step < cfg.warmup_steps {
        return base * (step + 1) as f64 / cfg.warmup_steps as f64;
    }
    match cfg.lr_schedule {
        LrSchedule::Constant => base,
        LrSchedule::CosineDecay => {
            let span = total_steps.saturating_sub(cfg.warmup_steps).max(1) as f64;
            let progress = ((step - cfg.warmup_steps) as f64 / span).min(1.0);
            0.5 * base * (1.0 + (std::f64::consts::PI * progress).cos())
        }
    }
}

/// AdamW with bias correction, decoupled weight decay, optional global-norm
/// gradient clipping and an EMA shadow copy of the parameters.
#[derive(Debug, Clone)]
pub struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    ema: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    total_steps: usize,
}

impl AdamW {
    pub fn new(params: &[f64], total_steps: usize) -> Self {
        AdamW {
            m: vec![0.0; params.len()],
            v: vec![0.0; params.len()],
            ema: params.to_vec(),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            total_steps,
        }
    }

    pub fn ema(&self) -> &[f64] {
        &self.ema
    }

    /// EMA decay at `step`; ramps up so short runs are not dominated by the initialization.
    pub fn ema_decay(ema_rate: f64, step: usize) -> f64 {
        ema_rate.min((1 + step) as f64 / (10 + step) as f64)
    }

    pub fn step(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        cfg: &TrainConfig,
        step_index: usize,
    ) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        let clip = match cfg.grad_clip {
            Some(max_norm) => {
                let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > max_norm {
                    max_norm / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let lr = learning_rate(cfg, step_index, self.total_steps);
        let k = (step_index + 1) as i32;
        let bc1 = 1.0 - self.beta1.powi(k);
        let bc2 = 1.0 - self.beta2.powi(k);
        let decay = 1.0 - lr * cfg.weight_decay;
        for i in 0..params.len() {
            let g = grads[i] * clip;
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] = params[i] * decay - lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        let d = Self::ema_decay(cfg.ema_rate, step_index);
        for (e, p) in self.ema.iter_mut().zip(params.iter()) {
            *e = d * *e + (1.0 - d) * p;
        }
    }
}
