//! Field models: learned networks and closed-form oracle fields.

pub mod adam;
pub mod analytic;
pub mod checkpoint;
pub mod mlp;
pub mod train;

pub use adam::{learning_rate, AdamW, LrSchedule};
pub use analytic::{AnalyticGaussianField, AnalyticModel, GaussianMixtureOracle, OracleDensity};
pub use checkpoint::{Checkpoint, ModelKind, Tensor};
pub use mlp::{FieldArch, MlpField};
pub use train::{
    grid_rms, loss_batch, loss_batch_with, predict_scalar, train_field, Batch, FieldDataset,
    TrainConfig, TrainOutcome,
};

use crate::error::Result;
use crate::interpolant::PredictionTarget;

/// A conditional vector field evaluated at `(x, t, obs)`.
///
/// The returned vector is in the representation given by [`target`](Self::target).
/// One call is one function evaluation for NFE accounting.
pub trait FieldModel: Sync {
    fn action_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn target(&self) -> PredictionTarget;
    fn predict(&self, x: &[f64], t: f64, obs: &[f64]) -> Result<Vec<f64>>;
}

impl<F: FieldModel + ?Sized> FieldModel for &F {
    fn action_dim(&self) -> usize {
        (**self).action_dim()
    }
    fn obs_dim(&self) -> usize {
        (**self).obs_dim()
    }
    fn target(&self) -> PredictionTarget {
        (**self).target()
    }
    fn predict(&self, x: &[f64], t: f64, obs: &[f64]) -> Result<Vec<f64>> {
        (**self).predict(x, t, obs)
    }
}
