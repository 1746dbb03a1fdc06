use ndarray::{s, Array2, ArrayView2};
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::field::FieldModel;
use crate::interpolant::PredictionTarget;
use crate::nn::{Activation, ForwardCache, Mlp};

/// Network shape for an [`MlpField`].
#[derive(Debug, Clone, PartialEq)]
pub struct FieldArch {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Even; half sine and half cosine features.
    pub time_embed_dim: usize,
}

impl Default for FieldArch {
    fn default() -> Self {
        FieldArch {
            hidden: vec![128, 128],
            activation: Activation::Gelu,
            time_embed_dim: 32,
        }
    }
}

/// Sinusoidal embedding with frequencies geometric from 1 to 1000.
pub fn time_embedding(t: f64, dim: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), dim);
    let half = dim / 2;
    for k in 0..half {
        let freq = if half > 1 {
            1000f64.powf(k as f64 / (half - 1) as f64)
        } else {
            1.0
        };
        let (s, c) = (freq * t).sin_cos();
        out[k] = s;
        out[half + k] = c;
    }
}

/// Conditional field network. Input is `[x, embed(t), obs]`, output has the
/// action dimension and is interpreted according to `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpField {
    net: Mlp,
    action_dim: usize,
    obs_dim: usize,
    time_embed_dim: usize,
    target: PredictionTarget,
}

impl MlpField {
    pub fn new<R: Rng + ?Sized>(
        action_dim: usize,
        obs_dim: usize,
        target: PredictionTarget,
        arch: &FieldArch,
        rng: &mut R,
    ) -> Result<Self> {
        if !arch.time_embed_dim.is_multiple_of(2) {
            return Err(Error::InvalidConfig("time_embed_dim must be even".into()));
        }
        let dims = Self::layer_dims(action_dim, obs_dim, arch);
        let net = Mlp::new(&dims, arch.activation, rng)?;
        Ok(MlpField {
            net,
            action_dim,
            obs_dim,
            time_embed_dim: arch.time_embed_dim,
            target,
        })
    }

    pub fn from_net(
        net: Mlp,
        action_dim: usize,
        obs_dim: usize,
        time_embed_dim: usize,
        target: PredictionTarget,
    ) -> Result<Self> {
        check_dim(action_dim + time_embed_dim + obs_dim, net.input_dim())?;
        check_dim(action_dim, net.output_dim())?;
        Ok(MlpField {
            net,
            action_dim,
            obs_dim,
            time_embed_dim,
            target,
        })
    }

    pub fn layer_dims(action_dim: usize, obs_dim: usize, arch: &FieldArch) -> Vec<usize> {
        let mut dims = vec![action_dim + arch.time_embed_dim + obs_dim];
        dims.extend(&arch.hidden);
        dims.push(action_dim);
        dims
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn time_embed_dim(&self) -> usize {
        self.time_embed_dim
    }

    pub fn n_params(&self) -> usize {
        self.net.n_params()
    }

    /// Assembles the network input matrix for a batch.
    pub fn assemble_input(
        &self,
        x: ArrayView2<f64>,
        t: &[f64],
        obs: ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        let n = x.nrows();
        check_dim(self.action_dim, x.ncols())?;
        check_dim(n, t.len())?;
        check_dim(n, obs.nrows())?;
        check_dim(self.obs_dim, obs.ncols())?;
        let (a, e) = (self.action_dim, self.time_embed_dim);
        let mut input = Array2::zeros((n, a + e + self.obs_dim));
        input.slice_mut(s![.., ..a]).assign(&x);
        input.slice_mut(s![.., a + e..]).assign(&obs);
        for (i, &ti) in t.iter().enumerate() {
            let mut row = input.row_mut(i);
            time_embedding(ti, e, row.as_slice_mut().unwrap()[a..a + e].as_mut());
        }
        Ok(input)
    }

    pub fn predict_batch(
        &self,
        x: ArrayView2<f64>,
        t: &[f64],
        obs: ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        let input = self.assemble_input(x, t, obs)?;
        Ok(self.net.forward(input.view()))
    }

    pub(crate) fn forward_cached(&self, input: ArrayView2<f64>) -> (Array2<f64>, ForwardCache) {
        self.net.forward_cached(input)
    }
}

impl FieldModel for MlpField {
    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    fn target(&self) -> PredictionTarget {
        self.target
    }

    fn predict(&self, x: &[f64], t: f64, obs: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.action_dim, x.len())?;
        check_dim(self.obs_dim, obs.len())?;
        let (a, e) = (self.action_dim, self.time_embed_dim);
        let mut input = vec![0.0; a + e + self.obs_dim];
        input[..a].copy_from_slice(x);
        time_embedding(t, e, &mut input[a..a + e]);
        input[a + e..].copy_from_slice(obs);
        let input = ArrayView2::from_shape((1, input.len()), &input).unwrap();
        Ok(self.net.forward(input).into_raw_vec_and_offset().0)
    }
}
