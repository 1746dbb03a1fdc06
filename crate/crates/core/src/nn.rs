//! Dense feed-forward network with hand-written backpropagation.
//!
//! Parameters live in one flat vector (per layer: weight matrix
//! `out x in` row-major, then bias) so optimizers and checkpoints can treat
//! them uniformly.

use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// tanh approximation of GELU
    Gelu,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Gelu => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Gelu),
            _ => None,
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Gelu => {
                let u = GELU_C * (x + 0.044715 * x * x * x);
                0.5 * x * (1.0 + u.tanh())
            }
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Gelu => {
                let u = GELU_C * (x + 0.044715 * x * x * x);
                let th = u.tanh();
                0.5 * (1.0 + th)
                    + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "gelu" => Ok(Activation::Gelu),
            other => Err(Error::InvalidConfig(format!(
                "unknown activation `{other}`"
            ))),
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Intermediate values kept from a forward pass for backpropagation.
pub struct ForwardCache {
    /// Input to each layer (`inputs[0]` is the network input).
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Array2<f64>>,
}

impl Mlp {
    /// Uniform `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization.
    pub fn new<R: Rng + ?Sized>(
        dims: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidConfig(format!("bad layer dims {dims:?}")));
        }
        let mut params = Vec::with_capacity(Self::count_params(dims));
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out + fan_out {
                params.push(rng.random_range(-bound..bound));
            }
        }
        Ok(Mlp {
            dims: dims.to_vec(),
            activation,
            params,
        })
    }

    pub fn from_params(dims: &[usize], activation: Activation, params: Vec<f64>) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidConfig(format!("bad layer dims {dims:?}")));
        }
        if params.len() != Self::count_params(dims) {
            return Err(Error::DimensionMismatch {
                expected: Self::count_params(dims),
                got: params.len(),
            });
        }
        Ok(Mlp {
            dims: dims.to_vec(),
            activation,
            params,
        })
    }

    pub fn count_params(dims: &[usize]) -> usize {
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    /// Offsets of layer `l`'s weight and bias inside the flat parameter vector.
    fn offsets(&self, l: usize) -> (usize, usize) {
        let before: usize = self
            .dims
            .windows(2)
            .take(l)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        (before, before + self.dims[l] * self.dims[l + 1])
    }

    fn weight(&self, l: usize) -> ArrayView2<'_, f64> {
        let (w, _) = self.offsets(l);
        let (i, o) = (self.dims[l], self.dims[l + 1]);
        ArrayView2::from_shape((o, i), &self.params[w..w + o * i]).unwrap()
    }

    fn bias(&self, l: usize) -> ArrayView1<'_, f64> {
        let (_, b) = self.offsets(l);
        ArrayView1::from(&self.params[b..b + self.dims[l + 1]])
    }

    fn affine(&self, l: usize, input: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = input.dot(&self.weight(l).t());
        z += &self.bias(l);
        z
    }

    /// Batched forward pass; rows are samples.
    pub fn forward(&self, input: ArrayView2<f64>) -> Array2<f64> {
        let mut a = self.affine(0, &input);
        for l in 1..self.n_layers() {
            a.mapv_inplace(|x| self.activation.apply(x));
            a = self.affine(l, &a.view());
        }
        a
    }

    pub fn forward_cached(&self, input: ArrayView2<f64>) -> (Array2<f64>, ForwardCache) {
        let mut inputs = vec![input.to_owned()];
        let mut pre = Vec::with_capacity(self.n_layers() - 1);
        let mut z = self.affine(0, &input);
        for l in 1..self.n_layers() {
            let a = z.mapv(|x| self.activation.apply(x));
            pre.push(z);
            z = self.affine(l, &a.view());
            inputs.push(a);
        }
        (z, ForwardCache { inputs, pre })
    }

    /// Accumulates `d loss / d params` into `grads` given `d loss / d output`.
    pub fn backward(&self, cache: &ForwardCache, d_out: ArrayView2<f64>, grads: &mut [f64]) {
        assert_eq!(grads.len(), self.params.len());
        let mut delta = d_out.to_owned();
        for l in (0..self.n_layers()).rev() {
            let (w_off, b_off) = self.offsets(l);
            let (i, o) = (self.dims[l], self.dims[l + 1]);
            {
                let mut gw =
                    ArrayViewMut2::from_shape((o, i), &mut grads[w_off..w_off + o * i]).unwrap();
                gw += &delta.t().dot(&cache.inputs[l]);
            }
            {
                let mut gb = ArrayViewMut1::from(&mut grads[b_off..b_off + o]);
                gb += &delta.sum_axis(Axis(0));
            }
            if l > 0 {
                let mut d_prev = delta.dot(&self.weight(l));
                let act = self.activation;
                d_prev.zip_mut_with(&cache.pre[l - 1], |d, &z| *d *= act.derivative(z));
                delta = d_prev;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::par::stream_rng;
    use ndarray::Array2;

    fn loss(net: &Mlp, x: &Array2<f64>, y: &Array2<f64>) -> f64 {
        let out = net.forward(x.view());
        (&out - y).mapv(|d| d * d).sum() * 0.5
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for act in [Activation::Relu, Activation::Gelu] {
            let mut rng = stream_rng(5, 0);
            let mut net = Mlp::new(&[4, 7, 6, 3], act, &mut rng).unwrap();
            let x = Array2::from_shape_fn((5, 4), |(i, j)| ((i * 4 + j) as f64 * 0.37).sin());
            let y = Array2::from_shape_fn((5, 3), |(i, j)| ((i + 2 * j) as f64 * 0.11).cos());
            let (out, cache) = net.forward_cached(x.view());
            let mut g = vec![0.0; net.n_params()];
            net.backward(&cache, (&out - &y).view(), &mut g);
            let h = 1e-5;
            for k in 0..net.n_params() {
                let orig = net.params()[k];
                net.params_mut()[k] = orig + h;
                let lp = loss(&net, &x, &y);
                net.params_mut()[k] = orig - h;
                let lm = loss(&net, &x, &y);
                net.params_mut()[k] = orig;
                let fd = (lp - lm) / (2.0 * h);
                assert!(
                    (fd - g[k]).abs() < 1e-6 * (1.0 + fd.abs()),
                    "{act:?} k={k} fd={fd} g={}",
                    g[k]
                );
            }
        }
    }

    #[test]
    fn cached_and_plain_forward_agree() {
        let mut rng = stream_rng(1, 0);
        let net = Mlp::new(&[3, 5, 2], Activation::Gelu, &mut rng).unwrap();
        let x = Array2::from_shape_fn((4, 3), |(i, j)| i as f64 - j as f64);
        assert_eq!(net.forward(x.view()), net.forward_cached(x.view()).0);
    }

    #[test]
    fn rejects_bad_dims() {
        let mut rng = stream_rng(1, 0);
        assert!(Mlp::new(&[3], Activation::Relu, &mut rng).is_err());
        assert!(Mlp::new(&[3, 0, 2], Activation::Relu, &mut rng).is_err());
        assert!(Mlp::from_params(&[2, 2], Activation::Relu, vec![0.0; 5]).is_err());
    }
}
