//! Versioned binary container for network checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic            4 bytes  "SIPK"
//! format_version   u32
//! model_kind       u8       0 = field, 1 = classifier
//! target           u8       0 velocity, 1 score, 2 noise, 255 none
//! schedule         u8       0 linear, 1 vp, 2 gvp, 255 none
//! activation       u8       0 relu, 1 gelu
//! beta_min         f64
//! beta_max         f64
//! seed             u64
//! action_dim       u32
//! obs_dim          u32
//! time_embed_dim   u32
//! n_dims           u32, then n_dims x u32 layer_dims
//! class_count      u32      classifier only
//! 3 tensor groups  raw, ema, extra; each: u32 count, then per tensor
//!                  u32 rank, rank x u32 shape, f32 data in row-major order
//! ```
//!
//! Parameter tensors come in layer order: weight `(out, in)` then bias `(out)`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::mlp::MlpField;
use crate::field::FieldModel;
use crate::interpolant::{InterpolantSchedule, PredictionTarget, ScheduleKind};
use crate::nn::{Activation, Mlp};

const MAGIC: &[u8; 4] = b"SIPK";
pub const FORMAT_VERSION: u32 = 1;
const NONE_CODE: u8 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Field,
    Classifier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Format(format!(
                "tensor shape {shape:?} does not match {} values",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn vector(values: &[f64]) -> Self {
        Tensor {
            shape: vec![values.len()],
            data: values.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub target: Option<PredictionTarget>,
    pub schedule: Option<InterpolantSchedule>,
    pub activation: Activation,
    pub seed: u64,
    pub action_dim: usize,
    pub obs_dim: usize,
    pub time_embed_dim: usize,
    pub layer_dims: Vec<usize>,
    pub class_count: Option<usize>,
    pub raw: Vec<Tensor>,
    pub ema: Vec<Tensor>,
    /// Auxiliary tensors (normalization statistics and the like).
    pub extra: Vec<Tensor>,
}

/// Splits a flat parameter vector into per-layer weight and bias tensors.
pub fn params_to_tensors(dims: &[usize], params: &[f64]) -> Vec<Tensor> {
    let mut out = Vec::new();
    let mut off = 0;
    for w in dims.windows(2) {
        let (i, o) = (w[0], w[1]);
        out.push(
            Tensor::new(
                vec![o, i],
                params[off..off + o * i].iter().map(|&v| v as f32).collect(),
            )
            .unwrap(),
        );
        off += o * i;
        out.push(
            Tensor::new(
                vec![o],
                params[off..off + o].iter().map(|&v| v as f32).collect(),
            )
            .unwrap(),
        );
        off += o;
    }
    out
}

pub fn tensors_to_params(dims: &[usize], tensors: &[Tensor]) -> Result<Vec<f64>> {
    if tensors.len() != 2 * (dims.len() - 1) {
        return Err(Error::Format(format!(
            "expected {} parameter tensors, found {}",
            2 * (dims.len() - 1),
            tensors.len()
        )));
    }
    let mut params = Vec::with_capacity(Mlp::count_params(dims));
    for (l, w) in dims.windows(2).enumerate() {
        let (i, o) = (w[0], w[1]);
        let (wt, bt) = (&tensors[2 * l], &tensors[2 * l + 1]);
        if wt.shape != [o, i] || bt.shape != [o] {
            return Err(Error::Format(format!(
                "layer {l} tensor shapes {:?}/{:?} do not match dims",
                wt.shape, bt.shape
            )));
        }
        params.extend(wt.to_f64());
        params.extend(bt.to_f64());
    }
    Ok(params)
}

impl Checkpoint {
    /// Checkpoint for a trained field with both EMA and raw weights.
    pub fn from_field(
        ema: &MlpField,
        raw: &MlpField,
        sched: &InterpolantSchedule,
        seed: u64,
        extra: Vec<Tensor>,
    ) -> Self {
        let dims = ema.net().dims().to_vec();
        Checkpoint {
            kind: ModelKind::Field,
            target: Some(ema.target()),
            schedule: Some(*sched),
            activation: ema.net().activation(),
            seed,
            action_dim: ema.action_dim(),
            obs_dim: ema.obs_dim(),
            time_embed_dim: ema.time_embed_dim(),
            raw: params_to_tensors(&dims, raw.net().params()),
            ema: params_to_tensors(&dims, ema.net().params()),
            layer_dims: dims,
            class_count: None,
            extra,
        }
    }

    fn build_field(&self, tensors: &[Tensor]) -> Result<MlpField> {
        if self.kind != ModelKind::Field {
            return Err(Error::Format(
                "checkpoint does not hold a field model".into(),
            ));
        }
        let target = self
            .target
            .ok_or_else(|| Error::Format("field checkpoint without target".into()))?;
        let params = tensors_to_params(&self.layer_dims, tensors)?;
        let net = Mlp::from_params(&self.layer_dims, self.activation, params)?;
        MlpField::from_net(
            net,
            self.action_dim,
            self.obs_dim,
            self.time_embed_dim,
            target,
        )
    }

    pub fn ema_field(&self) -> Result<MlpField> {
        self.build_field(&self.ema)
    }

    pub fn raw_field(&self) -> Result<MlpField> {
        self.build_field(&self.raw)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.push(match self.kind {
            ModelKind::Field => 0,
            ModelKind::Classifier => 1,
        });
        buf.push(self.target.map_or(NONE_CODE, |t| t.code()));
        buf.push(self.schedule.map_or(NONE_CODE, |s| s.kind.code()));
        buf.push(self.activation.code());
        let (bmin, bmax) = self
            .schedule
            .map_or((0.0, 0.0), |s| (s.beta_min, s.beta_max));
        buf.extend_from_slice(&bmin.to_le_bytes());
        buf.extend_from_slice(&bmax.to_le_bytes());
        buf.extend_from_slice(&self.seed.to_le_bytes());
        for v in [
            self.action_dim,
            self.obs_dim,
            self.time_embed_dim,
            self.layer_dims.len(),
        ] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for &d in &self.layer_dims {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        if self.kind == ModelKind::Classifier {
            let c = self
                .class_count
                .ok_or_else(|| Error::Format("classifier checkpoint needs a class count".into()))?;
            buf.extend_from_slice(&(c as u32).to_le_bytes());
        }
        for group in [&self.raw, &self.ema, &self.extra] {
            buf.extend_from_slice(&(group.len() as u32).to_le_bytes());
            for t in group {
                buf.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
                for &s in &t.shape {
                    buf.extend_from_slice(&(s as u32).to_le_bytes());
                }
                for &v in &t.data {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut c = Cursor {
            bytes: &bytes,
            pos: 0,
        };
        if c.take(4)? != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = c.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let kind = match c.u8()? {
            0 => ModelKind::Field,
            1 => ModelKind::Classifier,
            k => return Err(Error::Format(format!("unknown model kind {k}"))),
        };
        let target = match c.u8()? {
            NONE_CODE => None,
            code => Some(
                PredictionTarget::from_code(code)
                    .ok_or_else(|| Error::Format(format!("bad target {code}")))?,
            ),
        };
        let sched_code = c.u8()?;
        let activation = {
            let a = c.u8()?;
            Activation::from_code(a).ok_or_else(|| Error::Format(format!("bad activation {a}")))?
        };
        let (beta_min, beta_max) = (c.f64()?, c.f64()?);
        let schedule = match sched_code {
            NONE_CODE => None,
            code => {
                let kind = ScheduleKind::from_code(code)
                    .ok_or_else(|| Error::Format(format!("bad schedule {code}")))?;
                Some(InterpolantSchedule {
                    kind,
                    beta_min,
                    beta_max,
                })
            }
        };
        let seed = c.u64()?;
        let action_dim = c.u32()? as usize;
        let obs_dim = c.u32()? as usize;
        let time_embed_dim = c.u32()? as usize;
        let n_dims = c.u32()? as usize;
        if !(2..=64).contains(&n_dims) {
            return Err(Error::Format(format!("implausible layer count {n_dims}")));
        }
        let layer_dims = (0..n_dims)
            .map(|_| c.u32().map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let class_count = if kind == ModelKind::Classifier {
            Some(c.u32()? as usize)
        } else {
            None
        };
        let mut groups = Vec::new();
        for _ in 0..3 {
            let n = c.u32()? as usize;
            let mut g = Vec::with_capacity(n.min(1024));
            for _ in 0..n {
                let rank = c.u32()? as usize;
                if rank > 8 {
                    return Err(Error::Format(format!("implausible tensor rank {rank}")));
                }
                let shape = (0..rank)
                    .map(|_| c.u32().map(|v| v as usize))
                    .collect::<Result<Vec<_>>>()?;
                let len: usize = shape.iter().product();
                let raw = c.take(
                    len.checked_mul(4)
                        .ok_or_else(|| Error::Format("tensor too large".into()))?,
                )?;
                let data = raw
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect();
                g.push(Tensor { shape, data });
            }
            groups.push(g);
        }
        if c.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                bytes.len() - c.pos
            )));
        }
        let extra = groups.pop().unwrap();
        let ema = groups.pop().unwrap();
        let raw = groups.pop().unwrap();
        Ok(Checkpoint {
            kind,
            target,
            schedule,
            activation,
            seed,
            action_dim,
            obs_dim,
            time_embed_dim,
            layer_dims,
            class_count,
            raw,
            ema,
            extra,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("unexpected end of checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::mlp::FieldArch;
    use crate::par::stream_rng;

    fn field(seed: u64) -> MlpField {
        let arch = FieldArch {
            hidden: vec![5, 4],
            ..FieldArch::default()
        };
        MlpField::new(
            2,
            3,
            PredictionTarget::Score,
            &arch,
            &mut stream_rng(seed, 0),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_preserves_f32_weights() {
        let (ema, raw) = (field(1), field(2));
        let ck = Checkpoint::from_field(
            &ema,
            &raw,
            &InterpolantSchedule::vp(),
            42,
            vec![Tensor::vector(&[1.5, -2.0])],
        );
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.seed, 42);
        assert_eq!(back.schedule.unwrap().kind, ScheduleKind::Vp);
        let e = back.ema_field().unwrap();
        let r = back.raw_field().unwrap();
        for (a, b) in e.net().params().iter().zip(ema.net().params()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        assert_ne!(e.net().params(), r.net().params());
        assert_eq!(e.target(), PredictionTarget::Score);
    }

    #[test]
    fn header_is_little_endian() {
        let ck = Checkpoint::from_field(
            &field(1),
            &field(1),
            &InterpolantSchedule::linear(),
            7,
            vec![],
        );
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"SIPK");
        assert_eq!(&buf[4..8], &[1, 0, 0, 0]);
        assert_eq!(buf[8], 0);
        assert_eq!(buf[9], PredictionTarget::Score.code());
        assert_eq!(buf[10], 0);
        assert_eq!(&buf[28..36], &7u64.to_le_bytes());
    }

    #[test]
    fn rejects_corruption() {
        let ck =
            Checkpoint::from_field(&field(1), &field(1), &InterpolantSchedule::gvp(), 0, vec![]);
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        assert!(Checkpoint::read_from(&mut &buf[..buf.len() - 3]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(Checkpoint::read_from(&mut bad.as_slice()).is_err());
        let mut trailing = buf.clone();
        trailing.push(0);
        assert!(Checkpoint::read_from(&mut trailing.as_slice()).is_err());
    }
}
