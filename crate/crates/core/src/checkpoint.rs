//! Checkpoint serialization.
//!
//! A checkpoint is one binary file holding a header followed by the raw
//! parameters, enough to rebuild the policy (net, horizons, normalization)
//! without the training dataset. All multi-byte values are little-endian.
//!
//! Byte layout:
//!
//! ```text
//! offset  size        field
//! 0       6           magic, ASCII "IMLEv1"
//! 6       1           net kind: 0 generator, 1 velocity
//! 7       1           activation tag: 0 relu
//! 8       4           u32 n = number of layer widths
//! 12      4*n         u32 layer widths, input first
//! ..      4           u32 observation horizon
//! ..      4           u32 prediction horizon
//! ..      4           u32 execution horizon
//! ..      4           u32 latent dimension (0 for velocity nets)
//! ..      4           u32 action dimension
//! ..      4           u32 d_o = per-frame observation dimension
//! ..      8*d_o       f64 observation minima
//! ..      8*d_o       f64 observation maxima
//! ..      4           u32 d_a = action dimension of the normalizer
//! ..      8*d_a       f64 action minima
//! ..      8*d_a       f64 action maxima
//! ..      8*P         f64 parameters, layer by layer: weights row-major,
//!                     then biases
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::VelocityNet;
use crate::imle::Horizons;
use crate::nn::{Activation, GeneratorNet, Mlp};
use crate::policy::Normalizer;
use crate::tensor::DenseArray;

const MAGIC: &[u8; 6] = b"IMLEv1";

/// A trained policy with everything needed to run it.
#[derive(Debug, Clone)]
pub enum Checkpoint {
    Generator { net: GeneratorNet, normalizer: Normalizer, horizons: Horizons },
    Velocity { net: VelocityNet, normalizer: Normalizer, horizons: Horizons },
}

impl Checkpoint {
    pub fn normalizer(&self) -> &Normalizer {
        match self {
            Checkpoint::Generator { normalizer, .. } => normalizer,
            Checkpoint::Velocity { normalizer, .. } => normalizer,
        }
    }

    pub fn horizons(&self) -> Horizons {
        match self {
            Checkpoint::Generator { horizons, .. } => *horizons,
            Checkpoint::Velocity { horizons, .. } => *horizons,
        }
    }

    fn mlp(&self) -> &Mlp {
        match self {
            Checkpoint::Generator { net, .. } => net.mlp(),
            Checkpoint::Velocity { net, .. } => net.mlp(),
        }
    }

    /// Serializes to the documented byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let (kind, latent_dim, action_dim) = match self {
            Checkpoint::Generator { net, .. } => (0u8, net.latent_dim(), net.action_dim()),
            Checkpoint::Velocity { net, .. } => (1u8, 0, net.action_dim()),
        };
        let mlp = self.mlp();
        out.push(kind);
        out.push(mlp.activation().tag());
        push_u32(&mut out, mlp.layer_sizes().len() as u32);
        for &s in mlp.layer_sizes() {
            push_u32(&mut out, s as u32);
        }
        let h = self.horizons();
        push_u32(&mut out, h.obs as u32);
        push_u32(&mut out, h.pred as u32);
        push_u32(&mut out, h.exec as u32);
        push_u32(&mut out, latent_dim as u32);
        push_u32(&mut out, action_dim as u32);
        let norm = self.normalizer();
        let (obs_min, obs_max) = norm.obs_ranges();
        push_u32(&mut out, obs_min.len() as u32);
        push_f64s(&mut out, obs_min);
        push_f64s(&mut out, obs_max);
        let (act_min, act_max) = norm.action_ranges();
        push_u32(&mut out, act_min.len() as u32);
        push_f64s(&mut out, act_min);
        push_f64s(&mut out, act_max);
        for k in 0..mlp.num_layers() {
            push_f64s(&mut out, mlp.weights()[k].data());
            push_f64s(&mut out, mlp.biases()[k].data());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, origin };
        let magic = r.take(6)?;
        if magic != MAGIC {
            return Err(r.format_err("bad magic"));
        }
        let kind = r.u8()?;
        let activation = Activation::from_tag(r.u8()?)
            .ok_or_else(|| r.format_err("unknown activation tag"))?;
        let n_sizes = r.u32()? as usize;
        if n_sizes < 2 || n_sizes > 64 {
            return Err(r.format_err("implausible layer count"));
        }
        let mut sizes = Vec::with_capacity(n_sizes);
        for _ in 0..n_sizes {
            sizes.push(r.u32()? as usize);
        }
        let horizons = Horizons {
            obs: r.u32()? as usize,
            pred: r.u32()? as usize,
            exec: r.u32()? as usize,
        };
        let latent_dim = r.u32()? as usize;
        let action_dim = r.u32()? as usize;
        let d_o = r.u32()? as usize;
        let obs_min = r.f64s(d_o)?;
        let obs_max = r.f64s(d_o)?;
        let d_a = r.u32()? as usize;
        let act_min = r.f64s(d_a)?;
        let act_max = r.f64s(d_a)?;
        let normalizer = Normalizer::from_ranges(obs_min, obs_max, act_min, act_max)?;

        let mut mlp = Mlp::zeros(&sizes, activation)?;
        for k in 0..mlp.num_layers() {
            let w = r.f64s(sizes[k] * sizes[k + 1])?;
            mlp.weights_mut()[k] = DenseArray::new(vec![sizes[k], sizes[k + 1]], w)?;
            let b = r.f64s(sizes[k + 1])?;
            mlp.biases_mut()[k] = DenseArray::new(vec![sizes[k + 1]], b)?;
        }
        if r.pos != bytes.len() {
            return Err(r.format_err("trailing bytes"));
        }

        let obs_total = horizons.obs * d_o;
        match kind {
            0 => {
                let net = GeneratorNet::from_mlp(mlp, latent_dim, obs_total, horizons.pred, action_dim)?;
                Ok(Checkpoint::Generator { net, normalizer, horizons })
            }
            1 => {
                let net = VelocityNet::from_mlp(mlp, obs_total, horizons.pred, action_dim)?;
                Ok(Checkpoint::Velocity { net, normalizer, horizons })
            }
            k => Err(Error::Format {
                path: origin.to_string(),
                detail: format!("unknown net kind {k}"),
            }),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a str,
}

impl<'a> Reader<'a> {
    fn format_err(&self, detail: &str) -> Error {
        Error::Format {
            path: self.origin.to_string(),
            detail: format!("{detail} at byte {}", self.pos),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.format_err("unexpected end of file"));
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

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(8 * n)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}
