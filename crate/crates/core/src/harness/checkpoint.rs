//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//! `b"PWDRCKPT"`, version `u32`, kind `u8` (0 network, 1 linear),
//! config length `u32`, config JSON, SHA-256 of the config JSON,
//! payload, SHA-256 of every preceding byte.
//!
//! Network payload: spec count `u32`, then per convolution `in`, `out`,
//! `k` as `u32` followed by `out*in*k` weights and `out` biases as `f64`.
//! Linear payload: `in_dim`, `out_dim` as `u32`, regularization tag `u8`
//! (0 none, 1 L2, 2 L1), lambda `f64`, weights, biases.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::experiment::{ExperimentConfig, TrainedModel};
use super::io::{read_file, write_file};
use super::HarnessError;
use crate::baselines::{LinearMap, Regularization};
use crate::nn::{ConvSpec, PwDRecNetParams};

pub const MAGIC: &[u8; 8] = b"PWDRCKPT";
pub const VERSION: u32 = 1;
const HASH_LEN: usize = 32;
/// Upper bound on any single dimension read from a checkpoint.
const MAX_DIM: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ExperimentConfig,
    pub model: TrainedModel,
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<(), HarnessError> {
    let v = u32::try_from(v).map_err(|_| HarnessError::Checkpoint(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>, HarnessError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match ckpt.model {
        TrainedModel::Net(_) => 0,
        TrainedModel::Linear(_) => 1,
    });
    let config = serde_json::to_vec(&ckpt.config)?;
    put_u32(&mut out, config.len())?;
    out.extend_from_slice(&config);
    out.extend_from_slice(&Sha256::digest(&config));
    match &ckpt.model {
        TrainedModel::Net(p) => {
            put_u32(&mut out, p.n_specs())?;
            for s in p.specs() {
                put_u32(&mut out, s.in_channels)?;
                put_u32(&mut out, s.out_channels)?;
                put_u32(&mut out, s.kernel_size)?;
                put_f64s(&mut out, &s.weights);
                put_f64s(&mut out, &s.bias);
            }
        }
        TrainedModel::Linear(m) => {
            put_u32(&mut out, m.in_dim)?;
            put_u32(&mut out, m.out_dim)?;
            let (tag, lambda) = match m.regularization {
                Regularization::None => (0u8, 0.0),
                Regularization::L2(l) => (1, l),
                Regularization::L1(l) => (2, l),
            };
            out.push(tag);
            out.extend_from_slice(&lambda.to_le_bytes());
            put_f64s(&mut out, &m.weights);
            put_f64s(&mut out, &m.bias);
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], HarnessError> {
        if self.buf.len() - self.pos < n {
            return Err(HarnessError::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, HarnessError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize, HarnessError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn dim(&mut self) -> Result<usize, HarnessError> {
        let v = self.u32()?;
        if v > MAX_DIM {
            return Err(HarnessError::Checkpoint(format!("dimension {v} is out of range")));
        }
        Ok(v)
    }

    fn f64(&mut self) -> Result<f64, HarnessError> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(f64::from_le_bytes(a))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, HarnessError> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| HarnessError::Checkpoint("array length overflows".into()))?;
        Ok(self
            .take(bytes)?
            .chunks_exact(8)
            .map(|c| {
                let mut a = [0u8; 8];
                a.copy_from_slice(c);
                f64::from_le_bytes(a)
            })
            .collect())
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, HarnessError> {
    let bad = |m: &str| HarnessError::Checkpoint(m.to_string());
    if bytes.len() < MAGIC.len() + HASH_LEN {
        return Err(bad("file too short"));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(bad("bad magic"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - HASH_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(bad("checksum mismatch"));
    }
    let mut r = Reader {
        buf: body,
        pos: MAGIC.len(),
    };
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(HarnessError::Checkpoint(format!("unsupported version {version}")));
    }
    let kind = r.u8()?;
    let config_len = r.u32()?;
    let config_bytes = r.take(config_len)?;
    if Sha256::digest(config_bytes).as_slice() != r.take(HASH_LEN)? {
        return Err(bad("config hash mismatch"));
    }
    let config: ExperimentConfig = serde_json::from_slice(config_bytes)?;
    config.validate()?;
    let model = match kind {
        0 => {
            let n = r.u32()?;
            let mut specs = Vec::new();
            for _ in 0..n {
                let (i, o, k) = (r.dim()?, r.dim()?, r.dim()?);
                let n_w = i
                    .checked_mul(o)
                    .and_then(|v| v.checked_mul(k))
                    .ok_or_else(|| bad("weight count overflows"))?;
                let weights = r.f64s(n_w)?;
                let bias = r.f64s(o)?;
                specs.push(ConvSpec {
                    in_channels: i,
                    out_channels: o,
                    kernel_size: k,
                    weights,
                    bias,
                });
            }
            let net = config.net.clone().with_out_channels(config.out_channels());
            TrainedModel::Net(PwDRecNetParams::from_specs(net, specs)?)
        }
        1 => {
            let (in_dim, out_dim) = (r.dim()?, r.dim()?);
            let tag = r.u8()?;
            let lambda = r.f64()?;
            let regularization = match tag {
                0 => Regularization::None,
                1 => Regularization::L2(lambda),
                2 => Regularization::L1(lambda),
                t => return Err(HarnessError::Checkpoint(format!("unknown regularization tag {t}"))),
            };
            let n_w = in_dim.checked_mul(out_dim).ok_or_else(|| bad("weight count overflows"))?;
            let weights = r.f64s(n_w)?;
            let bias = r.f64s(out_dim)?;
            TrainedModel::Linear(LinearMap {
                in_dim,
                out_dim,
                weights,
                bias,
                regularization,
            })
        }
        k => return Err(HarnessError::Checkpoint(format!("unknown model kind {k}"))),
    };
    if r.pos != body.len() {
        return Err(bad("trailing bytes after payload"));
    }
    Ok(Checkpoint { config, model })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), HarnessError> {
    write_file(path, &encode_checkpoint(ckpt)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, HarnessError> {
    decode_checkpoint(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetConfig;

    fn net_ckpt() -> Checkpoint {
        let config = ExperimentConfig {
            net: NetConfig {
                enc_channels: vec![2, 4],
                kernel_size: 3,
                ..NetConfig::default()
            },
            ..ExperimentConfig::default()
        };
        let net = config.net.clone().with_out_channels(config.out_channels());
        Checkpoint {
            model: TrainedModel::Net(PwDRecNetParams::init(net, 3).unwrap()),
            config,
        }
    }

    #[test]
    fn network_round_trip_is_bit_exact() {
        let c = net_ckpt();
        let bytes = encode_checkpoint(&c).unwrap();
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back.config, c.config);
        let (TrainedModel::Net(a), TrainedModel::Net(b)) = (&c.model, &back.model) else {
            panic!("kind changed");
        };
        let bits = |p: &PwDRecNetParams| p.values().map(f64::to_bits).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b));
        assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
    }

    #[test]
    fn linear_round_trip() {
        let c = Checkpoint {
            config: ExperimentConfig::default(),
            model: TrainedModel::Linear(LinearMap {
                in_dim: 2,
                out_dim: 1,
                weights: vec![0.5, -f64::MIN_POSITIVE],
                bias: vec![3.0],
                regularization: Regularization::L1(0.01),
            }),
        };
        assert_eq!(decode_checkpoint(&encode_checkpoint(&c).unwrap()).unwrap(), c);
    }

    #[test]
    fn corruption_detected() {
        let bytes = encode_checkpoint(&net_ckpt()).unwrap();
        for pos in [0, 9, 20, bytes.len() / 2, bytes.len() - 1] {
            let mut b = bytes.clone();
            b[pos] ^= 0x10;
            assert!(matches!(decode_checkpoint(&b), Err(HarnessError::Checkpoint(_))), "pos {pos}");
        }
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        assert!(decode_checkpoint(&[]).is_err());
    }
}
