//! Versioned binary container for trained policies.
//!
//! Layout (little-endian): 8-byte magic, `u32` version, `u32` header length,
//! JSON header, `u32` layer count, per layer `u32 rows, u32 cols, u8
//! activation`, then every layer's weights (row-major) followed by its bias as
//! `f64`, and finally a `u64` checksum over all preceding bytes.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineHead, BaselineKind, BaselineModel};
use crate::diffusion::{Denoiser, DenoiserSpec, SigmaKind, VarianceSchedule};
use crate::envs::Normalizer;
use crate::error::{Error, Result};
use crate::io::checksum64;
use crate::nnet::{Activation, Dense, Mlp, Parameterized};
use crate::samplers::DiffusionPolicy;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DBCCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained policy of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Diffusion { policy: DiffusionPolicy, dropout: f64 },
    Baseline(BaselineModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub sigma_kind: SigmaKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
enum Header {
    Diffusion {
        spec: DenoiserSpec,
        schedule: ScheduleParams,
        normalizer: Normalizer,
        dropout: f64,
    },
    Baseline {
        kind: BaselineKind,
        head: BaselineHead,
        normalizer: Normalizer,
    },
}

impl Policy {
    pub fn normalizer(&self) -> &Normalizer {
        match self {
            Policy::Diffusion { policy, .. } => &policy.normalizer,
            Policy::Baseline(m) => &m.normalizer,
        }
    }

    fn layers(&self) -> Vec<&Dense> {
        match self {
            Policy::Diffusion { policy, .. } => policy.model.layers(),
            Policy::Baseline(m) => m.trunk.layers(),
        }
    }

    fn header(&self) -> Header {
        match self {
            Policy::Diffusion { policy, dropout } => Header::Diffusion {
                spec: policy.model.spec().clone(),
                schedule: ScheduleParams {
                    steps: policy.schedule.steps(),
                    beta_min: policy.schedule.beta_min(),
                    beta_max: policy.schedule.beta_max(),
                    sigma_kind: policy.schedule.sigma_kind(),
                },
                normalizer: policy.normalizer.clone(),
                dropout: *dropout,
            },
            Policy::Baseline(m) => Header::Baseline {
                kind: m.kind,
                head: m.head.clone(),
                normalizer: m.normalizer.clone(),
            },
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header()).expect("header serialises");
        let layers = self.layers();
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
        for l in &layers {
            out.extend_from_slice(&(l.weight.nrows() as u32).to_le_bytes());
            out.extend_from_slice(&(l.weight.ncols() as u32).to_le_bytes());
            out.push(l.activation.code());
        }
        for l in &layers {
            for v in l.weight.iter().chain(l.bias.iter()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let sum = checksum64(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let corrupt = |m: String| Error::corrupt(path, m);
        if bytes.len() < 8 + 4 + 4 + 4 + 8 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(corrupt("not a checkpoint file".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        if checksum64(body) != stored {
            return Err(corrupt("checksum mismatch".into()));
        }
        let mut cur = Cursor { bytes: body, pos: 8 };
        let version = cur.u32().ok_or_else(|| corrupt("truncated".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(corrupt(format!("unsupported checkpoint version {version}")));
        }
        let hlen = cur.u32().ok_or_else(|| corrupt("truncated".into()))? as usize;
        let header: Header = serde_json::from_slice(cur.take(hlen).ok_or_else(|| corrupt("truncated header".into()))?)
            .map_err(|e| corrupt(format!("bad header: {e}")))?;
        let count = cur.u32().ok_or_else(|| corrupt("truncated".into()))? as usize;
        let mut shapes = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let rows = cur.u32().ok_or_else(|| corrupt("truncated layer table".into()))? as usize;
            let cols = cur.u32().ok_or_else(|| corrupt("truncated layer table".into()))? as usize;
            let code = cur.take(1).ok_or_else(|| corrupt("truncated layer table".into()))?[0];
            let act = Activation::from_code(code).ok_or_else(|| corrupt(format!("unknown activation code {code}")))?;
            shapes.push((rows, cols, act));
        }
        let mut layers = Vec::with_capacity(count);
        for (i, &(rows, cols, act)) in shapes.iter().enumerate() {
            let w = cur.f64s(rows * cols).ok_or_else(|| corrupt(format!("layer {i} weights truncated")))?;
            let b = cur.f64s(rows).ok_or_else(|| corrupt(format!("layer {i} bias truncated")))?;
            let weight = Array2::from_shape_vec((rows, cols), w).map_err(|e| corrupt(e.to_string()))?;
            layers.push(Dense::from_parts(weight, Array1::from(b), act).map_err(|e| corrupt(e.to_string()))?);
        }
        if cur.pos != body.len() {
            return Err(corrupt(format!("{} trailing bytes", body.len() - cur.pos)));
        }
        let rebuild = |e: Error| corrupt(e.to_string());
        match header {
            Header::Diffusion {
                spec,
                schedule,
                normalizer,
                dropout,
            } => {
                let sched = VarianceSchedule::linear_with_sigma(
                    schedule.steps,
                    schedule.beta_min,
                    schedule.beta_max,
                    schedule.sigma_kind,
                )
                .map_err(rebuild)?;
                let model = Denoiser::from_layers(spec, layers).map_err(rebuild)?;
                Ok(Policy::Diffusion {
                    policy: DiffusionPolicy {
                        model,
                        schedule: sched,
                        normalizer,
                    },
                    dropout,
                })
            }
            Header::Baseline { kind, head, normalizer } => {
                let model = BaselineModel {
                    kind,
                    trunk: Mlp::new(layers).map_err(rebuild)?,
                    head,
                    normalizer,
                };
                model.validate().map_err(rebuild)?;
                Ok(Policy::Baseline(model))
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&crate::io::read(path)?, path)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Option<Vec<f64>> {
        let b = self.take(n.checked_mul(8)?)?;
        Some(b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::Architecture;
    use crate::rng::seeded;

    fn diffusion() -> Policy {
        let spec = DenoiserSpec {
            architecture: Architecture::MlpSieve,
            obs_dim: 3,
            action_dim: 2,
            hidden_width: 8,
            hidden_layers: 2,
            embed_dim: 4,
            time_embed_dim: 4,
            steps: 10,
        };
        Policy::Diffusion {
            policy: DiffusionPolicy {
                model: Denoiser::new(spec, &mut seeded(1)).unwrap(),
                schedule: VarianceSchedule::linear(10, 1e-4, 0.02).unwrap(),
                normalizer: Normalizer {
                    lo: vec![0.1, -0.3],
                    hi: vec![0.9, 1.0 / 3.0],
                },
            },
            dropout: 0.1,
        }
    }

    #[test]
    fn diffusion_round_trip_is_exact() {
        let p = diffusion();
        let bytes = p.to_bytes();
        let back = Policy::from_bytes(&bytes, Path::new("x")).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn baseline_round_trip_is_exact() {
        let trunk = Mlp::build(&[3, 5, 6], Activation::Gelu, &mut seeded(2)).unwrap();
        let p = Policy::Baseline(BaselineModel {
            kind: BaselineKind::KmeansResidual,
            trunk,
            head: BaselineHead::KmeansResidual {
                centroids: vec![vec![0.1, 0.2], vec![-0.7, 0.3]],
            },
            normalizer: Normalizer::identity(2),
        });
        let back = Policy::from_bytes(&p.to_bytes(), Path::new("x")).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn flipped_byte_is_detected() {
        let mut bytes = diffusion().to_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x01;
        assert!(matches!(Policy::from_bytes(&bytes, Path::new("x")), Err(Error::Corrupt { .. })));
    }

    #[test]
    fn truncation_and_garbage_are_detected() {
        let bytes = diffusion().to_bytes();
        for cut in [0, 7, 20, bytes.len() - 1] {
            assert!(matches!(Policy::from_bytes(&bytes[..cut], Path::new("x")), Err(Error::Corrupt { .. })));
        }
        assert!(Policy::from_bytes(b"hello world, not a checkpoint", Path::new("x")).is_err());
    }
}
