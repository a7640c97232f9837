//! Policy file: magic, JSON header, little-endian `f32` payload.
//!
//! ```text
//! offset  size  content
//! 0       8     b"STRDCKPT"
//! 8       4     header length H (u32, little endian)
//! 12      H     UTF-8 JSON header
//! 12+H    4·N   payload: N little-endian f32, tensors in header order,
//!               each row-major
//! ```
//!
//! The header lists every tensor's name and shape, the network layout and
//! the SHA-256 of the payload bytes. The observation normalization is
//! stored as tensors so a deployed policy needs no statistics stream.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::mlp::{Activation, Layer, Mlp};
use super::policy::{ObsNormalizer, Policy, NORM_EPS};
use super::LearnError;

pub const MAGIC: &[u8; 8] = b"STRDCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub version: u32,
    pub activation: Activation,
    pub actor_dims: Vec<usize>,
    pub critic_dims: Vec<usize>,
    pub tensors: Vec<TensorInfo>,
    pub payload_sha256: String,
    /// Free-form provenance (iteration, seed, code version).
    #[serde(default)]
    pub meta: serde_json::Map<String, serde_json::Value>,
}

/// A frozen policy with its observation normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub policy: Policy<f32>,
    pub obs_mean: Vec<f32>,
    pub obs_std: Vec<f32>,
    pub obs_clip: f32,
    pub meta: serde_json::Map<String, serde_json::Value>,
}

impl Checkpoint {
    pub fn from_training(policy: &Policy<f32>, norm: &ObsNormalizer) -> Self {
        Self {
            policy: policy.clone(),
            obs_mean: norm.mean.iter().map(|v| *v as f32).collect(),
            obs_std: norm.var.iter().map(|v| (v + NORM_EPS).sqrt() as f32).collect(),
            obs_clip: norm.clip as f32,
            meta: serde_json::Map::new(),
        }
    }

    pub fn normalize(&self, obs: &[f64], out: &mut [f32]) {
        let clip = self.obs_clip as f64;
        for (j, v) in obs.iter().enumerate() {
            let z = (v - self.obs_mean[j] as f64) / self.obs_std[j] as f64;
            out[j] = z.clamp(-clip, clip) as f32;
        }
    }

    /// Deterministic (mean) actions for a batch of raw observations.
    pub fn act_batch(&self, obs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let od = self.policy.obs_dim();
        let mut x = Array2::<f32>::zeros((obs.len(), od));
        for (i, o) in obs.iter().enumerate() {
            self.normalize(o, x.row_mut(i).into_slice().expect("contiguous"));
        }
        let mean = self.policy.actor.forward(x.view());
        mean.rows().into_iter().map(|r| r.iter().map(|v| *v as f64).collect()).collect()
    }

    pub fn act(&self, obs: &[f64]) -> Vec<f64> {
        self.act_batch(std::slice::from_ref(&obs.to_vec())).remove(0)
    }

    fn tensors(&self) -> Vec<(String, Vec<usize>, Vec<f32>)> {
        let mut out = vec![
            ("obs.mean".to_string(), vec![self.obs_mean.len()], self.obs_mean.clone()),
            ("obs.std".to_string(), vec![self.obs_std.len()], self.obs_std.clone()),
            ("obs.clip".to_string(), vec![1], vec![self.obs_clip]),
            ("log_std".to_string(), vec![self.policy.log_std.len()], self.policy.log_std.to_vec()),
        ];
        for (net, name) in [(&self.policy.actor, "actor"), (&self.policy.critic, "critic")] {
            for (k, l) in net.layers.iter().enumerate() {
                out.push((format!("{name}.{k}.weight"), l.w.shape().to_vec(), l.w.iter().copied().collect()));
                out.push((format!("{name}.{k}.bias"), vec![l.b.len()], l.b.to_vec()));
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = self.tensors();
        let mut payload = Vec::new();
        for (_, _, data) in &tensors {
            for v in data {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        let header = Header {
            version: FORMAT_VERSION,
            activation: self.policy.actor.activation,
            actor_dims: self.policy.actor.dims(),
            critic_dims: self.policy.critic.dims(),
            tensors: tensors
                .iter()
                .map(|(n, s, _)| TensorInfo {
                    name: n.clone(),
                    shape: s.clone(),
                })
                .collect(),
            payload_sha256: hex_digest(&payload),
            meta: self.meta.clone(),
        };
        let h = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(12 + h.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(h.len() as u32).to_le_bytes());
        out.extend_from_slice(&h);
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LearnError> {
        let bad = |m: &str| LearnError::Checkpoint(m.to_string());
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(bad("not a policy checkpoint (bad magic)"));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let body = &bytes[12..];
        if body.len() < hlen {
            return Err(bad("truncated header"));
        }
        let header: Header =
            serde_json::from_slice(&body[..hlen]).map_err(|e| LearnError::Checkpoint(format!("header: {e}")))?;
        if header.version != FORMAT_VERSION {
            return Err(LearnError::Checkpoint(format!("unsupported version {}", header.version)));
        }
        let payload = &body[hlen..];
        if hex_digest(payload) != header.payload_sha256 {
            return Err(bad("payload checksum mismatch"));
        }
        if payload.len() % 4 != 0 {
            return Err(bad("payload is not a whole number of f32 values"));
        }
        let floats: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let expected: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
        if expected != floats.len() {
            return Err(LearnError::Checkpoint(format!(
                "header describes {expected} values, payload holds {}",
                floats.len()
            )));
        }
        let mut cursor = 0;
        let mut next = |name: &str, shape: &[usize]| -> Result<Vec<f32>, LearnError> {
            let info = header
                .tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| LearnError::Checkpoint(format!("missing tensor {name}")))?;
            if info.shape != shape {
                return Err(LearnError::Checkpoint(format!("tensor {name}: shape {:?}, expected {shape:?}", info.shape)));
            }
            let n: usize = shape.iter().product();
            let out = floats[cursor..cursor + n].to_vec();
            cursor += n;
            Ok(out)
        };
        let od = *header.actor_dims.first().ok_or_else(|| bad("empty actor dims"))?;
        let ad = *header.actor_dims.last().expect("non-empty");
        let obs_mean = next("obs.mean", &[od])?;
        let obs_std = next("obs.std", &[od])?;
        let obs_clip = next("obs.clip", &[1])?[0];
        let log_std = Array1::from(next("log_std", &[ad])?);
        let mut build = |name: &str, dims: &[usize]| -> Result<Mlp<f32>, LearnError> {
            let mut layers = Vec::new();
            for (k, d) in dims.windows(2).enumerate() {
                let w = next(&format!("{name}.{k}.weight"), &[d[1], d[0]])?;
                let b = next(&format!("{name}.{k}.bias"), &[d[1]])?;
                layers.push(Layer {
                    w: Array2::from_shape_vec((d[1], d[0]), w).expect("shape checked"),
                    b: Array1::from(b),
                });
            }
            Ok(Mlp {
                layers,
                activation: header.activation,
            })
        };
        let actor = build("actor", &header.actor_dims)?;
        let critic = build("critic", &header.critic_dims)?;
        if critic.input_dim() != od || critic.output_dim() != 1 {
            return Err(bad("critic must map observations to one value"));
        }
        Ok(Self {
            policy: Policy { actor, critic, log_std },
            obs_mean,
            obs_std,
            obs_clip,
            meta: header.meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| LearnError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, LearnError> {
        let bytes = std::fs::read(path).map_err(|source| LearnError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            LearnError::Checkpoint(m) => LearnError::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let policy: Policy<f32> = Policy::new(&mut rng, 29, 10, &[16, 8], 0.7);
        let mut norm = ObsNormalizer::new(29, 5.0);
        norm.update(&(0..10).map(|i| vec![i as f64 * 0.37; 29]).collect::<Vec<_>>());
        let mut c = Checkpoint::from_training(&policy, &norm);
        c.meta.insert("iteration".into(), 12.into());
        c
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corrupted_payload_is_rejected() {
        let mut bytes = sample().to_bytes();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x40;
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
        assert!(Checkpoint::from_bytes(b"nonsense").is_err());
        let truncated = &sample().to_bytes()[..40];
        assert!(Checkpoint::from_bytes(truncated).is_err());
    }
}
