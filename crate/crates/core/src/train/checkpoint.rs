//! Checkpoint files: `GSCK`, a version byte, a little-endian `u32` header
//! length, the JSON header (spec, provenance, tensor table, payload hash),
//! then every parameter as little-endian `f32` in spec order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio::{sha256_hex, write_atomic};
use crate::nn::{NetworkSpec, Params};
use crate::tensor::Tensor;
use crate::train::HyperParams;

pub const MAGIC: &[u8; 4] = b"GSCK";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pretrained,
    Finetuned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub stage: Stage,
    pub seed: u64,
    pub epochs: u32,
    pub hyper: HyperParams,
    /// Hash of the manifest (fine-tuning) or generic dataset (pre-training)
    /// the parameters were fitted to.
    pub source_hash: String,
    /// Class label for each output unit.
    pub labels: Vec<String>,
    /// Split withheld from this model, for cross-validation checkpoints.
    #[serde(default)]
    pub held_out: Option<String>,
    /// Payload hash of the checkpoint this one was initialised from.
    #[serde(default)]
    pub parent: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub params: Params,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    spec: NetworkSpec,
    provenance: Provenance,
    tensors: Vec<TensorEntry>,
    params_sha256: String,
}

fn payload(params: &Params) -> Vec<u8> {
    let mut out = Vec::with_capacity(params.count() * 4);
    for t in &params.tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

impl Checkpoint {
    pub fn new(spec: NetworkSpec, params: Params, provenance: Provenance) -> Result<Checkpoint> {
        params.check_congruent(&spec)?;
        Ok(Checkpoint {
            spec,
            params,
            provenance,
        })
    }

    /// sha256 of the raw parameter payload.
    pub fn params_hash(&self) -> String {
        sha256_hex(&payload(&self.params))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.params.check_congruent(&self.spec)?;
        let data = payload(&self.params);
        let header = Header {
            spec: self.spec.clone(),
            provenance: self.provenance.clone(),
            tensors: self
                .spec
                .param_names()
                .into_iter()
                .zip(&self.params.tensors)
                .map(|(name, t)| TensorEntry {
                    name,
                    shape: t.shape().to_vec(),
                })
                .collect(),
            params_sha256: sha256_hex(&data),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::CheckpointCorrupt(e.to_string()))?;
        let mut out = Vec::with_capacity(9 + json.len() + data.len());
        out.extend_from_slice(MAGIC);
        out.push(FORMAT_VERSION);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&data);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::CheckpointCorrupt("missing GSCK magic".into()));
        }
        if bytes.len() < 5 {
            return Err(Error::CheckpointCorrupt("file ends before the version byte".into()));
        }
        if bytes[4] != FORMAT_VERSION {
            return Err(Error::CheckpointVersion {
                found: bytes[4],
                expected: FORMAT_VERSION,
            });
        }
        if bytes.len() < 9 {
            return Err(Error::CheckpointCorrupt("file ends inside the header length".into()));
        }
        let hlen = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let body = &bytes[9..];
        if body.len() < hlen {
            return Err(Error::CheckpointCorrupt(format!(
                "header declares {hlen} bytes but only {} remain",
                body.len()
            )));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])
            .map_err(|e| Error::CheckpointCorrupt(format!("unreadable header: {e}")))?;
        let shapes = header
            .spec
            .param_shapes()
            .map_err(|e| Error::CheckpointCorrupt(format!("header spec is inconsistent: {e}")))?;
        let listed: Vec<&Vec<usize>> = header.tensors.iter().map(|t| &t.shape).collect();
        if listed != shapes.iter().collect::<Vec<_>>() {
            return Err(Error::CheckpointCorrupt(
                "tensor table does not match the network spec".into(),
            ));
        }
        let data = &body[hlen..];
        let expected: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum::<usize>() * 4;
        if data.len() != expected {
            return Err(Error::CheckpointCorrupt(format!(
                "parameter payload is {} bytes, expected {expected}",
                data.len()
            )));
        }
        let found = sha256_hex(data);
        if found != header.params_sha256 {
            return Err(Error::CheckpointHash {
                expected: header.params_sha256,
                found,
            });
        }
        let mut floats = data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
        let tensors = shapes
            .into_iter()
            .map(|shape| {
                let n = shape.iter().product();
                Tensor::new(shape, floats.by_ref().take(n).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Checkpoint {
            spec: header.spec,
            params: Params { tensors },
            provenance: header.provenance,
        })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    write_atomic(path, &ckpt.to_bytes()?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::InputGeometry;

    fn fresh() -> Checkpoint {
        let spec = NetworkSpec::vgg_nano_with_input(4, InputGeometry::new(16, 16, 3));
        let params = Params::init(&spec, 3).unwrap();
        Checkpoint::new(
            spec,
            params,
            Provenance {
                stage: Stage::Pretrained,
                seed: 3,
                epochs: 1,
                hyper: HyperParams::default(),
                source_hash: "abc".into(),
                labels: vec!["a".into(), "b".into(), "c".into(), "d".into()],
                held_out: None,
                parent: None,
            },
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.gsck");
        let c = fresh();
        save_checkpoint(&c, &p).unwrap();
        assert_eq!(load_checkpoint(&p).unwrap(), c);
        assert_eq!(std::fs::read(&p).unwrap(), c.to_bytes().unwrap());
    }

    #[test]
    fn truncation_is_corruption() {
        let bytes = fresh().to_bytes().unwrap();
        for cut in [0, 3, 5, 8, 20, bytes.len() - 1] {
            let err = Checkpoint::from_bytes(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, Error::CheckpointCorrupt(_)), "cut {cut}: {err}");
        }
    }

    #[test]
    fn bumped_version_is_version_error() {
        let mut bytes = fresh().to_bytes().unwrap();
        bytes[4] += 1;
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::CheckpointVersion { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn flipped_payload_bit_is_hash_error() {
        let mut bytes = fresh().to_bytes().unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::CheckpointHash { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_checkpoint(Path::new("/nonexistent/x.gsck")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
