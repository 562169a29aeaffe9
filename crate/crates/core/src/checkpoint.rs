//! GAN checkpoint archive.
//!
//! Layout: the 8-byte magic `RSFGCKPT`, a little-endian `u64` length, a
//! compact JSON header, then every tensor as raw little-endian `f32` in the
//! order the header lists them (generator first, names sorted). The header
//! carries offsets, so the whole file is a pure function of its content and
//! re-serializing a loaded checkpoint reproduces the same bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rssiforge_nn::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

const MAGIC: &[u8; 8] = b"RSFGCKPT";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchMeta {
    pub n_classes: usize,
    pub n_aps: usize,
    pub latent_dim: usize,
    pub embed_size: usize,
    pub input_width: usize,
    pub kernel_size: usize,
    pub gen_channels: Vec<usize>,
    pub disc_channels: Vec<usize>,
    /// One name per class: room names, or house ids for a pretraining model.
    pub class_names: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainMeta {
    pub epochs_completed: usize,
    pub seed: u64,
    /// One entry per critic update: `mean D(fake) − mean D(real) + λ·GP`.
    pub critic_loss: Vec<f64>,
    /// One entry per critic update: `mean D(real) − mean D(fake)`.
    pub wasserstein: Vec<f64>,
    /// One entry per generator update: `−mean D(fake)`.
    pub generator_loss: Vec<f64>,
    /// Free-form history such as `pretrain`, `surgery`, `finetune`.
    pub lineage: Vec<String>,
}

pub type Weights = BTreeMap<String, Tensor<f32>>;

#[derive(Clone, Debug, PartialEq)]
pub struct GanCheckpoint {
    pub arch: ArchMeta,
    pub train: TrainMeta,
    pub generator: Weights,
    pub discriminator: Weights,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    net: String,
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    arch: ArchMeta,
    train: TrainMeta,
    tensors: Vec<TensorEntry>,
}

impl GanCheckpoint {
    fn nets(&self) -> [(&'static str, &Weights); 2] {
        [("generator", &self.generator), ("discriminator", &self.discriminator)]
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors = Vec::new();
        let mut offset = 0u64;
        for (net, weights) in self.nets() {
            for (name, t) in weights {
                tensors.push(TensorEntry { net: net.into(), name: name.clone(), shape: t.shape().to_vec(), offset });
                offset += 4 * t.numel() as u64;
            }
        }
        let header =
            Header { format_version: FORMAT_VERSION, arch: self.arch.clone(), train: self.train.clone(), tensors };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, weights) in self.nets() {
            for t in weights.values() {
                for v in t.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint archive (bad magic)"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {}", header.format_version)));
        }
        let blob = &bytes[16 + hlen..];
        let mut ck = GanCheckpoint {
            arch: header.arch,
            train: header.train,
            generator: BTreeMap::new(),
            discriminator: BTreeMap::new(),
        };
        let mut expected_offset = 0u64;
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            if e.offset != expected_offset {
                return Err(Error::Checkpoint(format!("tensor {}/{} at unexpected offset", e.net, e.name)));
            }
            let start = e.offset as usize;
            let raw = blob
                .get(start..start + 4 * n)
                .ok_or_else(|| Error::Checkpoint(format!("tensor {}/{} truncated", e.net, e.name)))?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            let t = Tensor::new(&e.shape, data).map_err(|err| Error::Checkpoint(err.to_string()))?;
            expected_offset += 4 * n as u64;
            let slot = match e.net.as_str() {
                "generator" => &mut ck.generator,
                "discriminator" => &mut ck.discriminator,
                other => return Err(Error::Checkpoint(format!("unknown network `{other}`"))),
            };
            if slot.insert(e.name.clone(), t).is_some() {
                return Err(Error::Checkpoint(format!("duplicate tensor {}/{}", e.net, e.name)));
            }
        }
        if expected_offset as usize != blob.len() {
            return Err(bad("trailing bytes after tensor data"));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).at(parent)?;
        }
        fs::write(path, self.to_bytes()?).at(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).at(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GanCheckpoint {
        let mut generator = BTreeMap::new();
        generator.insert("b".to_string(), Tensor::from_fn(&[2, 3], |i| i as f32 * 0.1 - 0.25));
        generator.insert("a".to_string(), Tensor::from_fn(&[4], |i| (i as f32).sqrt()));
        let mut discriminator = BTreeMap::new();
        discriminator.insert("w".to_string(), Tensor::from_fn(&[1, 2, 2], |i| -(i as f32) / 3.0));
        GanCheckpoint {
            arch: ArchMeta {
                n_classes: 2,
                n_aps: 3,
                latent_dim: 4,
                embed_size: 2,
                input_width: 20,
                kernel_size: 5,
                gen_channels: vec![4, 8],
                disc_channels: vec![8, 4],
                class_names: vec!["x".into(), "y".into()],
            },
            train: TrainMeta {
                epochs_completed: 3,
                seed: 9,
                critic_loss: vec![0.1, -1.0 / 3.0, 1e-300],
                wasserstein: vec![0.5; 3],
                generator_loss: vec![std::f64::consts::PI],
                lineage: vec!["train".into()],
            },
            generator,
            discriminator,
        }
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let ck = sample();
        let bytes = ck.to_bytes().unwrap();
        let back = GanCheckpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn corrupt_archives_are_rejected() {
        let bytes = sample().to_bytes().unwrap();
        assert!(GanCheckpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(GanCheckpoint::from_bytes(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(GanCheckpoint::from_bytes(&magic).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nested/model.ckpt");
        let ck = sample();
        ck.save(&p).unwrap();
        assert_eq!(GanCheckpoint::load(&p).unwrap(), ck);
    }
}
