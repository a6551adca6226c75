//! Checkpoint files (`.nilm`).
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes   "NILMCKPT"
//! version      u32
//! header_len   u32
//! header       header_len bytes of UTF-8 JSON: config, block names and shapes, metadata
//! payload      every parameter as f64, blocks in ModelParams order
//! checksum     32 bytes  SHA-256 of everything above
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Model, ModelConfig, ModelParams};
use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::layers::Params;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NILMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const CHECKPOINT_EXTENSION: &str = "nilm";

const PREFIX_LEN: usize = 16;
const CHECKSUM_LEN: usize = 32;

/// Optional data carried alongside the weights.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub appliance: Option<String>,
    pub input_stats: Option<NormStats>,
    pub target_stats: Option<NormStats>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BlockHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    blocks: Vec<BlockHeader>,
    #[serde(default)]
    meta: CheckpointMeta,
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    save_checkpoint(model, &CheckpointMeta::default(), path)
}

pub fn save_checkpoint(model: &Model, meta: &CheckpointMeta, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(model, meta)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    Ok(load_checkpoint(path)?.0)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Model, CheckpointMeta)> {
    decode(&fs::read(path)?)
}

fn encode(model: &Model, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let blocks = ModelParams::tensor_names()
        .into_iter()
        .zip(model.params.tensors())
        .map(|(name, t)| BlockHeader { name, shape: t.shape().to_vec() })
        .collect();
    let header = serde_json::to_vec(&Header { config: model.config.clone(), blocks, meta: meta.clone() })?;

    let mut buf = Vec::with_capacity(PREFIX_LEN + header.len() + model.num_params() * 8 + CHECKSUM_LEN);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    for t in model.params.tensors() {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    Ok(buf)
}

fn corrupt<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Corrupt(msg.into()))
}

fn decode(bytes: &[u8]) -> Result<(Model, CheckpointMeta)> {
    if bytes.len() < PREFIX_LEN + CHECKSUM_LEN {
        return corrupt(format!("file is {} bytes, too short for a checkpoint", bytes.len()));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return corrupt("bad magic bytes");
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version { found: version, expected: CHECKPOINT_VERSION });
    }
    let header_len = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let Some(header_end) = PREFIX_LEN.checked_add(header_len).filter(|&e| e <= bytes.len() - CHECKSUM_LEN) else {
        return corrupt("header length runs past end of file");
    };
    let header: Header = match serde_json::from_slice(&bytes[PREFIX_LEN..header_end]) {
        Ok(h) => h,
        Err(e) => return corrupt(format!("unreadable header: {e}")),
    };

    // The embedded config must reproduce the recorded block shapes.
    let mut model = Model::zeroed(header.config.clone())
        .map_err(|e| Error::Shape(format!("embedded config is invalid: {e}")))?;
    let expected: Vec<(String, Vec<usize>)> = ModelParams::tensor_names()
        .into_iter()
        .zip(model.params.tensors().iter().map(|t| t.shape().to_vec()))
        .collect();
    let recorded: Vec<(String, Vec<usize>)> = header.blocks.into_iter().map(|b| (b.name, b.shape)).collect();
    if expected != recorded {
        let diff = expected
            .iter()
            .zip(&recorded)
            .find(|(a, b)| a != b)
            .map(|(a, b)| format!("config implies {} {:?}, file records {} {:?}", a.0, a.1, b.0, b.1))
            .unwrap_or_else(|| format!("config implies {} blocks, file records {}", expected.len(), recorded.len()));
        return Err(Error::Shape(diff));
    }

    let payload_len = model.num_params() * 8;
    if bytes.len() != header_end + payload_len + CHECKSUM_LEN {
        return corrupt(format!(
            "expected {} payload bytes, found {}",
            payload_len,
            bytes.len().saturating_sub(header_end + CHECKSUM_LEN)
        ));
    }
    let body_end = header_end + payload_len;
    if Sha256::digest(&bytes[..body_end]).as_slice() != &bytes[body_end..] {
        return corrupt("checksum mismatch");
    }
    let flat: Vec<f64> = bytes[header_end..body_end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    model.params.assign_flat(&flat)?;
    Ok((model, header.meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Model {
        Model::new(ModelConfig {
            conv_filters: 3,
            lstm1_hidden: 5,
            lstm2_hidden: 4,
            dense1_units: 6,
            seed: 17,
            ..ModelConfig::with_window(12)
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.nilm");
        let m = small();
        let meta = CheckpointMeta {
            appliance: Some("kettle".into()),
            input_stats: Some(NormStats { mean: 400.0, std: 250.0 }),
            target_stats: Some(NormStats { mean: 30.0, std: 200.0 }),
        };
        save_checkpoint(&m, &meta, &path).unwrap();
        let (back, meta_back) = load_checkpoint(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(meta_back, meta);
        let x: Vec<f64> = (0..12).map(|v| (v as f64 * 0.37).sin()).collect();
        let a = m.predict(&x).unwrap();
        let b = back.predict(&x).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let bytes = encode(&small(), &CheckpointMeta::default()).unwrap();
        for cut in [4, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(decode(&bytes[..cut]), Err(Error::Corrupt(_))), "cut at {cut}");
        }
    }

    #[test]
    fn flipped_payload_bit_fails_checksum() {
        let mut bytes = encode(&small(), &CheckpointMeta::default()).unwrap();
        let n = bytes.len();
        bytes[n - 40] ^= 1;
        assert!(matches!(decode(&bytes), Err(Error::Corrupt(_))));
    }

    #[test]
    fn altered_config_is_shape_mismatch() {
        let bytes = encode(&small(), &CheckpointMeta::default()).unwrap();
        let text = String::from_utf8_lossy(&bytes).into_owned();
        assert!(text.contains("\"lstm1_hidden\":5"));
        let altered: Vec<u8> = {
            let needle = b"\"lstm1_hidden\":5";
            let pos = bytes.windows(needle.len()).position(|w| w == needle).unwrap();
            let mut b = bytes.clone();
            b[pos + needle.len() - 1] = b'7';
            b
        };
        assert!(matches!(decode(&altered), Err(Error::Shape(_))));
    }

    #[test]
    fn wrong_version_and_magic() {
        let mut bytes = encode(&small(), &CheckpointMeta::default()).unwrap();
        bytes[8] = 9;
        assert!(matches!(decode(&bytes), Err(Error::Version { found: 9, .. })));
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::Corrupt(_))));
    }
}
