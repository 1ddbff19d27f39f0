//! Versioned binary checkpoints with a JSON sidecar.
//!
//! Binary layout, little-endian:
//!
//! ```text
//! magic "MSLSTMCK" | u32 version | u32 input_dim | u32 hidden | u32 layers
//! u32 classes | gate order "IFGO"
//! per layer: input kernel, recurrent kernel, bias (f64)
//! head weights, head bias (f64)
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AdamConfig, Architecture, LstmModel, TrainConfig, CLASSES};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"MSLSTMCK";
const GATE_ORDER: &[u8; 4] = b"IFGO";

/// Hyperparameters and training summary stored next to a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub architecture: Architecture,
    pub adam: AdamConfig,
    pub train: TrainConfig,
    pub training_samples: usize,
    pub positive_samples: usize,
    pub loss_history: Vec<f64>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub fn encode(model: &LstmModel) -> Vec<u8> {
    let mut buf = Vec::with_capacity(32 + 8 * model.parameter_count());
    buf.extend_from_slice(MAGIC);
    let a = model.arch;
    for v in [
        CHECKPOINT_VERSION,
        a.input_dim as u32,
        a.hidden as u32,
        a.layers as u32,
        CLASSES as u32,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(GATE_ORDER);
    for t in model.tensors() {
        for v in t {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<LstmModel> {
    let bad = |msg: String| Error::format("checkpoint", path, msg);
    if bytes.len() < 32 || &bytes[..8] != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap());
    if word(0) != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {}", word(0))));
    }
    if word(4) as usize != CLASSES || &bytes[28..32] != GATE_ORDER {
        return Err(bad("unsupported head or gate order".into()));
    }
    let arch = Architecture {
        input_dim: word(1) as usize,
        hidden: word(2) as usize,
        layers: word(3) as usize,
    };
    let mut model = LstmModel::zeros(arch);
    let expected = 32 + 8 * model.parameter_count();
    if bytes.len() != expected {
        return Err(bad(format!(
            "expected {expected} bytes, found {}",
            bytes.len()
        )));
    }
    let mut values = bytes[32..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for t in model.tensors_mut() {
        for v in t.iter_mut() {
            *v = values.next().expect("length checked");
        }
    }
    Ok(model)
}

pub fn write_checkpoint(path: &Path, model: &LstmModel, meta: &CheckpointMeta) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, encode(model)).map_err(|e| Error::io(path, e))?;
    let sidecar = sidecar_path(path);
    let json = serde_json::to_string_pretty(meta).expect("metadata serializes");
    std::fs::write(&sidecar, json + "\n").map_err(|e| Error::io(&sidecar, e))
}

pub fn read_checkpoint(path: &Path) -> Result<(LstmModel, Option<CheckpointMeta>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let model = decode(&bytes, path)?;
    let sidecar = sidecar_path(path);
    let meta = match std::fs::read_to_string(&sidecar) {
        Ok(text) => Some(
            serde_json::from_str(&text)
                .map_err(|e| Error::format("checkpoint sidecar", &sidecar, e))?,
        ),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(Error::io(&sidecar, e)),
    };
    Ok((model, meta))
}
