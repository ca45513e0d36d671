//! Model checkpoints: the 8-byte magic `IFTCNCKP`, a little-endian `u32`
//! header length, a JSON header (format version, network configuration,
//! scaling scheme, parameter count, free-form metadata), then the parameters
//! as little-endian `f64` in layout order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NnError, TcnConfig, TcnModel};
use crate::scaling::ScalingScheme;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"IFTCNCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    config: TcnConfig,
    scaling: ScalingScheme,
    n_params: usize,
    #[serde(default)]
    meta: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: TcnModel,
    /// The scheme the network was trained with.
    pub scaling: ScalingScheme,
    pub meta: serde_json::Value,
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), NnError> {
    let header = Header {
        version: CHECKPOINT_VERSION,
        config: ckpt.model.config.clone(),
        scaling: ckpt.scaling.clone(),
        n_params: ckpt.model.n_params(),
        meta: ckpt.meta.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    let mut buf = Vec::with_capacity(12 + json.len() + 8 * header.n_params);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for v in &ckpt.model.params {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf).map_err(|source| NnError::Io { path: path.display().to_string(), source })
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, NnError> {
    let bytes = std::fs::read(path).map_err(|source| NnError::Io { path: path.display().to_string(), source })?;
    if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(NnError::Checkpoint(format!("{} is not a checkpoint (bad magic)", path.display())));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(12..12 + hlen).ok_or_else(|| NnError::Checkpoint("truncated header".into()))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(NnError::Checkpoint(format!("unsupported checkpoint version {}", header.version)));
    }
    let payload = &bytes[12 + hlen..];
    if payload.len() != 8 * header.n_params {
        return Err(NnError::Checkpoint(format!("expected {} parameters, found {} bytes", header.n_params, payload.len())));
    }
    let params = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let model = TcnModel::from_params(header.config, params)?;
    Ok(Checkpoint { model, scaling: header.scaling, meta: header.meta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scaling::{ScalingConfig, ScalingKind};

    #[test]
    fn round_trip() {
        let model = TcnModel::new(TcnConfig::default(), 5).unwrap();
        let scaling = ScalingScheme::fit(ScalingConfig::new(ScalingKind::MinMax), &[vec![1e-5, 3e-4], vec![2e-5, 6e-4]]).unwrap();
        let ckpt = Checkpoint { model, scaling, meta: serde_json::json!({"seed": 5}) };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        write_checkpoint(&path, &ckpt).unwrap();
        assert_eq!(read_checkpoint(&path).unwrap(), ckpt);
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 8);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(NnError::Checkpoint(_))));
    }
}
