//! Model checkpoint file.
//!
//! Layout: `SDCK` magic, u32 version, u64 header length, JSON header,
//! then little-endian f64 blobs: parameters, then (RNN only) BN running
//! means and running variances.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LogisticModel, Model, ModelKind, RnnModel, TrainConfig};
use crate::features::Preprocessing;

pub const MAGIC: &[u8; 4] = b"SDCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid checkpoint: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub feature_set: String,
    pub config: TrainConfig,
    pub config_hash: String,
    pub preprocessing: Preprocessing,
    pub best_epoch: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: ModelKind,
    n_features: usize,
    n_static: usize,
    hidden: usize,
    n_params: usize,
    n_buffers: usize,
    feature_set: String,
    config_hash: String,
    config: TrainConfig,
    preprocessing: Preprocessing,
    best_epoch: usize,
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), CheckpointError> {
    let (n_features, n_static) = ck.model.dims();
    let (hidden, buffers): (usize, Vec<&[f64]>) = match &ck.model {
        Model::Logistic(_) => (0, vec![]),
        Model::Rnn(m) => (m.hidden, vec![&m.running_mean, &m.running_var]),
    };
    let header = Header {
        kind: ck.model.kind(),
        n_features,
        n_static,
        hidden,
        n_params: ck.model.params().len(),
        n_buffers: buffers.iter().map(|b| b.len()).sum(),
        feature_set: ck.feature_set.clone(),
        config_hash: ck.config_hash.clone(),
        config: ck.config.clone(),
        preprocessing: ck.preprocessing.clone(),
        best_epoch: ck.best_epoch,
    };
    let json = serde_json::to_vec(&header).map_err(|e| CheckpointError::Format(e.to_string()))?;
    let err = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(err)?);
    let mut bytes = Vec::with_capacity(16 + json.len() + 8 * (header.n_params + header.n_buffers));
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for v in ck.model.params().iter().chain(buffers.into_iter().flatten()) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes).map_err(err)?;
    w.flush().map_err(err)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let err = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).map_err(err)?)
        .read_to_end(&mut bytes)
        .map_err(err)?;
    let bad = |m: &str| CheckpointError::Format(m.to_string());
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(bad("missing SDCK magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Format(format!("unsupported version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body_start = 16usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[16..body_start])
        .map_err(|e| CheckpointError::Format(e.to_string()))?;
    let body = &bytes[body_start..];
    if body.len() != 8 * (header.n_params + header.n_buffers) {
        return Err(bad("parameter blob size does not match header"));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let params = values[..header.n_params].to_vec();
    let model = match header.kind {
        ModelKind::Logistic => {
            let m = LogisticModel {
                n_features: header.n_features,
                n_static: header.n_static,
                params,
            };
            if m.params.len() != m.input_dim() + 1 {
                return Err(bad("logistic parameter count does not match dims"));
            }
            Model::Logistic(m)
        }
        ModelKind::Rnn => {
            let half = header.n_buffers / 2;
            let bufs = &values[header.n_params..];
            Model::Rnn(
                RnnModel::from_parts(
                    header.n_features,
                    header.n_static,
                    header.hidden,
                    header.config.bn_momentum,
                    header.config.bn_eps,
                    params,
                    bufs[..half].to_vec(),
                    bufs[half..].to_vec(),
                )
                .ok_or_else(|| bad("rnn parameter count does not match dims"))?,
            )
        }
    };
    Ok(Checkpoint {
        model,
        feature_set: header.feature_set,
        config: header.config,
        config_hash: header.config_hash,
        preprocessing: header.preprocessing,
        best_epoch: header.best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{ModelInput, StaticKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_both_kinds() {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let x = ModelInput::new(2, vec![0.5; 144], vec![1.0, 0.0], 0, true);
        let pre = Preprocessing::fit(std::slice::from_ref(&x), &[StaticKind::Numeric, StaticKind::OneHot]);
        let dir = tempfile::tempdir().unwrap();
        for model in [
            Model::Logistic(LogisticModel::init(2, 2, &mut r)),
            Model::Rnn(RnnModel::init(2, 2, 6, 0.1, 1e-5, &mut r)),
        ] {
            let ck = Checkpoint {
                model,
                feature_set: "custom".into(),
                config: TrainConfig::default(),
                config_hash: "abc".into(),
                preprocessing: pre.clone(),
                best_epoch: 3,
            };
            let p = dir.path().join(format!("{}.ck", ck.model.kind()));
            save_checkpoint(&p, &ck).unwrap();
            let back = load_checkpoint(&p).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.model.predict(&x).unwrap(), ck.model.predict(&x).unwrap());
        }
    }

    #[test]
    fn rejects_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.ck");
        std::fs::write(&p, b"SDCK\x01\x00\x00\x00\xff\x00\x00\x00\x00\x00\x00\x00{}").unwrap();
        assert!(matches!(load_checkpoint(&p), Err(CheckpointError::Format(_))));
    }
}
