//! Versioned binary checkpoints.
//!
//! Layout: magic `GCECKPT1`, version u32, a JSON metadata blob
//! (config, codec, epoch, histories, optimizer step), then named
//! tensors as (name, rows, cols, little-endian f64 data), and a
//! trailing SHA-256 over everything before it. Tensor order is sorted
//! by name, so saving a loaded checkpoint reproduces the file
//! byte for byte.

use super::{AdamState, EpochStats};
use crate::graph::FeatureCodec;
use crate::model::{GceConfig, GceModel};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 8] = b"GCECKPT1";
const VERSION: u32 = 1;

/// On-disk version written into (and required of) every checkpoint.
pub const CHECKPOINT_FORMAT_VERSION: u32 = VERSION;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("file too short to be a checkpoint")]
    TooShort,
    #[error("bad magic; not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checksum mismatch; file is truncated or corrupted")]
    ChecksumMismatch,
    #[error("bad metadata: {0}")]
    Metadata(#[from] serde_json::Error),
    #[error("malformed checkpoint body: {0}")]
    Malformed(String),
    #[error("checkpoint is missing tensor {0}")]
    MissingTensor(String),
    #[error("checkpoint has unexpected tensor {0}")]
    UnexpectedTensor(String),
    #[error("tensor {name} has shape {got_rows}x{got_cols}, model wants {want_rows}x{want_cols}")]
    ShapeMismatch {
        name: String,
        got_rows: usize,
        got_cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error("checkpoint config is invalid: {0}")]
    BadConfig(String),
}

/// A complete training snapshot: everything needed to resume or to
/// rebuild the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: GceConfig,
    pub codec: FeatureCodec,
    pub num_classes: Option<usize>,
    /// Epochs completed so far.
    pub epoch: usize,
    pub loss_history: Vec<f64>,
    pub accuracy_history: Vec<EpochStats>,
    /// Model parameters by name; tensors here never carry grad flags.
    pub params: BTreeMap<String, Tensor>,
    pub adam: AdamState,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: GceConfig,
    codec: FeatureCodec,
    num_classes: Option<usize>,
    epoch: usize,
    loss_history: Vec<f64>,
    accuracy_history: Vec<EpochStats>,
    adam_step: u64,
}

fn plain(t: &Tensor) -> Tensor {
    Tensor::matrix(t.rows(), t.cols(), t.data().to_vec())
}

impl Checkpoint {
    pub fn from_model(
        model: &GceModel,
        codec: &FeatureCodec,
        epoch: usize,
        loss_history: Vec<f64>,
        accuracy_history: Vec<EpochStats>,
        adam: AdamState,
    ) -> Checkpoint {
        let mut params = BTreeMap::new();
        model.visit_params(&mut |name, t| {
            params.insert(name, plain(t));
        });
        Checkpoint {
            config: model.config().clone(),
            codec: codec.clone(),
            num_classes: model.num_classes(),
            epoch,
            loss_history,
            accuracy_history,
            params,
            adam,
        }
    }

    /// Rebuilds the model exactly: fresh structure from the stored
    /// config, every parameter overwritten from the stored tensors.
    pub fn instantiate(&self) -> Result<GceModel, CheckpointError> {
        let mut model = GceModel::new(self.config.clone(), 0)
            .map_err(|e| CheckpointError::BadConfig(e.to_string()))?;
        if let Some(classes) = self.num_classes {
            model.attach_head(classes, 0);
        }
        let mut missing = None;
        let mut seen = 0usize;
        model.visit_params_mut(&mut |name, t| {
            match self.params.get(&name) {
                None => missing = missing.take().or(Some(name)),
                Some(stored) => {
                    if stored.rows() != t.rows() || stored.cols() != t.cols() {
                        missing = missing.take().or(Some(format!("{name} (shape)")));
                    } else {
                        t.data_mut().copy_from_slice(stored.data());
                        seen += 1;
                    }
                }
            };
        });
        if let Some(name) = missing {
            return Err(CheckpointError::MissingTensor(name));
        }
        if seen != self.params.len() {
            let model_names: std::collections::HashSet<String> =
                model.param_names().into_iter().collect();
            let extra = self
                .params
                .keys()
                .find(|k| !model_names.contains(*k))
                .cloned()
                .unwrap_or_default();
            return Err(CheckpointError::UnexpectedTensor(extra));
        }
        Ok(model)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        let meta = Meta {
            config: self.config.clone(),
            codec: self.codec.clone(),
            num_classes: self.num_classes,
            epoch: self.epoch,
            loss_history: self.loss_history.clone(),
            accuracy_history: self.accuracy_history.clone(),
            adam_step: self.adam.step_count(),
        };
        let meta_json = serde_json::to_vec(&meta)?;
        buf.extend_from_slice(&(meta_json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&meta_json);

        let mut tensors: BTreeMap<String, (usize, usize, Vec<f64>)> = BTreeMap::new();
        for (name, t) in &self.params {
            tensors.insert(format!("param.{name}"), (t.rows(), t.cols(), t.data().to_vec()));
        }
        for (name, (m, v)) in self.adam.moments() {
            tensors.insert(format!("adam.m.{name}"), (1, m.len(), m.clone()));
            tensors.insert(format!("adam.v.{name}"), (1, v.len(), v.clone()));
        }
        buf.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
        for (name, (rows, cols, data)) in &tensors {
            buf.extend_from_slice(&(name.len() as u64).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(*rows as u64).to_le_bytes());
            buf.extend_from_slice(&(*cols as u64).to_le_bytes());
            for x in data {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
        if bytes.len() < MAGIC.len() + 4 + 32 {
            return Err(CheckpointError::TooShort);
        }
        let (body, checksum) = bytes.split_at(bytes.len() - 32);
        if &body[..8] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = u32::from_le_bytes(body[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        if Sha256::digest(body).as_slice() != checksum {
            return Err(CheckpointError::ChecksumMismatch);
        }

        let mut cur = Cursor { bytes: body, pos: 12 };
        let meta_len = cur.u64()? as usize;
        let meta_bytes = cur.take(meta_len)?;
        let meta: Meta = serde_json::from_slice(meta_bytes)?;

        let count = cur.u64()? as usize;
        let mut params = BTreeMap::new();
        let mut m_slots: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut v_slots: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for _ in 0..count {
            let name_len = cur.u64()? as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| CheckpointError::Malformed("tensor name is not UTF-8".into()))?
                .to_string();
            let rows = cur.u64()? as usize;
            let cols = cur.u64()? as usize;
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| CheckpointError::Malformed("tensor shape overflow".into()))?;
            let raw = cur.take(n * 8)?;
            let data: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if let Some(p) = name.strip_prefix("param.") {
                params.insert(p.to_string(), Tensor::matrix(rows, cols, data));
            } else if let Some(p) = name.strip_prefix("adam.m.") {
                m_slots.insert(p.to_string(), data);
            } else if let Some(p) = name.strip_prefix("adam.v.") {
                v_slots.insert(p.to_string(), data);
            } else {
                return Err(CheckpointError::Malformed(format!("unknown tensor section {name}")));
            }
        }
        if cur.pos != body.len() {
            return Err(CheckpointError::Malformed("trailing bytes after tensors".into()));
        }
        if m_slots.len() != v_slots.len()
            || m_slots.keys().zip(v_slots.keys()).any(|(a, b)| a != b)
        {
            return Err(CheckpointError::Malformed("optimizer moment slots disagree".into()));
        }
        let moments = m_slots
            .into_iter()
            .zip(v_slots.into_values())
            .map(|((name, m), v)| (name, (m, v)))
            .collect();
        Ok(Checkpoint {
            config: meta.config,
            codec: meta.codec,
            num_classes: meta.num_classes,
            epoch: meta.epoch,
            loss_history: meta.loss_history,
            accuracy_history: meta.accuracy_history,
            params,
            adam: AdamState::from_parts(meta.adam_step, moments),
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CheckpointError::Malformed("record runs past end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    std::fs::write(path, ckpt.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::batch_graphs;
    use crate::graph::Graph;
    use crate::tensor::Tape;

    fn small_model() -> GceModel {
        let cfg = GceConfig {
            num_layers: 2,
            hidden_channels: 4,
            pooling_rate: 0.5,
            use_residual: true,
            edge_updates: true,
            train_epsilon: true,
            node_in_dim: 8,
            edge_in_dim: 5,
        };
        GceModel::new(cfg, 3).unwrap()
    }

    fn sample_checkpoint() -> Checkpoint {
        let mut model = small_model();
        model.attach_head(2, 4);
        let mut adam = AdamState::new();
        let grads = std::collections::HashMap::from([(
            "node_in.b1".to_string(),
            Tensor::matrix(1, 4, vec![0.1, -0.2, 0.3, 0.05]),
        )]);
        adam.step(&super::super::AdamConfig::default(), &grads, |f| model.visit_params_mut(f))
            .unwrap();
        Checkpoint::from_model(
            &model,
            &FeatureCodec::molecule(),
            7,
            vec![0.9, 0.5, 0.30000000000000004],
            vec![EpochStats { epoch: 1, loss: 0.6, train_accuracy: 0.75, val_accuracy: Some(0.5) }],
            adam,
        )
    }

    #[test]
    fn round_trip_preserves_everything() {
        let ckpt = sample_checkpoint();
        let bytes = ckpt.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(ckpt, back);
    }

    #[test]
    fn save_of_load_is_byte_identical() {
        let ckpt = sample_checkpoint();
        let bytes = ckpt.to_bytes().unwrap();
        let again = Checkpoint::from_bytes(&bytes).unwrap().to_bytes().unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ckpt = sample_checkpoint();
        save_checkpoint(&path, &ckpt).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(ckpt, back);
    }

    #[test]
    fn instantiate_restores_forward_behaviour_bitwise() {
        let model = small_model();
        let ckpt = Checkpoint::from_model(
            &model,
            &FeatureCodec::molecule(),
            0,
            vec![],
            vec![],
            AdamState::new(),
        );
        let rebuilt = ckpt.instantiate().unwrap();
        assert_eq!(model, rebuilt);
        let g = Graph::from_categories(
            &FeatureCodec::molecule(),
            &[0, 1, 2],
            &[(0, 1, 0), (1, 2, 1)],
            None,
        )
        .unwrap();
        let run = |m: &GceModel| {
            let mut tape = Tape::new();
            let batch = batch_graphs([&g]);
            let out = m.forward(&mut tape, &batch);
            tape.value(out.node_recon).data().to_vec()
        };
        assert_eq!(run(&model), run(&rebuilt));
    }

    #[test]
    fn truncation_fails_the_checksum() {
        let bytes = sample_checkpoint().to_bytes().unwrap();
        let cut = &bytes[..bytes.len() - 40];
        match Checkpoint::from_bytes(cut) {
            Err(CheckpointError::ChecksumMismatch) => {}
            other => panic!("expected checksum error, got {other:?}"),
        }
    }

    #[test]
    fn bitflip_fails_the_checksum() {
        let mut bytes = sample_checkpoint().to_bytes().unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(CheckpointError::ChecksumMismatch)
        ));
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let mut bytes = sample_checkpoint().to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn future_version_is_rejected() {
        let ckpt = sample_checkpoint();
        let mut bytes = ckpt.to_bytes().unwrap();
        bytes[8..12].copy_from_slice(&9u32.to_le_bytes());
        // Fix the checksum so only the version differs.
        let body_len = bytes.len() - 32;
        let digest = Sha256::digest(&bytes[..body_len]);
        let tail = bytes.len() - 32;
        bytes[tail..].copy_from_slice(&digest);
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(CheckpointError::UnsupportedVersion(9))
        ));
    }

    #[test]
    fn missing_tensor_blocks_instantiation() {
        let mut ckpt = sample_checkpoint();
        ckpt.params.remove("head.w2");
        assert!(matches!(
            ckpt.instantiate(),
            Err(CheckpointError::MissingTensor(n)) if n == "head.w2"
        ));
    }

    #[test]
    fn unexpected_tensor_blocks_instantiation() {
        let mut ckpt = sample_checkpoint();
        ckpt.params.insert("bogus.w1".to_string(), Tensor::zeros(1, 1));
        assert!(matches!(
            ckpt.instantiate(),
            Err(CheckpointError::UnexpectedTensor(n)) if n == "bogus.w1"
        ));
    }

    #[test]
    fn short_file_is_rejected() {
        assert!(matches!(Checkpoint::from_bytes(b"GCE"), Err(CheckpointError::TooShort)));
    }
}
