//! Versioned binary checkpoints: magic, format version, a JSON header and
//! little-endian `f32` weight blobs in column-major order.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ae_init;
use super::model::{AeHyperparams, AutoencoderModel};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ANRVAECK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    hyperparams: AeHyperparams,
    height: usize,
    width: usize,
    tensors: Vec<TensorInfo>,
}

pub fn encode_checkpoint(model: &AutoencoderModel) -> Result<Vec<u8>> {
    let header = Header {
        version: CHECKPOINT_VERSION,
        hyperparams: model.hyper.clone(),
        height: model.height,
        width: model.width,
        tensors: model
            .weights
            .names()
            .into_iter()
            .zip(model.weights.tensors())
            .map(|(name, t)| TensorInfo {
                name: name.to_string(),
                rows: t.nrows(),
                cols: t.ncols(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + model.parameter_count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for t in model.weights.tensors() {
        for v in t.iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<AutoencoderModel> {
    let bad = |m: String| Error::Checkpoint(m);
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not an autoencoder checkpoint".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let len = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(16..16 + len).ok_or_else(|| bad("truncated header".into()))?;
    let header: Header = serde_json::from_slice(body)?;
    let mut model = ae_init(&header.hyperparams, header.height, header.width)?;
    let names = model.weights.names();
    if names.len() != header.tensors.len() {
        return Err(bad(format!(
            "expected {} tensors, found {}",
            names.len(),
            header.tensors.len()
        )));
    }
    let mut cursor = &bytes[16 + len..];
    for ((name, t), info) in names.into_iter().zip(model.weights.tensors_mut()).zip(&header.tensors) {
        if info.name != name || info.rows != t.nrows() || info.cols != t.ncols() {
            return Err(bad(format!("tensor {} does not match architecture", info.name)));
        }
        let mut values = Vec::with_capacity(t.len());
        for _ in 0..t.len() {
            let mut b = [0u8; 4];
            cursor
                .read_exact(&mut b)
                .map_err(|_| bad(format!("truncated blob for {name}")))?;
            values.push(f32::from_le_bytes(b) as f64);
        }
        *t = DMatrix::from_vec(info.rows, info.cols, values);
    }
    if !cursor.is_empty() {
        return Err(bad(format!("{} trailing bytes", cursor.len())));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &AutoencoderModel, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let bytes = encode_checkpoint(model)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<AutoencoderModel> {
    decode_checkpoint(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_rounds_to_f32() {
        let hp = AeHyperparams {
            features: 2,
            seed: 1,
            ..AeHyperparams::default()
        };
        let model = ae_init(&hp, 8, 16).unwrap();
        let back = decode_checkpoint(&encode_checkpoint(&model).unwrap()).unwrap();
        assert_eq!(back.hyper, model.hyper);
        for (a, b) in back.weights.tensors().iter().zip(model.weights.tensors()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
        let again = decode_checkpoint(&encode_checkpoint(&back).unwrap()).unwrap();
        assert_eq!(again, back);
    }

    #[test]
    fn corrupt_input_rejected() {
        let hp = AeHyperparams {
            features: 1,
            with_linear_layer: false,
            ..AeHyperparams::default()
        };
        let mut bytes = encode_checkpoint(&ae_init(&hp, 8, 8).unwrap()).unwrap();
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        bytes[8] = 9;
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::Checkpoint(_))));
        assert!(decode_checkpoint(b"short").is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m/model.ckpt");
        let model = ae_init(
            &AeHyperparams {
                features: 1,
                ..AeHyperparams::default()
            },
            8,
            8,
        )
        .unwrap();
        save_checkpoint(&model, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.parameter_count(), model.parameter_count());
    }
}
