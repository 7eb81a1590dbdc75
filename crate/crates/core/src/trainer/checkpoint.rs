//! Binary parameter file: the 8-byte magic `ACEICDv1`, code count and feature
//! dimension as little-endian u64, the SHA-256 of the training config, then
//! every weight (row-major) and bias as little-endian f64.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::model::ModelParams;
use super::TrainConfig;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"ACEICDv1";
const HEADER_LEN: usize = 8 + 8 + 8 + 32;

pub fn config_hash(config: &TrainConfig) -> [u8; 32] {
    let json = serde_json::to_vec(config).expect("config serializes");
    Sha256::digest(json).into()
}

pub fn encode_checkpoint(params: &ModelParams, config: &TrainConfig) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * (params.weights().len() + params.biases().len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(params.n_codes() as u64).to_le_bytes());
    out.extend_from_slice(&(params.dim() as u64).to_le_bytes());
    out.extend_from_slice(&config_hash(config));
    for v in params.weights().iter().chain(params.biases()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parameters and the stored config hash.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelParams, [u8; 32])> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let (n_codes, dim) = (word(8) as usize, word(16) as usize);
    let hash: [u8; 32] = bytes[24..56].try_into().expect("32 bytes");
    let count = n_codes
        .checked_mul(dim)
        .and_then(|w| w.checked_add(n_codes))
        .ok_or_else(|| Error::Checkpoint("dimensions overflow".into()))?;
    if bytes.len() - HEADER_LEN != count * 8 {
        return Err(Error::Checkpoint(format!(
            "expected {count} parameters, found {} bytes",
            bytes.len() - HEADER_LEN
        )));
    }
    let mut values: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let biases = values.split_off(n_codes * dim);
    let params = ModelParams::from_parts(n_codes, dim, values, biases)?;
    Ok((params, hash))
}

pub fn save_checkpoint(params: &ModelParams, config: &TrainConfig, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(params, config)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelParams, [u8; 32])> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
