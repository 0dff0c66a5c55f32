//! `model.ckpt`: magic line, little-endian u64 header length, JSON header,
//! parameter values as little-endian binary64 in declaration order, then the
//! SHA-256 of everything before it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::params::ParamStore;
use super::NnError;

const MAGIC: &[u8] = b"METASENSE-CKPT-1\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    /// Caller-defined architecture description.
    pub architecture: serde_json::Value,
    pub tensors: Vec<(String, Vec<usize>)>,
}

pub fn encode_checkpoint(architecture: &serde_json::Value, store: &ParamStore) -> Vec<u8> {
    let header = CheckpointHeader {
        architecture: architecture.clone(),
        tensors: store.layout(),
    };
    let json = serde_json::to_vec(&header).expect("header serialises");
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in store.flat_values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn save_checkpoint(path: &Path, architecture: &serde_json::Value, store: &ParamStore) -> Result<(), NnError> {
    fs::write(path, encode_checkpoint(architecture, store)).map_err(|e| NnError::Io(path.display().to_string(), e))
}

/// Parse a checkpoint into its header and flat parameter values.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(CheckpointHeader, Vec<f64>), NnError> {
    let bad = |why: &str| NnError::Checkpoint(why.to_string());
    if bytes.len() < MAGIC.len() + 8 + 32 || !bytes.starts_with(MAGIC) {
        return Err(bad("not a checkpoint file"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(bad("checksum mismatch"));
    }
    let rest = &body[MAGIC.len()..];
    let hlen = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes")) as usize;
    if rest.len() < 8 + hlen {
        return Err(bad("truncated header"));
    }
    let header: CheckpointHeader =
        serde_json::from_slice(&rest[8..8 + hlen]).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    let data = &rest[8 + hlen..];
    let expected: usize = header.tensors.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    if data.len() != expected * 8 {
        return Err(bad("parameter payload length does not match header"));
    }
    let values = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((header, values))
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, Vec<f64>), NnError> {
    let bytes = fs::read(path).map_err(|e| NnError::Io(path.display().to_string(), e))?;
    decode_checkpoint(&bytes)
}

/// Copy checkpoint values into `store`, which must have the same layout.
pub fn restore_into(header: &CheckpointHeader, values: &[f64], store: &mut ParamStore) -> Result<(), NnError> {
    if header.tensors != store.layout() {
        return Err(NnError::Checkpoint("parameter layout differs from the model".into()));
    }
    store.set_flat_values(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::Tensor;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("a", Tensor::new(vec![2], vec![1.5, -2.0]).unwrap());
        s.add("b", Tensor::new(vec![1, 1], vec![f64::MIN_POSITIVE]).unwrap());
        s
    }

    #[test]
    fn round_trip_is_exact() {
        let arch = serde_json::json!({"kind": "toy"});
        let bytes = encode_checkpoint(&arch, &store());
        let (h, v) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(h.architecture, arch);
        let mut fresh = store();
        fresh.set_flat_values(&[0.0, 0.0, 0.0]).unwrap();
        restore_into(&h, &v, &mut fresh).unwrap();
        assert_eq!(fresh, store());
    }

    #[test]
    fn corruption_and_layout_errors() {
        let arch = serde_json::json!(null);
        let mut bytes = encode_checkpoint(&arch, &store());
        let n = bytes.len();
        bytes[n - 40] ^= 0x10;
        assert!(decode_checkpoint(&bytes).is_err());
        let (h, v) = decode_checkpoint(&encode_checkpoint(&arch, &store())).unwrap();
        let mut other = ParamStore::new();
        other.add("a", Tensor::zeros(&[3]));
        assert!(restore_into(&h, &v, &mut other).is_err());
    }
}
