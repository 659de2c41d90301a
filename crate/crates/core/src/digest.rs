//! SHA-256 content digests used in manifests.

use serde::Serialize;
use sha2::{Digest, Sha256};

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensors::TensorMap;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Streaming digest of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Digest of the compact JSON encoding of `value`.
///
/// Struct fields serialize in declaration order and maps used in this crate
/// are `BTreeMap`s, so the encoding is canonical for our types.
pub fn json_digest<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(value)?))
}

/// Digest over names, shapes and exact `f64` bit patterns.
pub fn tensor_digest(tensors: &TensorMap) -> String {
    let mut hasher = Sha256::new();
    for (name, m) in tensors {
        hasher.update((name.len() as u64).to_le_bytes());
        hasher.update(name.as_bytes());
        hasher.update((m.nrows() as u64).to_le_bytes());
        hasher.update((m.ncols() as u64).to_le_bytes());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                hasher.update(m[(r, c)].to_bits().to_le_bytes());
            }
        }
    }
    hex::encode(hasher.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn tensor_digest_sees_single_bit_changes() {
        let mut map = TensorMap::new();
        map.insert("a".into(), DMatrix::from_element(2, 2, 1.0));
        let before = tensor_digest(&map);
        map.get_mut("a").unwrap()[(1, 1)] = f64::from_bits(1.0f64.to_bits() + 1);
        assert_ne!(before, tensor_digest(&map));
    }

    #[test]
    fn tensor_digest_sees_shape_changes() {
        let mut a = TensorMap::new();
        a.insert("a".into(), DMatrix::from_element(2, 3, 0.0));
        let mut b = TensorMap::new();
        b.insert("a".into(), DMatrix::from_element(3, 2, 0.0));
        assert_ne!(tensor_digest(&a), tensor_digest(&b));
    }
}
