//! Safetensors container I/O.
//!
//! Layout: an 8-byte little-endian header length, a JSON header padded with
//! spaces to a multiple of 8 bytes, then the raw little-endian payload.
//! Writing is done here so that header key order (and therefore the output
//! bytes) is fixed; reading goes through the `safetensors` crate.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use half::{bf16, f16};
use memmap2::Mmap;
use nalgebra::DMatrix;
use safetensors::tensor::{Dtype, Metadata, TensorInfo};
use safetensors::SafeTensors;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

/// Tensors keyed by name. Iteration order is the on-disk order.
pub type TensorMap = BTreeMap<String, DMatrix<f64>>;

/// Element type used when writing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StoreDtype {
    #[default]
    F64,
    /// Values are rounded to the nearest `f32`.
    F32,
}

impl StoreDtype {
    fn tag(self) -> &'static str {
        match self {
            StoreDtype::F64 => "F64",
            StoreDtype::F32 => "F32",
        }
    }

    fn width(self) -> usize {
        match self {
            StoreDtype::F64 => 8,
            StoreDtype::F32 => 4,
        }
    }
}

/// Serializes `tensors` into safetensors bytes.
///
/// Tensors are laid out in name order; `metadata` becomes the
/// `__metadata__` entry when non-empty. Identical input gives identical
/// bytes.
pub fn encode_tensors<'a, I>(
    tensors: I,
    dtype: StoreDtype,
    metadata: &BTreeMap<String, String>,
) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = (&'a str, &'a DMatrix<f64>)>,
{
    let mut seen = HashSet::new();
    let mut entries: Vec<(&str, &DMatrix<f64>)> = Vec::new();
    for (name, matrix) in tensors {
        if name.is_empty() {
            return Err(Error::InvalidTensor("empty tensor name".into()));
        }
        if name == "__metadata__" {
            return Err(Error::InvalidTensor("reserved tensor name __metadata__".into()));
        }
        if !seen.insert(name) {
            return Err(Error::DuplicateName(name.to_string()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        entries.push((name, matrix));
    }
    entries.sort_by(|a, b| a.0.cmp(b.0));

    let mut header = Map::new();
    if !metadata.is_empty() {
        let meta: Map<String, Value> = metadata
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.clone())))
            .collect();
        header.insert("__metadata__".into(), Value::Object(meta));
    }
    let mut offset = 0usize;
    for (name, matrix) in &entries {
        let len = matrix.len() * dtype.width();
        header.insert(
            (*name).to_string(),
            json!({
                "dtype": dtype.tag(),
                "shape": [matrix.nrows(), matrix.ncols()],
                "data_offsets": [offset, offset + len],
            }),
        );
        offset += len;
    }

    let mut header_bytes = serde_json::to_vec(&Value::Object(header))?;
    let padded = header_bytes.len().next_multiple_of(8);
    header_bytes.resize(padded, b' ');

    let mut out = Vec::with_capacity(8 + header_bytes.len() + offset);
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for (_, matrix) in &entries {
        // nalgebra is column-major; the container is row-major.
        for r in 0..matrix.nrows() {
            for c in 0..matrix.ncols() {
                let v = matrix[(r, c)];
                match dtype {
                    StoreDtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
                    StoreDtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                }
            }
        }
    }
    Ok(out)
}

/// Writes `tensors` to `path` (see [`encode_tensors`]).
pub fn emit_tensors<'a, I>(
    tensors: I,
    path: &Path,
    dtype: StoreDtype,
    metadata: &BTreeMap<String, String>,
) -> Result<()>
where
    I: IntoIterator<Item = (&'a str, &'a DMatrix<f64>)>,
{
    let bytes = encode_tensors(tensors, dtype, metadata)?;
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    file.sync_all().map_err(|e| Error::io(path, e))
}

/// Reads every tensor of a file, widened to `f64`. One-dimensional tensors
/// come back as a single row.
pub fn read_tensors(path: &Path) -> Result<TensorMap> {
    let file = TensorFile::open(path)?;
    let mut out = TensorMap::new();
    for name in file.names() {
        out.insert(name.clone(), file.matrix(&name)?);
    }
    Ok(out)
}

/// Reads only the `__metadata__` map of a file.
pub fn read_metadata(path: &Path) -> Result<BTreeMap<String, String>> {
    let file = TensorFile::open(path)?;
    Ok(file
        .metadata
        .metadata()
        .as_ref()
        .map(|m| m.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
        .unwrap_or_default())
}

/// A memory-mapped safetensors file with its parsed header.
///
/// Tensors are decoded on demand, so a multi-gigabyte checkpoint can be
/// walked one matrix at a time.
pub struct TensorFile {
    path: PathBuf,
    mmap: Mmap,
    data_start: usize,
    metadata: Metadata,
}

impl std::fmt::Debug for TensorFile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TensorFile").field("path", &self.path).finish()
    }
}

impl TensorFile {
    pub fn open(path: &Path) -> Result<Self> {
        let unreadable = |reason: String| Error::UnreadableFile {
            path: path.to_path_buf(),
            reason,
        };
        let file = File::open(path).map_err(|e| unreadable(e.to_string()))?;
        // SAFETY: the map is read-only and lives as long as `self`; callers
        // must not truncate checkpoint files while they are being analyzed.
        let mmap = unsafe { Mmap::map(&file) }.map_err(|e| unreadable(e.to_string()))?;
        let (header_len, metadata) =
            SafeTensors::read_metadata(&mmap).map_err(|e| unreadable(e.to_string()))?;
        // Full validation of offsets against the buffer.
        SafeTensors::deserialize(&mmap).map_err(|e| unreadable(e.to_string()))?;
        Ok(Self {
            path: path.to_path_buf(),
            mmap,
            data_start: 8 + header_len,
            metadata,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Tensor names in on-disk order.
    pub fn names(&self) -> Vec<String> {
        self.metadata.offset_keys()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.metadata.info(name).is_some()
    }

    /// Shape as (rows, cols); `None` if absent or not one/two-dimensional.
    pub fn shape(&self, name: &str) -> Option<(usize, usize)> {
        self.metadata.info(name).and_then(|info| as_2d(&info.shape))
    }

    pub fn matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        let info = self.metadata.info(name).ok_or_else(|| Error::UnreadableFile {
            path: self.path.clone(),
            reason: format!("no tensor named {name:?}"),
        })?;
        let (rows, cols) = as_2d(&info.shape).ok_or_else(|| {
            Error::InvalidTensor(format!("{name}: unsupported shape {:?}", info.shape))
        })?;
        let bytes = self.bytes(info);
        let values = decode(info.dtype, bytes).ok_or_else(|| {
            Error::InvalidTensor(format!("{name}: unsupported dtype {:?}", info.dtype))
        })?;
        Ok(DMatrix::from_row_slice(rows, cols, &values))
    }

    fn bytes(&self, info: &TensorInfo) -> &[u8] {
        let (start, end) = info.data_offsets;
        &self.mmap[self.data_start + start..self.data_start + end]
    }
}

fn as_2d(shape: &[usize]) -> Option<(usize, usize)> {
    match *shape {
        [n] => Some((1, n)),
        [r, c] => Some((r, c)),
        _ => None,
    }
}

fn decode(dtype: Dtype, bytes: &[u8]) -> Option<Vec<f64>> {
    let values = match dtype {
        Dtype::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F16 => bytes
            .chunks_exact(2)
            .map(|c| f16::from_le_bytes([c[0], c[1]]).to_f64())
            .collect(),
        Dtype::BF16 => bytes
            .chunks_exact(2)
            .map(|c| bf16::from_le_bytes([c[0], c[1]]).to_f64())
            .collect(),
        _ => return None,
    };
    Some(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_meta() -> BTreeMap<String, String> {
        BTreeMap::new()
    }

    #[test]
    fn empty_map_is_a_valid_file() {
        let bytes = encode_tensors(std::iter::empty(), StoreDtype::F64, &no_meta()).unwrap();
        let st = SafeTensors::deserialize(&bytes).unwrap();
        assert!(st.is_empty());
        assert_eq!(bytes.len() % 8, 0);
    }

    #[test]
    fn header_is_padded_and_parseable() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let bytes = encode_tensors([("w", &m)], StoreDtype::F64, &no_meta()).unwrap();
        let n = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        assert_eq!(n % 8, 0);
        let header: Value = serde_json::from_slice(&bytes[8..8 + n]).unwrap();
        assert_eq!(header["w"]["dtype"], "F64");
        assert_eq!(header["w"]["shape"], json!([2, 2]));
        assert_eq!(header["w"]["data_offsets"], json!([0, 32]));
        // Row-major payload.
        let first = f64::from_le_bytes(bytes[8 + n + 8..8 + n + 16].try_into().unwrap());
        assert_eq!(first, 2.0);
    }

    #[test]
    fn duplicate_names_rejected() {
        let m = DMatrix::from_element(1, 1, 1.0);
        let err = encode_tensors([("a", &m), ("a", &m)], StoreDtype::F64, &no_meta()).unwrap_err();
        assert!(matches!(err, Error::DuplicateName(ref n) if n == "a"));
    }

    #[test]
    fn empty_name_and_non_finite_rejected() {
        let m = DMatrix::from_element(1, 1, 1.0);
        assert!(encode_tensors([("", &m)], StoreDtype::F64, &no_meta()).is_err());
        let bad = DMatrix::from_element(1, 1, f64::INFINITY);
        assert!(matches!(
            encode_tensors([("x", &bad)], StoreDtype::F64, &no_meta()),
            Err(Error::NonFinite)
        ));
    }

    #[test]
    fn half_precision_widens() {
        assert_eq!(decode(Dtype::F16, &f16::from_f64(0.5).to_le_bytes()).unwrap(), vec![0.5]);
        assert_eq!(
            decode(Dtype::BF16, &bf16::from_f64(-2.0).to_le_bytes()).unwrap(),
            vec![-2.0]
        );
        assert!(decode(Dtype::I64, &[0u8; 8]).is_none());
    }

    #[test]
    fn metadata_survives_third_party_reader() {
        let mut meta = BTreeMap::new();
        meta.insert("format".to_string(), "pt".to_string());
        meta.insert("run".to_string(), "abc".to_string());
        let m = DMatrix::from_element(1, 3, 0.25);
        let bytes = encode_tensors([("t", &m)], StoreDtype::F32, &meta).unwrap();
        let (_, parsed) = SafeTensors::read_metadata(&bytes).unwrap();
        let got = parsed.metadata().clone().unwrap();
        assert_eq!(got.get("run").map(String::as_str), Some("abc"));
        assert_eq!(got.len(), 2);
    }
}
