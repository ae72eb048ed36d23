use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::codec::{to_bf16, Bf16Word};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

pub const TENSOR_MAGIC: &[u8; 8] = b"CTEN0001";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
    Bf16,
}

impl Dtype {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::F32 => "f32",
            Self::F64 => "f64",
            Self::Bf16 => "bf16",
        }
    }

    pub fn width(self) -> usize {
        match self {
            Self::F32 => 4,
            Self::F64 => 8,
            Self::Bf16 => 2,
        }
    }
}

impl FromStr for Dtype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Self::F32),
            "f64" => Ok(Self::F64),
            "bf16" => Ok(Self::Bf16),
            other => Err(Error::InvalidConfig(format!("unknown dtype {other:?}"))),
        }
    }
}

/// Named matrices in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorSet {
    names: Vec<String>,
    tensors: BTreeMap<String, DenseMatrix>,
}

impl TensorSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, m: DenseMatrix) {
        let name = name.into();
        if self.tensors.insert(name.clone(), m).is_none() {
            self.names.push(name);
        }
    }

    pub fn get(&self, name: &str) -> Option<&DenseMatrix> {
        self.tensors.get(name)
    }

    /// Like [`TensorSet::get`], failing with an ingestion error naming the tensor.
    pub fn require(&self, name: &str) -> Result<&DenseMatrix> {
        self.get(name).ok_or_else(|| Error::Ingest {
            tensor: name.to_string(),
            reason: "tensor not present".into(),
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DenseMatrix)> {
        self.names.iter().map(|n| (n.as_str(), &self.tensors[n]))
    }
}

/// Encodes tensors as `CTEN0001`: magic, u32 LE index length, index lines
/// `name dtype rows cols offset` (offset relative to payload start), then
/// little-endian row-major payloads.
pub fn encode_tensors(entries: &[(&str, &DenseMatrix, Dtype)]) -> Result<Vec<u8>> {
    let mut index = String::new();
    let mut payload = Vec::new();
    for (name, m, dtype) in entries {
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::InvalidConfig(format!("tensor name {name:?} must be non-empty without whitespace")));
        }
        index.push_str(&format!("{name} {} {} {} {}\n", dtype.as_str(), m.rows(), m.cols(), payload.len()));
        for &v in m.as_slice() {
            match dtype {
                Dtype::F64 => payload.extend_from_slice(&v.to_le_bytes()),
                Dtype::F32 => payload.extend_from_slice(&(v as f32).to_le_bytes()),
                Dtype::Bf16 => payload.extend_from_slice(&to_bf16(v).0.bits().to_le_bytes()),
            }
        }
    }
    let mut out = Vec::with_capacity(12 + index.len() + payload.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&(index.len() as u32).to_le_bytes());
    out.extend_from_slice(index.as_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn write_tensors(path: &Path, entries: &[(&str, &DenseMatrix, Dtype)]) -> Result<()> {
    std::fs::write(path, encode_tensors(entries)?)?;
    Ok(())
}

fn ingest_err(tensor: &str, reason: impl Into<String>) -> Error {
    Error::Ingest {
        tensor: tensor.to_string(),
        reason: reason.into(),
    }
}

pub fn decode_tensors(bytes: &[u8]) -> Result<TensorSet> {
    if bytes.len() < 12 || &bytes[..8] != TENSOR_MAGIC {
        return Err(ingest_err("<file>", "bad magic, expected CTEN0001"));
    }
    let index_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload_start = 12usize
        .checked_add(index_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| ingest_err("<index>", "index length exceeds file"))?;
    let index = std::str::from_utf8(&bytes[12..payload_start]).map_err(|_| ingest_err("<index>", "index is not UTF-8"))?;
    let payload = &bytes[payload_start..];

    let mut set = TensorSet::new();
    for line in index.lines().filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let name = fields.first().copied().unwrap_or("<index>");
        if fields.len() != 5 {
            return Err(ingest_err(name, format!("malformed index line {line:?}")));
        }
        let dtype: Dtype = fields[1].parse().map_err(|_| ingest_err(name, format!("unknown dtype {:?}", fields[1])))?;
        let num = |s: &str| s.parse::<usize>().map_err(|_| ingest_err(name, format!("bad number {s:?}")));
        let (rows, cols, offset) = (num(fields[2])?, num(fields[3])?, num(fields[4])?);
        if rows == 0 || cols == 0 {
            return Err(ingest_err(name, format!("empty shape {rows}x{cols}")));
        }
        if set.get(name).is_some() {
            return Err(ingest_err(name, "duplicate tensor name"));
        }
        let len = rows
            .checked_mul(cols)
            .and_then(|c| c.checked_mul(dtype.width()))
            .ok_or_else(|| ingest_err(name, "shape overflows"))?;
        let end = offset.checked_add(len).ok_or_else(|| ingest_err(name, "offset overflows"))?;
        if end > payload.len() {
            return Err(ingest_err(
                name,
                format!("payload needs bytes {offset}..{end} but only {} are present", payload.len()),
            ));
        }
        let raw = &payload[offset..end];
        let data: Vec<f64> = match dtype {
            Dtype::F64 => raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
            Dtype::F32 => raw
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
                .collect(),
            Dtype::Bf16 => raw
                .chunks_exact(2)
                .map(|c| Bf16Word(u16::from_le_bytes([c[0], c[1]])).to_f64())
                .collect(),
        };
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(ingest_err(name, format!("non-finite entry at ({}, {})", i / cols, i % cols)));
        }
        set.insert(name, DenseMatrix::new(rows, cols, data)?);
    }
    Ok(set)
}

pub fn ingest_tensors(path: &Path) -> Result<TensorSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    decode_tensors(&bytes)
}
