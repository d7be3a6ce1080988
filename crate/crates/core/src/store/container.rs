//! Byte-level reader/writer for the tensor container format.
//!
//! Layout: bytes 0..8 hold the header length `N` as a little-endian u64,
//! bytes 8..8+N hold a UTF-8 JSON object mapping tensor names to
//! `{"dtype", "shape", "data_offsets"}` entries (plus an optional
//! `"__metadata__"` string map), and the remainder is raw row-major
//! little-endian tensor data with offsets relative to the end of the header.
//!
//! The writer is canonical: tensors are serialized in ascending name order
//! with contiguous data regions starting at 0, the header carries no
//! insignificant whitespace, and `__metadata__` (when non-empty) comes
//! first with sorted keys. Equal checkpoints therefore produce equal bytes.

use std::collections::BTreeMap;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::store::{Dtype, Tensor, TensorData};

const HEADER_LEN_BYTES: u64 = 8;

/// One header entry: a named, typed, shaped region of the data section.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorMeta {
    pub name: String,
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    /// (start, end) byte offsets relative to the end of the header.
    pub data_offsets: (u64, u64),
}

impl TensorMeta {
    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }
}

pub fn serialize(
    tensors: &BTreeMap<String, Tensor>,
    metadata: &BTreeMap<String, String>,
) -> Vec<u8> {
    let mut header = String::from("{");
    let mut first = true;
    if !metadata.is_empty() {
        header.push_str("\"__metadata__\":{");
        for (i, (key, value)) in metadata.iter().enumerate() {
            if i > 0 {
                header.push(',');
            }
            header.push_str(&json_string(key));
            header.push(':');
            header.push_str(&json_string(value));
        }
        header.push('}');
        first = false;
    }
    let mut offset = 0u64;
    for (name, tensor) in tensors {
        if !first {
            header.push(',');
        }
        first = false;
        let nbytes = (tensor.element_count() * tensor.dtype().size()) as u64;
        header.push_str(&json_string(name));
        header.push_str(":{\"dtype\":");
        header.push_str(&json_string(tensor.dtype().as_str()));
        header.push_str(",\"shape\":[");
        for (i, dim) in tensor.shape().iter().enumerate() {
            if i > 0 {
                header.push(',');
            }
            header.push_str(&dim.to_string());
        }
        header.push_str("],\"data_offsets\":[");
        header.push_str(&offset.to_string());
        header.push(',');
        header.push_str(&(offset + nbytes).to_string());
        header.push_str("]}");
        offset += nbytes;
    }
    header.push('}');

    let header_bytes = header.into_bytes();
    let mut out = Vec::with_capacity(8 + header_bytes.len() + offset as usize);
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for tensor in tensors.values() {
        match tensor.data() {
            TensorData::F32(values) => {
                for v in values {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            TensorData::U8(values) => out.extend_from_slice(values),
        }
    }
    out
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

pub struct Parsed {
    pub tensors: BTreeMap<String, Tensor>,
    pub metadata: BTreeMap<String, String>,
}

pub fn deserialize(bytes: &[u8]) -> Result<Parsed> {
    if bytes.len() < 8 {
        return Err(Error::MalformedHeader {
            position: 0,
            reason: format!("file is {} bytes, need at least 8 for the header length", bytes.len()),
        });
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap());
    let data_start = HEADER_LEN_BYTES
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len() as u64)
        .ok_or(Error::MalformedHeader {
            position: 0,
            reason: format!(
                "declared header length {header_len} exceeds file size {}",
                bytes.len()
            ),
        })?;
    let header = &bytes[8..data_start as usize];
    let data = &bytes[data_start as usize..];

    let root: Value = serde_json::from_slice(header).map_err(|e| Error::MalformedHeader {
        position: HEADER_LEN_BYTES + e.column().saturating_sub(1) as u64,
        reason: format!("invalid JSON: {e}"),
    })?;
    let object = root.as_object().ok_or(Error::MalformedHeader {
        position: HEADER_LEN_BYTES,
        reason: "header is not a JSON object".into(),
    })?;

    let mut metadata = BTreeMap::new();
    let mut metas = Vec::new();
    for (name, entry) in object {
        if name == "__metadata__" {
            let map = entry.as_object().ok_or(Error::MalformedHeader {
                position: HEADER_LEN_BYTES,
                reason: "__metadata__ is not an object".into(),
            })?;
            for (key, value) in map {
                let s = value.as_str().ok_or(Error::MalformedHeader {
                    position: HEADER_LEN_BYTES,
                    reason: format!("__metadata__ entry '{key}' is not a string"),
                })?;
                metadata.insert(key.clone(), s.to_string());
            }
            continue;
        }
        metas.push(parse_meta(name, entry, data_start)?);
    }

    // Regions must tile the data section: ordered, non-overlapping, no gaps.
    metas.sort_by(|a, b| a.data_offsets.0.cmp(&b.data_offsets.0).then_with(|| a.name.cmp(&b.name)));
    let mut expected_start = 0u64;
    for meta in &metas {
        let (start, end) = meta.data_offsets;
        if start < expected_start {
            return Err(Error::OffsetOverlap {
                name: meta.name.clone(),
                position: data_start + start,
            });
        }
        if start > expected_start {
            return Err(Error::InvalidTensorMeta {
                name: meta.name.clone(),
                position: data_start + expected_start,
                reason: format!("gap before data region (expected start {expected_start}, got {start})"),
            });
        }
        if end > data.len() as u64 {
            return Err(Error::TruncatedData {
                name: meta.name.clone(),
                position: data_start + data.len() as u64,
            });
        }
        expected_start = end;
    }
    if expected_start != data.len() as u64 {
        return Err(Error::MalformedHeader {
            position: data_start + expected_start,
            reason: format!(
                "{} trailing bytes after the last data region",
                data.len() as u64 - expected_start
            ),
        });
    }

    let mut tensors = BTreeMap::new();
    for meta in metas {
        let (start, end) = meta.data_offsets;
        let raw = &data[start as usize..end as usize];
        let data = match meta.dtype {
            Dtype::F32 => TensorData::F32(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            Dtype::U8 => TensorData::U8(raw.to_vec()),
        };
        let tensor = Tensor::from_parts(meta.shape, data);
        if tensors.insert(meta.name.clone(), tensor).is_some() {
            return Err(Error::DuplicateTensor { name: meta.name });
        }
    }
    Ok(Parsed { tensors, metadata })
}

fn parse_meta(name: &str, entry: &Value, data_start: u64) -> Result<TensorMeta> {
    let bad = |reason: String| Error::InvalidTensorMeta {
        name: name.to_string(),
        position: HEADER_LEN_BYTES,
        reason,
    };
    let object = entry
        .as_object()
        .ok_or_else(|| bad("entry is not an object".into()))?;
    let dtype_str = object
        .get("dtype")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("missing or non-string 'dtype'".into()))?;
    let dtype = Dtype::parse(dtype_str).ok_or_else(|| Error::UnsupportedDtype {
        name: name.to_string(),
        dtype: dtype_str.to_string(),
    })?;
    let shape_val = object
        .get("shape")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing or non-array 'shape'".into()))?;
    let mut shape = Vec::with_capacity(shape_val.len());
    for dim in shape_val {
        let d = dim
            .as_u64()
            .ok_or_else(|| bad(format!("shape dimension {dim} is not a non-negative integer")))?;
        shape.push(d as usize);
    }
    let offsets = object
        .get("data_offsets")
        .and_then(Value::as_array)
        .filter(|a| a.len() == 2)
        .ok_or_else(|| bad("missing or malformed 'data_offsets'".into()))?;
    let start = offsets[0]
        .as_u64()
        .ok_or_else(|| bad("data_offsets start is not a non-negative integer".into()))?;
    let end = offsets[1]
        .as_u64()
        .ok_or_else(|| bad("data_offsets end is not a non-negative integer".into()))?;
    if end < start {
        return Err(bad(format!("data_offsets end {end} precedes start {start}")));
    }
    let expected = (shape.iter().product::<usize>() * dtype.size()) as u64;
    if end - start != expected {
        return Err(Error::InvalidTensorMeta {
            name: name.to_string(),
            position: data_start + start,
            reason: format!(
                "data region holds {} bytes but shape {:?} with dtype {} needs {expected}",
                end - start,
                shape,
                dtype.as_str()
            ),
        });
    }
    Ok(TensorMeta {
        name: name.to_string(),
        dtype,
        shape,
        data_offsets: (start, end),
    })
}
