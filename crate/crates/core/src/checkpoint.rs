//! Checkpoint container: a text manifest followed by raw little-endian
//! `f64` tensors.
//!
//! ```text
//! shgt-checkpoint 1
//! meta <key> <value>
//! param <name> <rows> <cols> <byte offset>
//! end <payload bytes>
//! <payload>
//! ```
//!
//! Offsets are relative to the first payload byte; tensors are row-major.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Result, ShgtError};
use crate::model::ParameterSet;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "shgt-checkpoint";

#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub shape: (usize, usize),
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub metadata: BTreeMap<String, String>,
    pub entries: Vec<TensorEntry>,
    pub tensors: Vec<Array2<f64>>,
}

fn bad(msg: impl Into<String>) -> ShgtError {
    ShgtError::Checkpoint(msg.into())
}

pub fn encode_checkpoint(
    metadata: &BTreeMap<String, String>,
    params: &ParameterSet,
) -> Result<Vec<u8>> {
    let mut manifest = format!("{MAGIC} {FORMAT_VERSION}\n");
    for (k, v) in metadata {
        if k.is_empty() || k.contains(char::is_whitespace) || v.contains('\n') {
            return Err(bad(format!("metadata entry {k:?} cannot be encoded")));
        }
        manifest.push_str(&format!("meta {k} {v}\n"));
    }
    let mut payload = Vec::with_capacity(params.num_parameters() * 8);
    for (name, t) in params.tensors() {
        manifest.push_str(&format!(
            "param {name} {} {} {}\n",
            t.nrows(),
            t.ncols(),
            payload.len()
        ));
        for v in t.iter() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    manifest.push_str(&format!("end {}\n", payload.len()));
    let mut out = manifest.into_bytes();
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut pos = 0;
    let mut next_line = || -> Result<&str> {
        let rest = &bytes[pos..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("truncated manifest"))?;
        pos += nl + 1;
        std::str::from_utf8(&rest[..nl]).map_err(|_| bad("manifest is not UTF-8"))
    };

    let header = next_line()?;
    match header.split_once(' ') {
        Some((MAGIC, v)) if v == FORMAT_VERSION.to_string() => {}
        Some((MAGIC, v)) => return Err(bad(format!("unsupported format version {v}"))),
        _ => return Err(bad("not a checkpoint file")),
    }

    let mut metadata = BTreeMap::new();
    let mut entries = Vec::new();
    let payload_len = loop {
        let line = next_line()?;
        let (tag, rest) = line.split_once(' ').unwrap_or((line, ""));
        match tag {
            "meta" => {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                metadata.insert(k.to_string(), v.to_string());
            }
            "param" => {
                let f: Vec<&str> = rest.split(' ').collect();
                let parse = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|_| bad(format!("bad number {s:?}")))
                };
                if f.len() != 4 {
                    return Err(bad(format!("malformed param line {line:?}")));
                }
                entries.push(TensorEntry {
                    name: f[0].to_string(),
                    shape: (parse(f[1])?, parse(f[2])?),
                    offset: parse(f[3])?,
                });
            }
            "end" => {
                break rest
                    .parse::<usize>()
                    .map_err(|_| bad("malformed end line"))?
            }
            other => return Err(bad(format!("unknown manifest entry {other:?}"))),
        }
    };

    let payload = &bytes[pos..];
    if payload.len() != payload_len {
        return Err(bad(format!(
            "payload is {} bytes, manifest declares {payload_len}",
            payload.len()
        )));
    }
    let mut tensors = Vec::with_capacity(entries.len());
    let mut expected_offset = 0;
    for e in &entries {
        let len = e.shape.0 * e.shape.1 * 8;
        if e.offset != expected_offset || e.offset + len > payload.len() {
            return Err(bad(format!("tensor {} has inconsistent offset", e.name)));
        }
        let values: Vec<f64> = payload[e.offset..e.offset + len]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        tensors.push(Array2::from_shape_vec(e.shape, values).expect("length matches shape"));
        expected_offset += len;
    }
    if expected_offset != payload.len() {
        return Err(bad("payload has trailing bytes"));
    }
    Ok(Checkpoint {
        metadata,
        entries,
        tensors,
    })
}

impl Checkpoint {
    /// Copies tensors into a parameter set shaped like `template`. Names,
    /// order and shapes must match exactly.
    pub fn into_params(self, template: &ParameterSet) -> Result<ParameterSet> {
        let expected = template.tensors();
        if expected.len() != self.entries.len() {
            return Err(bad(format!(
                "checkpoint holds {} tensors, model expects {}",
                self.entries.len(),
                expected.len()
            )));
        }
        for ((name, t), e) in expected.iter().zip(&self.entries) {
            if *name != e.name || t.dim() != e.shape {
                return Err(bad(format!(
                    "tensor {} {:?} does not match expected {name} {:?}",
                    e.name,
                    e.shape,
                    t.dim()
                )));
            }
        }
        let mut params = template.clone();
        for ((_, slot), t) in params.tensors_mut().into_iter().zip(self.tensors) {
            *slot = t;
        }
        Ok(params)
    }
}

/// Writes to a sibling temp file and renames it into place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| ShgtError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        ShgtError::io(path, e)
    })
}

pub fn write_checkpoint(
    path: impl AsRef<Path>,
    metadata: &BTreeMap<String, String>,
    params: &ParameterSet,
) -> Result<()> {
    write_atomic(path, &encode_checkpoint(metadata, params)?)
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| ShgtError::io(path, e))?;
    decode_checkpoint(&bytes)
}
