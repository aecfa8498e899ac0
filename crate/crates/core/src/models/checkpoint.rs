//! Versioned checkpoint container: a JSON header describing named tensors
//! followed by raw little-endian 64-bit floats. Round-trips are bit-exact.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Model;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"SOCNNCK1";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: String,
    pub config: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    endianness: String,
    dtype: String,
    #[serde(flatten)]
    meta: CheckpointMeta,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the payload.
    offset: u64,
    /// Number of f64 values.
    len: u64,
}

/// Writes atomically: temp file in the same directory, then rename.
pub fn write_checkpoint<S: Scalar>(
    path: &Path,
    meta: &CheckpointMeta,
    tensors: &[(String, Tensor<S>)],
) -> Result<()> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0u64;
    for (name, t) in tensors {
        entries.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset,
            len: t.len() as u64,
        });
        offset += 8 * t.len() as u64;
    }
    let header = Header {
        version: 1,
        endianness: "little".into(),
        dtype: "f64".into(),
        meta: meta.clone(),
        tensors: entries,
    };
    let header_bytes = serde_json::to_vec(&header)?;

    let tmp = path.with_extension("ckpt.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(MAGIC)?;
        f.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        f.write_all(&header_bytes)?;
        for (_, t) in tensors {
            let mut buf = Vec::with_capacity(8 * t.len());
            for &v in t.data() {
                buf.extend_from_slice(&v.f64().to_le_bytes());
            }
            f.write_all(&buf)?;
        }
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_checkpoint<S: Scalar>(path: &Path) -> Result<(CheckpointMeta, Vec<(String, Tensor<S>)>)> {
    let mut f = fs::File::open(path)?;
    let header = read_header(&mut f)?;
    if header.endianness != "little" || header.dtype != "f64" {
        return Err(Error::Checkpoint(format!(
            "unsupported layout: endianness {:?}, dtype {:?}",
            header.endianness, header.dtype
        )));
    }
    let mut payload = Vec::new();
    f.read_to_end(&mut payload)?;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for e in &header.tensors {
        let start = e.offset as usize;
        let end = start + 8 * e.len as usize;
        if end > payload.len() {
            return Err(Error::Checkpoint(format!(
                "tensor {:?} extends past payload",
                e.name
            )));
        }
        let mut data = Vec::with_capacity(e.len as usize);
        for chunk in payload[start..end].chunks_exact(8) {
            let v = f64::from_le_bytes(chunk.try_into().unwrap());
            data.push(S::c(v));
        }
        tensors.push((e.name.clone(), Tensor::from_vec(&e.shape, data)?));
    }
    Ok((header.meta, tensors))
}

/// Reads only the header metadata.
pub fn peek_meta(path: &Path) -> Result<CheckpointMeta> {
    let mut f = fs::File::open(path)?;
    Ok(read_header(&mut f)?.meta)
}

fn read_header(f: &mut fs::File) -> Result<Header> {
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("file too short".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let mut len_bytes = [0u8; 8];
    f.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    if header_len > 64 << 20 {
        return Err(Error::Checkpoint("header length implausible".into()));
    }
    let mut header_bytes = vec![0u8; header_len];
    f.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)?;
    if header.version != 1 {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {}",
            header.version
        )));
    }
    Ok(header)
}

/// Copies stored tensors into a freshly built model, matching by name and
/// validating shapes. Errors when names are missing, shapes disagree, or the
/// checkpoint carries tensors the model does not use.
pub fn fill_from_tensors<S: Scalar>(
    model: &mut dyn Model<S>,
    tensors: &[(String, Tensor<S>)],
) -> Result<()> {
    let mut err = None;
    let mut used = 0usize;
    model.visit_state(&mut |name, t| {
        if err.is_some() {
            return;
        }
        match tensors.iter().find(|(n, _)| n == name) {
            Some((_, stored)) if stored.shape() == t.shape() => {
                *t = stored.clone();
                used += 1;
            }
            Some((_, stored)) => {
                err = Some(Error::Checkpoint(format!(
                    "tensor {:?} has shape {:?}, model expects {:?}",
                    name,
                    stored.shape(),
                    t.shape()
                )));
            }
            None => {
                err = Some(Error::Checkpoint(format!("tensor {:?} missing", name)));
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if used != tensors.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {} tensors, model uses {}",
            tensors.len(),
            used
        )));
    }
    Ok(())
}
