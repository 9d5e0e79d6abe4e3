//! Parameter checkpoint files.
//!
//! Layout:
//!
//! ```text
//! b"NSTKCKPT"            8-byte magic
//! u64 (little endian)    header length in bytes
//! header                 UTF-8 JSON, see `Header`
//! data                   f64 little-endian values, concatenated
//! ```
//!
//! Each array entry in the header gives its name, shape and the byte offset
//! of its first value relative to the start of the data section.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Shape;
use crate::controller::{Model, ModelConfig, Param, Params};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"NSTKCKPT";

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    arrays: Vec<ArrayEntry>,
}

pub fn write_model<W: Write>(mut w: W, model: &Model) -> Result<()> {
    let mut offset = 0u64;
    let arrays = model
        .params
        .entries
        .iter()
        .map(|p| {
            let e = ArrayEntry {
                name: p.name.clone(),
                shape: p.shape.dims(),
                offset,
            };
            offset += 8 * p.values.len() as u64;
            e
        })
        .collect();
    let header = serde_json::to_vec(&Header {
        config: model.config.clone(),
        arrays,
    })?;
    w.write_all(MAGIC)?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    for p in &model.params.entries {
        for v in &p.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_model<R: Read>(mut r: R) -> Result<Model> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header)?;
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;

    let mut entries = Vec::with_capacity(header.arrays.len());
    for a in header.arrays {
        let shape = Shape::from_dims(&a.shape)
            .ok_or_else(|| Error::Checkpoint(format!("unsupported rank for {}", a.name)))?;
        let start = a.offset as usize;
        let end = start + 8 * shape.numel();
        let bytes = data
            .get(start..end)
            .ok_or_else(|| Error::Checkpoint(format!("array {} out of bounds", a.name)))?;
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        entries.push(Param {
            name: a.name,
            shape,
            values,
        });
    }
    Model::new(header.config, Params { entries })
}

pub fn save(path: impl AsRef<Path>, model: &Model) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_model(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    let f = std::fs::File::open(path)?;
    read_model(std::io::BufReader::new(f))
}
