//! Parameter checkpoint files.
//!
//! ```text
//! offset  size  content
//! 0       8     magic  b"XGRPARAM"
//! 8       4     format version, u32 little-endian (currently 1)
//! 12      4     header length H in bytes, u32 little-endian
//! 16      H     UTF-8 JSON header: {"model": <json>, "layout": [{"name", "shape", "offset"}, ...]}
//! 16+H    8*N   parameter values, f64 little-endian, N = total layout extent
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Layout, ParamVector};

const MAGIC: &[u8; 8] = b"XGRPARAM";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    #[serde(default)]
    model: serde_json::Value,
    layout: Layout,
}

/// Parameters plus a free-form model description.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: serde_json::Value,
    pub params: ParamVector,
}

pub fn write_checkpoint<W: Write>(mut w: W, model: &serde_json::Value, params: &ParamVector) -> Result<()> {
    let header = serde_json::to_vec(&Header {
        model: model.clone(),
        layout: (**params.layout()).clone(),
    })?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for v in params.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let bad = |msg: String| Error::Checkpoint {
        path: Default::default(),
        msg,
    };
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    r.read_exact(&mut word)?;
    let mut header = vec![0u8; u32::from_le_bytes(word) as usize];
    r.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header)?;
    header.layout.validate()?;
    let n = header.layout.total();
    let mut bytes = vec![0u8; 8 * n];
    r.read_exact(&mut bytes)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(bad("trailing bytes after parameter values".into()));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(Checkpoint {
        model: header.model,
        params: ParamVector::new(Arc::new(header.layout), values)?,
    })
}

pub fn save_checkpoint(path: &Path, model: &serde_json::Value, params: &ParamVector) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), model, params)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_checkpoint(BufReader::new(File::open(path)?)).map_err(|e| match e {
        Error::Checkpoint { msg, .. } => Error::Checkpoint {
            path: path.to_path_buf(),
            msg,
        },
        other => other,
    })
}
