//! Model artifact container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic     8 bytes   "KDXMODEL"
//! version   u32
//! hdr_len   u64
//! header    hdr_len bytes of JSON (config, lifecycle flags, tensor shapes)
//! payload   every parameter tensor in canonical order, then the prototype,
//!           as raw f64 values
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExitableModel, ModelConfig};
use crate::error::{Error, Result};

pub const ARTIFACT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"KDXMODEL";

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    trained: bool,
    heads_calibrated: bool,
    prototype_finalized: bool,
    shapes: Vec<Vec<usize>>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Validation(format!("model artifact: {}", msg.into()))
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<model stream>", e)
}

pub fn write_model<W: Write>(mut w: W, model: &ExitableModel) -> Result<()> {
    let params = model.all_params();
    let header = Header {
        format_version: ARTIFACT_VERSION,
        config: model.config.clone(),
        trained: model.trained,
        heads_calibrated: model.heads_calibrated,
        prototype_finalized: model.prototype_finalized,
        shapes: params.iter().map(|t| t.shape().to_vec()).collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| bad(e.to_string()))?;
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&ARTIFACT_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(json.len() as u64).to_le_bytes()).map_err(io_err)?;
    w.write_all(&json).map_err(io_err)?;
    for t in params {
        for v in t.values() {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    for v in &model.prototype {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_model<R: Read>(mut r: R) -> Result<ExitableModel> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
    if &magic != MAGIC {
        return Err(bad("not a model artifact"));
    }
    let mut u32b = [0u8; 4];
    r.read_exact(&mut u32b).map_err(|_| bad("truncated version"))?;
    let version = u32::from_le_bytes(u32b);
    if version != ARTIFACT_VERSION {
        return Err(bad(format!(
            "format version {version}, this build reads {ARTIFACT_VERSION}"
        )));
    }
    let mut u64b = [0u8; 8];
    r.read_exact(&mut u64b).map_err(|_| bad("truncated header length"))?;
    let len = u64::from_le_bytes(u64b) as usize;
    if len > 1 << 24 {
        return Err(bad("header too large"));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(|_| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| bad(e.to_string()))?;
    if header.format_version != version {
        return Err(bad("header version disagrees with preamble"));
    }

    let mut model = ExitableModel::init(header.config)?;
    {
        let params = model.all_params_mut();
        if params.len() != header.shapes.len() {
            return Err(bad("tensor count does not match config"));
        }
        for (t, shape) in params.into_iter().zip(&header.shapes) {
            if t.shape() != shape.as_slice() {
                return Err(bad(format!(
                    "tensor shape {shape:?}, config implies {:?}",
                    t.shape()
                )));
            }
            for v in t.values_mut() {
                r.read_exact(&mut u64b).map_err(|_| bad("truncated parameters"))?;
                *v = f64::from_le_bytes(u64b);
            }
        }
    }
    for v in &mut model.prototype {
        r.read_exact(&mut u64b).map_err(|_| bad("truncated prototype"))?;
        *v = f64::from_le_bytes(u64b);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(io_err)? != 0 {
        return Err(bad("trailing bytes"));
    }
    model.trained = header.trained;
    model.heads_calibrated = header.heads_calibrated;
    model.prototype_finalized = header.prototype_finalized;
    Ok(model)
}

pub fn save_model(path: impl AsRef<Path>, model: &ExitableModel) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_model(BufWriter::new(f), model)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ExitableModel> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ExitableModel {
        ExitableModel::init(ModelConfig {
            input_dim: 5,
            hidden_dim: 6,
            depth: 3,
            exit_depths: vec![1, 3],
            num_classes: 5,
            seed: 99,
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut m = model();
        m.mark_trained();
        m.set_prototype(&[0.1, 0.2, 0.3, 0.25, 0.15]).unwrap();
        let mut buf = Vec::new();
        write_model(&mut buf, &m).unwrap();
        let back = read_model(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.parameter_checksum(), m.parameter_checksum());
    }

    #[test]
    fn rejects_corruption() {
        let m = model();
        let mut buf = Vec::new();
        write_model(&mut buf, &m).unwrap();

        let mut wrong_version = buf.clone();
        wrong_version[8] = 9;
        assert!(read_model(wrong_version.as_slice()).is_err());

        let truncated = &buf[..buf.len() - 3];
        assert!(read_model(truncated).is_err());

        let mut trailing = buf.clone();
        trailing.push(0);
        assert!(read_model(trailing.as_slice()).is_err());

        assert!(read_model(&b"NOTAMODL"[..]).is_err());
    }
}
