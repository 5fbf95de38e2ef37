//! Binary checkpoint layout:
//!
//! ```text
//! magic        8 bytes  "MRENC001"
//! header_len   u32 LE
//! header       JSON: {"config": EncoderConfig, "tensors": [{"name", "shape"}], "vocab": [..] | null, "tag": ".." | null}
//! param_count  u64 LE
//! params       param_count x f64 LE, tensors concatenated in header order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{EncoderModel, EncoderParams};
use super::vocab::TokenVocab;
use super::EncoderConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MRENC001";

#[derive(Serialize, Deserialize)]
struct Header {
    config: EncoderConfig,
    tensors: Vec<TensorHeader>,
    vocab: Option<TokenVocab>,
    #[serde(default)]
    tag: Option<String>,
}

/// A decoded checkpoint. `tag` is free-form provenance text.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: EncoderModel,
    pub vocab: Option<TokenVocab>,
    pub tag: Option<String>,
}

#[derive(Serialize, Deserialize, PartialEq)]
struct TensorHeader {
    name: String,
    shape: [usize; 2],
}

fn io_err(e: std::io::Error) -> Error {
    Error::Data(format!("checkpoint i/o: {e}"))
}

pub fn write_checkpoint<W: Write>(
    model: &EncoderModel,
    vocab: Option<&TokenVocab>,
    tag: Option<&str>,
    mut out: W,
) -> Result<()> {
    let header = Header {
        config: model.config().clone(),
        tensors: EncoderParams::layout(model.config())
            .into_iter()
            .map(|i| TensorHeader {
                name: i.name,
                shape: [i.shape.0, i.shape.1],
            })
            .collect(),
        vocab: vocab.cloned(),
        tag: tag.map(str::to_string),
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(CHECKPOINT_MAGIC).map_err(io_err)?;
    out.write_all(&(json.len() as u32).to_le_bytes()).map_err(io_err)?;
    out.write_all(&json).map_err(io_err)?;
    let tensors = model.params().tensors();
    let count: usize = tensors.iter().map(|t| t.len()).sum();
    out.write_all(&(count as u64).to_le_bytes()).map_err(io_err)?;
    for t in tensors {
        for v in t {
            out.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(io_err)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Data("not an encoder checkpoint (bad magic)".into()));
    }
    let mut len4 = [0u8; 4];
    input.read_exact(&mut len4).map_err(io_err)?;
    let mut json = vec![0u8; u32::from_le_bytes(len4) as usize];
    input.read_exact(&mut json).map_err(io_err)?;
    let header: Header = serde_json::from_slice(&json)?;
    header.config.validate()?;
    let layout = EncoderParams::layout(&header.config);
    let expected: Vec<TensorHeader> = layout
        .iter()
        .map(|i| TensorHeader {
            name: i.name.clone(),
            shape: [i.shape.0, i.shape.1],
        })
        .collect();
    if expected != header.tensors {
        return Err(Error::Data("checkpoint tensor table does not match its config".into()));
    }
    let mut len8 = [0u8; 8];
    input.read_exact(&mut len8).map_err(io_err)?;
    let count = u64::from_le_bytes(len8) as usize;
    let mut params = EncoderParams::zeros(&header.config);
    if count != params.parameter_count() {
        return Err(Error::Data(format!(
            "checkpoint holds {count} parameters, config needs {}",
            params.parameter_count()
        )));
    }
    let mut buf = [0u8; 8];
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            input.read_exact(&mut buf).map_err(io_err)?;
            *v = f64::from_le_bytes(buf);
        }
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest).map_err(io_err)? != 0 {
        return Err(Error::Data("trailing bytes after checkpoint parameters".into()));
    }
    Ok(Checkpoint {
        model: EncoderModel::from_parts(header.config, params)?,
        vocab: header.vocab,
        tag: header.tag,
    })
}

pub fn save_checkpoint(model: &EncoderModel, vocab: Option<&TokenVocab>, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(model, vocab, None, BufWriter::new(f))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(f))
}
