//! Parameter checkpoints: a single binary file with a versioned header.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   b"PQLBCKPT"
//! version    u32       currently 1
//! config     6 × u32   vocab_size, d_model, n_layers, n_heads, d_ff, max_seq_len
//! lora flag  u8        0 = absent; 1 = present, followed by:
//!              rank     u32
//!              kv, mlp  u8 each (target flags)
//!              scaling  u8 (0 = default) + f64 when explicit
//! meta       u32 len + UTF-8 JSON object (string → string)
//! count      u32       number of named tensors
//! tensor     repeated:
//!   name       u32 len + UTF-8 bytes
//!   trainable  u8
//!   ndim       u32
//!   dims       ndim × u32
//!   data       Π dims × f64
//! ```
//!
//! Tensors whose name starts with `opt.` are optimizer accumulators (see
//! [`crate::optim::Optimizer::to_named_tensors`]); everything else is a model
//! parameter. The `meta` block carries run bookkeeping such as the training
//! step and optimizer kind.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{LoraConfig, LoraTargets, ModelConfig, Parameters};
use crate::numerics::Tensor;

const MAGIC: &[u8; 8] = b"PQLBCKPT";
const VERSION: u32 = 1;

pub type Meta = BTreeMap<String, String>;

pub fn save_checkpoint(
    path: &Path,
    params: &Parameters,
    extra: &[(String, Tensor)],
    meta: &Meta,
) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    put_u32(&mut w, VERSION)?;
    let c = &params.config;
    for v in [
        c.vocab_size,
        c.d_model,
        c.n_layers,
        c.n_heads,
        c.d_ff,
        c.max_seq_len,
    ] {
        put_u32(&mut w, v as u32)?;
    }
    match &params.lora {
        None => w.write_all(&[0u8])?,
        Some(l) => {
            w.write_all(&[1u8])?;
            put_u32(&mut w, l.rank as u32)?;
            w.write_all(&[u8::from(l.targets.kv), u8::from(l.targets.mlp)])?;
            match l.scaling {
                None => w.write_all(&[0u8])?,
                Some(s) => {
                    w.write_all(&[1u8])?;
                    w.write_all(&s.to_le_bytes())?;
                }
            }
        }
    }
    let meta_json = serde_json::to_string(meta)
        .map_err(|e| Error::Checkpoint(format!("meta encode: {e}")))?;
    put_u32(&mut w, meta_json.len() as u32)?;
    w.write_all(meta_json.as_bytes())?;

    let total = params.iter().count() + extra.len();
    put_u32(&mut w, total as u32)?;
    for (name, tensor) in params.iter() {
        put_tensor(&mut w, name, tensor, params.is_trainable(name))?;
    }
    for (name, tensor) in extra {
        put_tensor(&mut w, name, tensor, false)?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`save_checkpoint`]: parameters, optimizer/auxiliary tensors
/// (names starting with `opt.`), and the meta map.
pub fn load_checkpoint(path: &Path) -> Result<(Parameters, BTreeMap<String, Tensor>, Meta)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic in {}: not a checkpoint file",
            path.display()
        )));
    }
    let version = get_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let dims: Vec<usize> = (0..6)
        .map(|_| get_u32(&mut r).map(|v| v as usize))
        .collect::<Result<_>>()?;
    let config = ModelConfig {
        vocab_size: dims[0],
        d_model: dims[1],
        n_layers: dims[2],
        n_heads: dims[3],
        d_ff: dims[4],
        max_seq_len: dims[5],
    };
    let lora = match get_u8(&mut r)? {
        0 => None,
        _ => {
            let rank = get_u32(&mut r)? as usize;
            let kv = get_u8(&mut r)? != 0;
            let mlp = get_u8(&mut r)? != 0;
            let scaling = match get_u8(&mut r)? {
                0 => None,
                _ => {
                    let mut b = [0u8; 8];
                    r.read_exact(&mut b)?;
                    Some(f64::from_le_bytes(b))
                }
            };
            Some(LoraConfig {
                rank,
                targets: LoraTargets { kv, mlp },
                scaling,
            })
        }
    };
    let meta_len = get_u32(&mut r)? as usize;
    let mut meta_buf = vec![0u8; meta_len];
    r.read_exact(&mut meta_buf)?;
    let meta: Meta = serde_json::from_slice(&meta_buf)
        .map_err(|e| Error::Checkpoint(format!("meta decode: {e}")))?;

    let count = get_u32(&mut r)? as usize;
    let mut model_tensors: BTreeMap<String, Tensor> = BTreeMap::new();
    let mut extra: BTreeMap<String, Tensor> = BTreeMap::new();
    let mut trainable: BTreeSet<String> = BTreeSet::new();
    for _ in 0..count {
        let (name, tensor, is_trainable) = get_tensor(&mut r)?;
        if name.starts_with("opt.") {
            extra.insert(name, tensor);
        } else {
            if is_trainable {
                trainable.insert(name.clone());
            }
            model_tensors.insert(name, tensor);
        }
    }

    let mut params = crate::model::init_params(&config, 0)?;
    let expected: Vec<String> = params.names().cloned().collect();
    for name in &expected {
        let loaded = model_tensors.remove(name).ok_or_else(|| {
            Error::Checkpoint(format!("checkpoint missing parameter `{name}`"))
        })?;
        if loaded.shape != params.get(name).shape {
            return Err(Error::Checkpoint(format!(
                "shape mismatch for `{name}`: {:?} vs {:?}",
                loaded.shape,
                params.get(name).shape
            )));
        }
        *params.get_mut(name) = loaded;
    }
    // Remaining tensors are LoRA adapters (or unknown, which is an error).
    for (name, tensor) in model_tensors {
        if !name.contains(".lora_") {
            return Err(Error::Checkpoint(format!("unexpected tensor `{name}`")));
        }
        params.insert(name, tensor);
    }
    params.lora = lora;
    params.set_trainable(trainable);
    params.check_finite().map_err(|_| {
        Error::Checkpoint(format!("{}: non-finite parameter values", path.display()))
    })?;
    Ok((params, extra, meta))
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn put_tensor<W: Write>(w: &mut W, name: &str, tensor: &Tensor, trainable: bool) -> Result<()> {
    put_u32(w, name.len() as u32)?;
    w.write_all(name.as_bytes())?;
    w.write_all(&[u8::from(trainable)])?;
    put_u32(w, tensor.shape.len() as u32)?;
    for &d in &tensor.shape {
        put_u32(w, d as u32)?;
    }
    for v in &tensor.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn get_tensor<R: Read>(r: &mut R) -> Result<(String, Tensor, bool)> {
    let name_len = get_u32(r)? as usize;
    let mut name_buf = vec![0u8; name_len];
    r.read_exact(&mut name_buf)?;
    let name = String::from_utf8(name_buf)
        .map_err(|e| Error::Checkpoint(format!("bad tensor name: {e}")))?;
    let trainable = get_u8(r)? != 0;
    let ndim = get_u32(r)? as usize;
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(get_u32(r)? as usize);
    }
    let numel: usize = shape.iter().product();
    let mut data = vec![0.0f64; numel];
    let mut buf = [0u8; 8];
    for v in data.iter_mut() {
        r.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    Ok((name, Tensor::new(shape, data), trainable))
}
