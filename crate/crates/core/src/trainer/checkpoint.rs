//! Versioned binary checkpoints (little-endian).
//!
//! Layout: magic `MMCK`, version u32 (= 1), serialized ModelConfig (classes,
//! d_model, tcn_blocks, kernel, dilation count + dilations, window, vit_dim,
//! resnet_dim, audio_dim, text_dim, fused_dim as u32; dropout as f32), then
//! every parameter tensor in the canonical order, each as ndim u32, dims
//! u32×ndim, values f32.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

fn push_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn config_bytes(config: &ModelConfig) -> Vec<u8> {
    let mut buf = Vec::new();
    push_u32(&mut buf, config.classes);
    push_u32(&mut buf, config.d_model);
    push_u32(&mut buf, config.tcn_blocks);
    push_u32(&mut buf, config.kernel);
    push_u32(&mut buf, config.dilations.len());
    for &d in &config.dilations {
        push_u32(&mut buf, d);
    }
    push_u32(&mut buf, config.window);
    push_u32(&mut buf, config.vit_dim);
    push_u32(&mut buf, config.resnet_dim);
    push_u32(&mut buf, config.audio_dim);
    push_u32(&mut buf, config.text_dim);
    push_u32(&mut buf, config.fused_dim);
    buf.extend_from_slice(&config.dropout.to_le_bytes());
    buf
}

/// FNV-1a over the serialized config; used to compare configurations.
pub fn config_hash(config: &ModelConfig) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in config_bytes(config) {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn save_checkpoint(params: &ModelParams<f32>, config: &ModelConfig, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&config_bytes(config));
    for tensor in params.flat() {
        push_u32(&mut buf, tensor.shape().len());
        for &d in tensor.shape() {
            push_u32(&mut buf, d);
        }
        for v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Corrupt(format!(
                "{}: truncated at byte {} (wanted {n} more)",
                self.path, self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams<f32>, ModelConfig)> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
        path: path.display().to_string(),
    };

    let magic = cur.take(4)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {:?}, expected {:?}",
            path.display(),
            magic,
            CHECKPOINT_MAGIC
        )));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported checkpoint version {version}",
            path.display()
        )));
    }

    let classes = cur.u32()? as usize;
    let d_model = cur.u32()? as usize;
    let tcn_blocks = cur.u32()? as usize;
    let kernel = cur.u32()? as usize;
    let n_dil = cur.u32()? as usize;
    if n_dil > 1024 {
        return Err(Error::Corrupt(format!("{}: absurd dilation count {n_dil}", path.display())));
    }
    let mut dilations = Vec::with_capacity(n_dil);
    for _ in 0..n_dil {
        dilations.push(cur.u32()? as usize);
    }
    let window = cur.u32()? as usize;
    let vit_dim = cur.u32()? as usize;
    let resnet_dim = cur.u32()? as usize;
    let audio_dim = cur.u32()? as usize;
    let text_dim = cur.u32()? as usize;
    let fused_dim = cur.u32()? as usize;
    let dropout = cur.f32()?;
    let config = ModelConfig {
        classes,
        d_model,
        tcn_blocks,
        kernel,
        dilations,
        window,
        dropout,
        vit_dim,
        resnet_dim,
        audio_dim,
        text_dim,
        fused_dim,
    };
    config.validate()?;

    let mut params = ModelParams::<f32>::zeros(&config)?;
    for tensor in params.flat_mut() {
        let ndim = cur.u32()? as usize;
        if ndim != tensor.shape().len() {
            return Err(Error::Corrupt(format!(
                "{}: tensor rank {ndim} does not match expected {:?}",
                path.display(),
                tensor.shape()
            )));
        }
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(cur.u32()? as usize);
        }
        if dims != tensor.shape() {
            return Err(Error::Corrupt(format!(
                "{}: tensor shape {:?} does not match expected {:?}",
                path.display(),
                dims,
                tensor.shape()
            )));
        }
        for v in tensor.data_mut() {
            *v = cur.f32()?;
        }
        if tensor.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Corrupt(format!(
                "{}: non-finite parameter value in tensor of shape {:?}",
                path.display(),
                tensor.shape()
            )));
        }
    }
    if cur.pos != bytes.len() {
        return Err(Error::Corrupt(format!(
            "{}: {} trailing bytes after parameters",
            path.display(),
            bytes.len() - cur.pos
        )));
    }
    Ok((params, config))
}

/// Loads a checkpoint that must have been produced with `expected`'s exact
/// configuration (compared by config hash).
pub fn load_checkpoint_for_resume(
    path: &Path,
    expected: &ModelConfig,
) -> Result<ModelParams<f32>> {
    let (params, config) = load_checkpoint(path)?;
    if config_hash(&config) != config_hash(expected) {
        return Err(Error::Format(format!(
            "{}: checkpoint config hash {:016x} does not match expected {:016x}",
            path.display(),
            config_hash(&config),
            config_hash(expected)
        )));
    }
    Ok(params)
}
